"""Translate flight logs into evidential formats: flat CSV and a KML track.

Numeric columns are rendered by exact fixed-point division, never through
floats, so output is byte-reproducible and re-parsing reproduces the
original wire integers at the stated precisions.
"""

from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

from .flightlog import (
    AttitudePayload,
    BatteryPayload,
    EventPayload,
    FlightLog,
    GpsPayload,
    MotorPayload,
)

CSV_HEADER = (
    "frame_index,timestamp_ms,record_type,lat_deg,lon_deg,alt_m,fix,num_sats,"
    "rpm1,rpm2,rpm3,rpm4,capacity_pct,voltage_mv,temp_c,pitch_deg,roll_deg,"
    "yaw_deg,event_code,event_message"
)

KML_NAMESPACE = "http://www.opengis.net/kml/2.2"


def fixed_point(value: int, scale: int, decimals: int) -> str:
    """Render value/scale with exactly ``decimals`` fractional digits."""
    sign = "-" if value < 0 else ""
    magnitude = abs(value)
    return f"{sign}{magnitude // scale}.{magnitude % scale:0{decimals}d}"


def _row_for(index: int, frame) -> list[str]:
    row = [""] * 20
    row[0] = str(index)
    row[1] = str(frame.timestamp_ms)
    row[2] = frame.record_type.name
    p = frame.payload
    if isinstance(p, GpsPayload):
        row[3] = fixed_point(p.lat_e7, 10**7, 7)
        row[4] = fixed_point(p.lon_e7, 10**7, 7)
        row[5] = fixed_point(p.alt_mm, 1000, 3)
        row[6] = str(p.fix)
        row[7] = str(p.num_sats)
    elif isinstance(p, MotorPayload):
        row[8:12] = [str(r) for r in p.rpm]
    elif isinstance(p, BatteryPayload):
        row[12] = str(p.capacity_pct)
        row[13] = str(p.voltage_mv)
        row[14] = fixed_point(p.temp_centi_c, 100, 2)
    elif isinstance(p, AttitudePayload):
        row[15] = fixed_point(p.pitch_cdeg, 100, 2)
        row[16] = fixed_point(p.roll_cdeg, 100, 2)
        row[17] = fixed_point(p.yaw_cdeg, 100, 2)
    elif isinstance(p, EventPayload):
        row[18] = str(p.code)
        row[19] = p.message
    return row


def to_csv(log: FlightLog) -> bytes:
    """One row per frame; columns foreign to the frame's type stay empty."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    for index, frame in enumerate(log.frames):
        writer.writerow(_row_for(index, frame))
    return buf.getvalue().encode("utf-8")


def to_kml(log: FlightLog, name: str = "flight-log") -> bytes:
    """KML LineString of every GPS frame with a fix, in frame order.

    Coordinates are longitude,latitude,altitude (KML axis order), absolute
    altitude mode.  A log with no fixes still yields a valid document.
    """
    coords = []
    for frame in log.frames:
        p = frame.payload
        if isinstance(p, GpsPayload) and p.fix != 0:
            coords.append(
                f"{fixed_point(p.lon_e7, 10**7, 7)},"
                f"{fixed_point(p.lat_e7, 10**7, 7)},"
                f"{fixed_point(p.alt_mm, 1000, 3)}"
            )
    document = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<kml xmlns="{KML_NAMESPACE}">\n'
        "  <Document>\n"
        f"    <name>{escape(name)}</name>\n"
        "    <Placemark>\n"
        "      <name>Flight path</name>\n"
        "      <LineString>\n"
        "        <altitudeMode>absolute</altitudeMode>\n"
        f"        <coordinates>{' '.join(coords)}</coordinates>\n"
        "      </LineString>\n"
        "    </Placemark>\n"
        "  </Document>\n"
        "</kml>\n"
    )
    return document.encode("utf-8")


def kml_coordinate_count(kml_bytes: bytes) -> int:
    """Count coordinate triples in a KML document (test/verification aid)."""
    text = kml_bytes.decode("utf-8")
    start = text.index("<coordinates>") + len("<coordinates>")
    end = text.index("</coordinates>")
    body = text[start:end].strip()
    return len(body.split()) if body else 0
