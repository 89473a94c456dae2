"""Deterministic synthetic flights and packed SD-card images.

These are desk-scale stand-ins for real seized media: physically plausible
telemetry, card images with a flat sequential layout, and the
last-log-unclosed condition that real recorders produce on power loss.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import CapacityExceeded, DroneTraceError, InvalidParams
from .flightlog import (
    AttitudePayload,
    BatteryPayload,
    FOOTER_LEN,
    FlightFrame,
    GpsPayload,
    MotorPayload,
    parse_strict,
)

SECTOR = 512
SLOT_SLACK = 16  # spare bytes after each packed file; room to close a log in place
TABLE_MAGIC = "DTCARD v1"

BASE_LAT_E7 = 515074000  # 51.5074 deg
BASE_LON_E7 = -1278000  # -0.1278 deg
MAX_STEP_M = 25.0
MAX_RPM = 12000
METERS_PER_DEG_LAT = 111320.0


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    length: int


def synth_flight(seed: int, duration_s: int, rate_hz: int) -> list[FlightFrame]:
    """Deterministic plausible flight: 4 frames (GPS, MOTOR, BATTERY,
    ATTITUDE) per tick.

    Consecutive GPS fixes stay within 25 m at 1 Hz (proportionally closer at
    higher rates), battery never increases, motors stay in [0, 12000] rpm
    and attitude within +/-180 degrees.  Identical arguments give identical
    frames.
    """
    if duration_s < 0 or rate_hz < 1:
        raise InvalidParams(f"duration_s={duration_s}, rate_hz={rate_hz}")
    rng = random.Random(seed)
    frames: list[FlightFrame] = []
    ticks = duration_s * rate_hz
    if ticks == 0:
        return frames

    lat_e7 = float(BASE_LAT_E7 + rng.randrange(-100000, 100000))
    lon_e7 = float(BASE_LON_E7 + rng.randrange(-100000, 100000))
    heading = rng.uniform(0, 2 * math.pi)
    alt_mm = 0.0
    battery = 100
    voltage = 16000
    interval_ms = 1000 // rate_hz

    for tick in range(ticks):
        ts = tick * max(interval_ms, 1)
        fix = 0 if tick < 2 else 1
        num_sats = min(4 + tick, 14)

        if fix:
            speed = rng.uniform(0.0, 0.8 * MAX_STEP_M)  # m/s, bounded walk
            heading += rng.uniform(-0.4, 0.4)
            step = speed / rate_hz
            dlat_deg = step * math.cos(heading) / METERS_PER_DEG_LAT
            east_scale = METERS_PER_DEG_LAT * math.cos(math.radians(lat_e7 / 1e7))
            dlon_deg = step * math.sin(heading) / east_scale
            lat_e7 += dlat_deg * 1e7
            lon_e7 += dlon_deg * 1e7
            alt_mm = max(0.0, alt_mm + rng.uniform(-500, 1500))
        frames.append(
            FlightFrame(
                ts,
                GpsPayload(
                    lat_e7=int(lat_e7),
                    lon_e7=int(lon_e7),
                    alt_mm=int(alt_mm),
                    fix=fix,
                    num_sats=num_sats,
                ),
            )
        )

        hover = 5500 + int(1500 * math.sin(tick / 7.0))
        rpm = tuple(
            max(0, min(MAX_RPM, hover + rng.randrange(-400, 400))) for _ in range(4)
        )
        frames.append(FlightFrame(ts, MotorPayload(rpm)))

        if tick and tick % max(1, rate_hz) == 0 and battery > 1:
            battery -= rng.randrange(0, 2)
            voltage = max(12000, voltage - rng.randrange(0, 20))
        frames.append(
            FlightFrame(
                ts,
                BatteryPayload(
                    capacity_pct=battery,
                    voltage_mv=voltage,
                    temp_centi_c=2500 + rng.randrange(0, 800),
                ),
            )
        )

        frames.append(
            FlightFrame(
                ts,
                AttitudePayload(
                    pitch_cdeg=rng.randrange(-1500, 1500),
                    roll_cdeg=rng.randrange(-1500, 1500),
                    yaw_cdeg=int(math.degrees(heading) * 100) % 36000 - 18000,
                ),
            )
        )
    return frames


def _align(value: int, boundary: int) -> int:
    return (value + boundary - 1) // boundary * boundary


def _strip_footer(data: bytes) -> bytes:
    """Remove a valid footer, simulating a log left open by power loss."""
    try:
        parse_strict(data)
    except DroneTraceError:
        return data  # already unclosed; leave as-is
    return data[:-FOOTER_LEN]


def pack_card(
    logs: list[tuple[str, bytes]],
    media: list[tuple[str, bytes]],
    size_bytes: int,
    unclosed_last: bool = False,
) -> tuple[bytes, str]:
    """Pack files into a raw card image with a flat sequential layout.

    Offset 0 holds a plaintext allocation table (the as-packed listing);
    files follow, sector-aligned with slack after each one.  This is not a
    real filesystem.  With ``unclosed_last`` the final log's footer is
    stripped before placement.  Returns the image bytes and a layout
    manifest of ``name,offset,length`` lines.
    """
    entries = list(logs)
    if unclosed_last and entries:
        name, data = entries[-1]
        entries[-1] = (name, _strip_footer(data))
    entries += list(media)

    # table region sized before offsets are known; 128 bytes per line is
    # a safe upper bound for name plus two 20-digit integers
    table_budget = _align(
        len(TABLE_MAGIC) + 16 + sum(len(name) + 48 for name, _ in entries) + 64, 4096
    )

    placed: list[LayoutEntry] = []
    cursor = table_budget
    for name, data in entries:
        placed.append(LayoutEntry(name=name, offset=cursor, length=len(data)))
        cursor = _align(cursor + len(data) + SLOT_SLACK, SECTOR)
    if cursor > size_bytes:
        raise CapacityExceeded(f"{cursor} bytes needed, card holds {size_bytes}")

    manifest = "".join(f"{e.name},{e.offset},{e.length}\n" for e in placed)
    table = f"{TABLE_MAGIC} files={len(placed)}\n{manifest}".encode("utf-8")
    if len(table) > table_budget:
        raise CapacityExceeded("allocation table exceeds its reserved region")

    image = bytearray(size_bytes)
    image[: len(table)] = table
    for entry, (_, data) in zip(placed, entries):
        image[entry.offset : entry.offset + entry.length] = data
    return bytes(image), manifest


def parse_layout(manifest: str) -> list[LayoutEntry]:
    entries = []
    for line in manifest.splitlines():
        line = line.strip()
        if not line or line.startswith(TABLE_MAGIC):
            continue
        name, offset, length = line.rsplit(",", 2)
        entries.append(LayoutEntry(name=name, offset=int(offset), length=int(length)))
    return entries


def format_layout(entries: list[LayoutEntry]) -> str:
    return "".join(f"{e.name},{e.offset},{e.length}\n" for e in entries)
