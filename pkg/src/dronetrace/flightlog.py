"""DATv1 flight-log format: encoding, strict parsing and recovery.

A DATv1 file is a 30-byte header, a sequence of CRC-protected frames and a
9-byte footer.  A recorder that loses power before opening its next log
leaves the footer missing; such files fail strict parsing with
MISSING_FOOTER and are readable through the recovery parser, or can be
closed on a clone with :func:`finalize_log`.

Wire format, all multi-byte integers little-endian:

    header  "DTV1" | version u16 | device_id 16B | created_at u64 unix-ms
    frame   0xAA | record_type u8 | payload_len u16 | payload | crc32 u32
    footer  0x55 | frame_count u32 | file_crc32 u32

The frame CRC32 (IEEE, reflected) covers record_type, payload_len and the
payload.  The file CRC32 covers every byte from offset 0 through the last
frame byte.  Payloads start with timestamp_ms u64 followed by the
type-specific fields.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Union

from .errors import (
    AlreadyClosed,
    BadMagic,
    BadVersion,
    DroneTraceError,
    FooterMismatch,
    FrameCrcMismatch,
    InvalidFrame,
    MissingFooter,
    NotAClone,
    Truncated,
)
from .imaging import StorageImage

MAGIC = b"DTV1"
VERSION = 1
HEADER_LEN = 30
FOOTER_LEN = 9
FRAME_SYNC = 0xAA
FOOTER_SYNC = 0x55

_FRAME_OVERHEAD = 8  # sync + type + payload_len + crc32

LAT_LIMIT_E7 = 90 * 10**7
LON_LIMIT_E7 = 180 * 10**7


class RecordType(IntEnum):
    GPS = 0x01
    MOTOR = 0x02
    BATTERY = 0x03
    ATTITUDE = 0x04
    EVENT = 0x05


@dataclass(frozen=True)
class GpsPayload:
    lat_e7: int
    lon_e7: int
    alt_mm: int
    fix: int
    num_sats: int


@dataclass(frozen=True)
class MotorPayload:
    rpm: tuple[int, int, int, int]


@dataclass(frozen=True)
class BatteryPayload:
    capacity_pct: int
    voltage_mv: int
    temp_centi_c: int


@dataclass(frozen=True)
class AttitudePayload:
    pitch_cdeg: int
    roll_cdeg: int
    yaw_cdeg: int


@dataclass(frozen=True)
class EventPayload:
    code: int
    message: str


Payload = Union[GpsPayload, MotorPayload, BatteryPayload, AttitudePayload, EventPayload]

_PAYLOAD_TYPES = {
    GpsPayload: RecordType.GPS,
    MotorPayload: RecordType.MOTOR,
    BatteryPayload: RecordType.BATTERY,
    AttitudePayload: RecordType.ATTITUDE,
    EventPayload: RecordType.EVENT,
}


@dataclass(frozen=True)
class FlightFrame:
    timestamp_ms: int
    payload: Payload

    @property
    def record_type(self) -> RecordType:
        return _PAYLOAD_TYPES[type(self.payload)]


@dataclass(frozen=True)
class DatHeader:
    device_id: bytes = b"\x00" * 16
    created_at_ms: int = 0
    version: int = VERSION


@dataclass(frozen=True)
class RecoveryReport:
    bytes_consumed: int
    bytes_total: int
    frames_recovered: int
    frames_dropped: int  # maximal skipped regions (CRC/sync failures)
    trailing_garbage: bool
    header_synthesized: bool = False


@dataclass
class FlightLog:
    header: DatHeader
    frames: list[FlightFrame] = field(default_factory=list)
    closed: bool = False
    recovery: Optional[RecoveryReport] = None
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class FlightSummary:
    duration_ms: int
    frame_counts: dict[str, int]
    gps_fix_count: int
    min_lat_deg: Optional[float]
    max_lat_deg: Optional[float]
    min_lon_deg: Optional[float]
    max_lon_deg: Optional[float]
    max_alt_m: Optional[float]
    battery_start_pct: Optional[int]
    battery_end_pct: Optional[int]
    max_motor_rpm: Optional[int]


# --- validation ---

def _check_range(value: int, low: int, high: int, what: str) -> None:
    if not low <= value <= high:
        raise InvalidFrame(f"{what}={value} outside [{low}, {high}]")


def validate_frame(frame: FlightFrame) -> None:
    """Raise INVALID_FRAME unless the frame satisfies its type invariants."""
    _check_range(frame.timestamp_ms, 0, 2**64 - 1, "timestamp_ms")
    p = frame.payload
    if isinstance(p, GpsPayload):
        _check_range(p.lat_e7, -(2**31), 2**31 - 1, "lat_e7")
        _check_range(p.lon_e7, -(2**31), 2**31 - 1, "lon_e7")
        _check_range(p.alt_mm, -(2**31), 2**31 - 1, "alt_mm")
        _check_range(p.fix, 0, 255, "fix")
        _check_range(p.num_sats, 0, 255, "num_sats")
        if p.fix != 0:
            _check_range(p.lat_e7, -LAT_LIMIT_E7, LAT_LIMIT_E7, "lat_e7")
            _check_range(p.lon_e7, -LON_LIMIT_E7, LON_LIMIT_E7, "lon_e7")
    elif isinstance(p, MotorPayload):
        if len(p.rpm) != 4:
            raise InvalidFrame("motor frame needs exactly 4 rpm values")
        for i, rpm in enumerate(p.rpm):
            _check_range(rpm, 0, 65535, f"rpm{i + 1}")
    elif isinstance(p, BatteryPayload):
        _check_range(p.capacity_pct, 0, 100, "capacity_pct")
        _check_range(p.voltage_mv, 0, 65535, "voltage_mv")
        _check_range(p.temp_centi_c, -(2**15), 2**15 - 1, "temp_centi_c")
    elif isinstance(p, AttitudePayload):
        for name in ("pitch_cdeg", "roll_cdeg", "yaw_cdeg"):
            _check_range(getattr(p, name), -(2**15), 2**15 - 1, name)
    elif isinstance(p, EventPayload):
        _check_range(p.code, 0, 255, "event code")
        if len(p.message.encode("utf-8")) > 255:
            raise InvalidFrame("event message exceeds 255 bytes")
    else:
        raise InvalidFrame(f"unknown payload type {type(p).__name__}")


# --- encoding ---

def _encode_payload(frame: FlightFrame) -> bytes:
    ts = struct.pack("<Q", frame.timestamp_ms)
    p = frame.payload
    if isinstance(p, GpsPayload):
        return ts + struct.pack("<iiiBB", p.lat_e7, p.lon_e7, p.alt_mm, p.fix, p.num_sats)
    if isinstance(p, MotorPayload):
        return ts + struct.pack("<4H", *p.rpm)
    if isinstance(p, BatteryPayload):
        return ts + struct.pack("<BHh", p.capacity_pct, p.voltage_mv, p.temp_centi_c)
    if isinstance(p, AttitudePayload):
        return ts + struct.pack("<hhh", p.pitch_cdeg, p.roll_cdeg, p.yaw_cdeg)
    message = p.message.encode("utf-8")
    return ts + struct.pack("<BB", p.code, len(message)) + message


def encode_frame(frame: FlightFrame) -> bytes:
    validate_frame(frame)
    payload = _encode_payload(frame)
    body = struct.pack("<BH", int(frame.record_type), len(payload)) + payload
    return bytes([FRAME_SYNC]) + body + struct.pack("<I", zlib.crc32(body))


def encode_header(header: DatHeader) -> bytes:
    if len(header.device_id) != 16:
        raise InvalidFrame("device_id must be exactly 16 bytes")
    return MAGIC + struct.pack("<H", header.version) + header.device_id + struct.pack(
        "<Q", header.created_at_ms
    )


def generate(header: DatHeader, frames: list[FlightFrame], closed: bool = True) -> bytes:
    """Deterministic byte-exact DATv1 encoding; the test oracle for parsing."""
    out = bytearray(encode_header(header))
    for frame in frames:
        out += encode_frame(frame)
    if closed:
        out += bytes([FOOTER_SYNC])
        out += struct.pack("<I", len(frames))
        out += struct.pack("<I", zlib.crc32(bytes(out[:-5])))
    return bytes(out)


# --- decoding ---

def _decode_payload(record_type: int, payload: bytes) -> FlightFrame:
    """Decode a CRC-valid payload; raises ValueError on structural mismatch."""
    if len(payload) < 8:
        raise ValueError("payload shorter than timestamp")
    (ts,) = struct.unpack_from("<Q", payload, 0)
    body = payload[8:]
    if record_type == RecordType.GPS:
        if len(body) != 14:
            raise ValueError("bad GPS payload length")
        lat, lon, alt, fix, sats = struct.unpack("<iiiBB", body)
        return FlightFrame(ts, GpsPayload(lat, lon, alt, fix, sats))
    if record_type == RecordType.MOTOR:
        if len(body) != 8:
            raise ValueError("bad MOTOR payload length")
        return FlightFrame(ts, MotorPayload(tuple(struct.unpack("<4H", body))))
    if record_type == RecordType.BATTERY:
        if len(body) != 5:
            raise ValueError("bad BATTERY payload length")
        cap, volt, temp = struct.unpack("<BHh", body)
        return FlightFrame(ts, BatteryPayload(cap, volt, temp))
    if record_type == RecordType.ATTITUDE:
        if len(body) != 6:
            raise ValueError("bad ATTITUDE payload length")
        pitch, roll, yaw = struct.unpack("<hhh", body)
        return FlightFrame(ts, AttitudePayload(pitch, roll, yaw))
    if record_type == RecordType.EVENT:
        if len(body) < 2:
            raise ValueError("bad EVENT payload length")
        code, mlen = struct.unpack_from("<BB", body, 0)
        if len(body) != 2 + mlen:
            raise ValueError("EVENT message length mismatch")
        return FlightFrame(ts, EventPayload(code, body[2:].decode("utf-8")))
    raise ValueError(f"unknown record type 0x{record_type:02x}")


def _try_decode_frame(data: bytes, pos: int) -> Optional[tuple[FlightFrame, int]]:
    """Attempt to decode one frame at pos; None if anything is off."""
    if pos + 4 > len(data) or data[pos] != FRAME_SYNC:
        return None
    record_type, payload_len = struct.unpack_from("<BH", data, pos + 1)
    end = pos + 4 + payload_len + 4
    if end > len(data):
        return None
    body = data[pos + 1 : pos + 4 + payload_len]
    (crc,) = struct.unpack_from("<I", data, pos + 4 + payload_len)
    if zlib.crc32(body) != crc:
        return None
    try:
        frame = _decode_payload(record_type, data[pos + 4 : pos + 4 + payload_len])
    except (ValueError, UnicodeDecodeError):
        return None
    return frame, end


def _parse_header(data: bytes) -> DatHeader:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}", offset=0)
    if len(data) < 6:
        raise Truncated("header cut inside version field", offset=len(data))
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}", offset=4)
    if len(data) < HEADER_LEN:
        raise Truncated("incomplete header", offset=len(data))
    device_id = data[6:22]
    (created_at,) = struct.unpack_from("<Q", data, 22)
    return DatHeader(device_id=device_id, created_at_ms=created_at, version=version)


def parse_strict(data: bytes) -> FlightLog:
    """Parse a well-formed DATv1 file; any deviation raises.

    MISSING_FOOTER is the unclosed-file signal: the frame stream was intact
    but ended without a footer.
    """
    header = _parse_header(data)
    frames: list[FlightFrame] = []
    warnings: list[str] = []
    pos = HEADER_LEN
    last_ts: Optional[int] = None

    while pos < len(data):
        marker = data[pos]
        if marker == FRAME_SYNC:
            if pos + 4 > len(data):
                raise Truncated("frame header cut short", offset=pos)
            record_type, payload_len = struct.unpack_from("<BH", data, pos + 1)
            end = pos + 4 + payload_len + 4
            if end > len(data):
                raise Truncated("frame extends past end of file", offset=pos)
            body = data[pos + 1 : pos + 4 + payload_len]
            (crc,) = struct.unpack_from("<I", data, pos + 4 + payload_len)
            if zlib.crc32(body) != crc:
                raise FrameCrcMismatch(f"frame at offset {pos}", offset=pos)
            try:
                frame = _decode_payload(record_type, data[pos + 4 : pos + 4 + payload_len])
            except (ValueError, UnicodeDecodeError) as exc:
                raise FrameCrcMismatch(
                    f"frame at offset {pos} undecodable: {exc}", offset=pos
                ) from exc
            if last_ts is not None and frame.timestamp_ms < last_ts:
                warnings.append(
                    f"timestamp regression at offset {pos}: "
                    f"{frame.timestamp_ms} < {last_ts}"
                )
            last_ts = frame.timestamp_ms
            frames.append(frame)
            pos = end
        elif marker == FOOTER_SYNC:
            remaining = len(data) - pos
            if remaining < FOOTER_LEN:
                raise Truncated("incomplete footer", offset=pos)
            if remaining > FOOTER_LEN:
                raise FooterMismatch("data continues after footer", offset=pos)
            count, file_crc = struct.unpack_from("<II", data, pos + 1)
            if count != len(frames):
                raise FooterMismatch(
                    f"footer claims {count} frames, parsed {len(frames)}", offset=pos
                )
            if zlib.crc32(data[:pos]) != file_crc:
                raise FooterMismatch("whole-file CRC mismatch", offset=pos)
            return FlightLog(header=header, frames=frames, closed=True, warnings=warnings)
        else:
            raise FrameCrcMismatch(
                f"invalid frame sync byte 0x{marker:02x} at offset {pos}", offset=pos
            )

    raise MissingFooter(f"{len(frames)} frames parsed, no footer", offset=len(data))


def parse_recover(data: bytes) -> FlightLog:
    """Salvage every CRC-valid frame from arbitrary bytes; never raises.

    A strictly-valid file parses identically to :func:`parse_strict` with no
    recovery report.  Otherwise the scan resynchronizes byte-by-byte on the
    frame sync marker, keeps CRC-valid frames and accounts for everything
    skipped.
    """
    try:
        return parse_strict(bytes(data))
    except DroneTraceError:
        pass

    data = bytes(data)
    header_synthesized = True
    scan_start = 0
    header = DatHeader()
    if len(data) >= HEADER_LEN:
        try:
            header = _parse_header(data)
            header_synthesized = False
            scan_start = HEADER_LEN
        except DroneTraceError:
            pass

    frames: list[FlightFrame] = []
    warnings: list[str] = []
    dropped_regions = 0
    consumed = HEADER_LEN if not header_synthesized else 0
    region_open = False
    trailing_garbage = False
    last_ts: Optional[int] = None
    pos = scan_start

    while pos < len(data):
        idx = data.find(FRAME_SYNC, pos)
        if idx == -1:
            # no more sync candidates: tail is either a clean footer or garbage
            break
        if idx > pos and not region_open:
            dropped_regions += 1
            region_open = True
        decoded = _try_decode_frame(data, idx)
        if decoded is None:
            if not region_open:
                dropped_regions += 1
                region_open = True
            pos = idx + 1
            continue
        frame, end = decoded
        if last_ts is not None and frame.timestamp_ms < last_ts:
            warnings.append(f"timestamp regression at offset {idx}")
        last_ts = frame.timestamp_ms
        frames.append(frame)
        consumed += end - idx
        pos = end
        region_open = False

    tail = data[pos:]
    if tail:
        if (
            len(tail) == FOOTER_LEN
            and tail[0] == FOOTER_SYNC
            and not region_open
        ):
            # orphan footer after recovered frames: consumed but not trusted
            consumed += FOOTER_LEN
        else:
            if not region_open:
                dropped_regions += 1
            trailing_garbage = True
    elif region_open:
        trailing_garbage = True

    report = RecoveryReport(
        bytes_consumed=consumed,
        bytes_total=len(data),
        frames_recovered=len(frames),
        frames_dropped=dropped_regions,
        trailing_garbage=trailing_garbage,
        header_synthesized=header_synthesized,
    )
    return FlightLog(
        header=header,
        frames=frames,
        closed=False,
        recovery=report,
        warnings=warnings,
    )


def finalize_log(clone_image: StorageImage, log_bytes: bytes) -> bytes:
    """Close an unclosed log by appending a valid footer, on a clone only.

    Mirrors the power-cycle trick of booting the device from a cloned card
    so the recorder closes its final log: the original is never touched.
    The output is the recovered frame stream re-encoded canonically, which
    for a cleanly truncated log equals the input plus the footer.
    """
    if not clone_image.is_clone or clone_image.read_only:
        raise NotAClone(f"{clone_image.image_path} is not a writable clone")
    try:
        parse_strict(log_bytes)
    except DroneTraceError:
        pass
    else:
        raise AlreadyClosed("log already carries a valid footer")
    log = parse_recover(log_bytes)
    return generate(log.header, log.frames, closed=True)


def summarize(log: FlightLog) -> FlightSummary:
    """Aggregate a parsed log for the report: duration, counts, extents."""
    frames = log.frames
    duration = frames[-1].timestamp_ms - frames[0].timestamp_ms if len(frames) > 1 else 0
    counts = {rt.name: 0 for rt in RecordType}
    lats: list[int] = []
    lons: list[int] = []
    alts: list[int] = []
    batteries: list[int] = []
    max_rpm: Optional[int] = None
    for frame in frames:
        counts[frame.record_type.name] += 1
        p = frame.payload
        if isinstance(p, GpsPayload) and p.fix != 0:
            lats.append(p.lat_e7)
            lons.append(p.lon_e7)
            alts.append(p.alt_mm)
        elif isinstance(p, BatteryPayload):
            batteries.append(p.capacity_pct)
        elif isinstance(p, MotorPayload):
            peak = max(p.rpm)
            max_rpm = peak if max_rpm is None else max(max_rpm, peak)
    return FlightSummary(
        duration_ms=duration,
        frame_counts=counts,
        gps_fix_count=len(lats),
        min_lat_deg=min(lats) / 1e7 if lats else None,
        max_lat_deg=max(lats) / 1e7 if lats else None,
        min_lon_deg=min(lons) / 1e7 if lons else None,
        max_lon_deg=max(lons) / 1e7 if lons else None,
        max_alt_m=max(alts) / 1000.0 if alts else None,
        battery_start_pct=batteries[0] if batteries else None,
        battery_end_pct=batteries[-1] if batteries else None,
        max_motor_rpm=max_rpm,
    )
