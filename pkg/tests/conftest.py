"""Shared test helpers: frame generators, media builders, fault injection."""

from __future__ import annotations

import io
import random
import struct
import sys
import zlib
from datetime import datetime, timedelta, timezone

import pytest

from dronetrace.flightlog import (
    AttitudePayload,
    BatteryPayload,
    EventPayload,
    FlightFrame,
    GpsPayload,
    MotorPayload,
)

T0 = datetime(2026, 1, 5, 10, 0, 0, tzinfo=timezone.utc)


def ts(minutes: float = 0.0) -> datetime:
    return T0 + timedelta(minutes=minutes)


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion, straight to the terminal."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    sys.stderr.write(f"[{status}] {name}\n")
    sys.stderr.flush()


# --- flight frame generation -------------------------------------------------

def random_frame(rng: random.Random, timestamp_ms: int) -> FlightFrame:
    kind = rng.randrange(5)
    if kind == 0:
        fix = rng.randrange(2)
        if fix:
            lat = rng.randrange(-90 * 10**7, 90 * 10**7 + 1)
            lon = rng.randrange(-180 * 10**7, 180 * 10**7 + 1)
        else:
            lat = rng.randrange(-(2**31), 2**31)
            lon = rng.randrange(-(2**31), 2**31)
        payload = GpsPayload(
            lat_e7=lat,
            lon_e7=lon,
            alt_mm=rng.randrange(-(10**6), 10**7),
            fix=fix,
            num_sats=rng.randrange(0, 30),
        )
    elif kind == 1:
        payload = MotorPayload(tuple(rng.randrange(0, 65536) for _ in range(4)))
    elif kind == 2:
        payload = BatteryPayload(
            capacity_pct=rng.randrange(0, 101),
            voltage_mv=rng.randrange(0, 65536),
            temp_centi_c=rng.randrange(-(2**15), 2**15),
        )
    elif kind == 3:
        payload = AttitudePayload(
            pitch_cdeg=rng.randrange(-(2**15), 2**15),
            roll_cdeg=rng.randrange(-(2**15), 2**15),
            yaw_cdeg=rng.randrange(-(2**15), 2**15),
        )
    else:
        length = rng.randrange(0, 60)
        message = "".join(chr(rng.randrange(32, 0x2FF)) for _ in range(length))
        payload = EventPayload(code=rng.randrange(256), message=message)
    return FlightFrame(timestamp_ms, payload)


def random_frames(rng: random.Random, count: int) -> list[FlightFrame]:
    frames = []
    timestamp = rng.randrange(0, 10**9)
    for _ in range(count):
        timestamp += rng.randrange(0, 2000)
        frames.append(random_frame(rng, timestamp))
    return frames


# --- media builders ----------------------------------------------------------

def make_jpeg(rng: random.Random, body_size: int = 2048) -> bytes:
    # body stripped of 0xFF so no false headers or footers appear inside
    body = bytes(b & 0x7F for b in rng.randbytes(body_size))
    return b"\xff\xd8\xff\xe0" + body + b"\xff\xd9"


def _png_chunk(chunk_type: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + chunk_type
        + data
        + struct.pack(">I", zlib.crc32(chunk_type + data))
    )


def make_png(rng: random.Random, idat_size: int = 256) -> bytes:
    ihdr = _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 8, 8, 8, 2, 0, 0, 0))
    idat = _png_chunk(b"IDAT", rng.randbytes(idat_size))
    return b"\x89PNG\r\n\x1a\n" + ihdr + idat + _png_chunk(b"IEND", b"")


def _mp4_box(box_type: bytes, data: bytes) -> bytes:
    return struct.pack(">I", 8 + len(data)) + box_type + data


def make_mp4(rng: random.Random, mdat_size: int = 512) -> bytes:
    return (
        _mp4_box(b"ftyp", b"isom\x00\x00\x02\x00isomiso2")
        + _mp4_box(b"mdat", rng.randbytes(mdat_size))
        + _mp4_box(b"free", b"\x00" * 16)
    )


# --- imaging fault injection ---------------------------------------------------

class FaultyStream:
    """Byte stream raising OSError on designated sectors (full sectors only)."""

    def __init__(self, data: bytes, bad_sectors: set[int], sector_size: int = 512):
        self._bio = io.BytesIO(data)
        self._bad = set(bad_sectors)
        self._sector_size = sector_size

    def read(self, n: int) -> bytes:
        pos = self._bio.tell()
        if pos % self._sector_size == 0 and pos // self._sector_size in self._bad:
            self._bio.seek(pos + n)
            raise OSError(5, "simulated unreadable sector")
        return self._bio.read(n)

    def seekable(self) -> bool:
        return True

    def seek(self, pos: int) -> int:
        return self._bio.seek(pos)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xD0E5)
