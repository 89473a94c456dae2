"""Synthetic flight and card fixtures: determinism and plausibility."""

from __future__ import annotations

import io
import math

import pytest

from dronetrace import carving, fixtures, imaging
from dronetrace import flightlog as fl
from dronetrace.errors import CapacityExceeded, InvalidParams, MissingFooter

from conftest import make_jpeg, ts

HEADER = fl.DatHeader(device_id=b"F" * 16, created_at_ms=100)


class TestSynthFlight:
    def test_zero_duration_is_empty(self):
        assert fixtures.synth_flight(1, 0, 1) == []

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            fixtures.synth_flight(1, -1, 1)
        with pytest.raises(InvalidParams):
            fixtures.synth_flight(1, 10, 0)

    def test_determinism_byte_for_byte(self):
        first = fl.generate(HEADER, fixtures.synth_flight(42, 60, 1))
        second = fl.generate(HEADER, fixtures.synth_flight(42, 60, 1))
        assert first == second

    def test_frame_count_is_duration_times_bundle(self):
        frames = fixtures.synth_flight(42, 60, 1)
        assert len(frames) == 60 * 4  # GPS, MOTOR, BATTERY, ATTITUDE per tick

    def test_different_seeds_differ(self):
        assert fixtures.synth_flight(1, 30, 1) != fixtures.synth_flight(2, 30, 1)

    def test_battery_monotone_non_increasing(self):
        frames = fixtures.synth_flight(7, 300, 1)
        capacities = [
            f.payload.capacity_pct
            for f in frames
            if isinstance(f.payload, fl.BatteryPayload)
        ]
        assert all(a >= b for a, b in zip(capacities, capacities[1:]))
        assert all(0 <= c <= 100 for c in capacities)

    def test_motor_rpm_within_bounds(self):
        frames = fixtures.synth_flight(7, 120, 1)
        for f in frames:
            if isinstance(f.payload, fl.MotorPayload):
                assert all(0 <= rpm <= 12000 for rpm in f.payload.rpm)

    def test_attitude_within_half_circle(self):
        frames = fixtures.synth_flight(7, 120, 1)
        for f in frames:
            if isinstance(f.payload, fl.AttitudePayload):
                for v in (f.payload.pitch_cdeg, f.payload.roll_cdeg, f.payload.yaw_cdeg):
                    assert -18000 <= v <= 18000

    def test_consecutive_fixes_within_25_m(self):
        frames = fixtures.synth_flight(99, 240, 1)
        fixes = [
            f.payload for f in frames
            if isinstance(f.payload, fl.GpsPayload) and f.payload.fix != 0
        ]
        for a, b in zip(fixes, fixes[1:]):
            dlat_m = (b.lat_e7 - a.lat_e7) / 1e7 * 111320.0
            mean_lat = math.radians((a.lat_e7 + b.lat_e7) / 2e7)
            dlon_m = (b.lon_e7 - a.lon_e7) / 1e7 * 111320.0 * math.cos(mean_lat)
            assert math.hypot(dlat_m, dlon_m) <= 25.0

    def test_valid_frames_for_generator(self):
        frames = fixtures.synth_flight(5, 30, 2)
        data = fl.generate(HEADER, frames)  # raises on any invalid frame
        assert fl.parse_strict(data).frames == frames


def card_logs(count=3, seconds=5):
    logs = []
    for i in range(count):
        frames = fixtures.synth_flight(100 + i, seconds, 1)
        logs.append((f"FLY{95 + i:03d}.DAT", fl.generate(HEADER, frames)))
    return logs


class TestPackCard:
    def test_empty_inputs(self):
        image, manifest = fixtures.pack_card([], [], 64 * 1024)
        assert len(image) == 64 * 1024
        assert manifest == ""
        assert image[:9] == b"DTCARD v1"

    def test_layout_matches_contents(self):
        logs = card_logs()
        image, manifest = fixtures.pack_card(logs, [], 1024 * 1024)
        entries = fixtures.parse_layout(manifest)
        assert [e.name for e in entries] == [name for name, _ in logs]
        for entry, (_, data) in zip(entries, logs):
            assert image[entry.offset : entry.offset + entry.length] == data
            assert entry.offset % 512 == 0

    def test_unclosed_last_strips_footer(self):
        logs = card_logs()
        image, manifest = fixtures.pack_card(logs, [], 1024 * 1024, unclosed_last=True)
        entries = fixtures.parse_layout(manifest)
        last = entries[-1]
        assert last.length == len(logs[-1][1]) - fl.FOOTER_LEN
        blob = image[last.offset : last.offset + last.length]
        with pytest.raises(MissingFooter):
            fl.parse_strict(blob)
        # earlier logs still strictly parse
        first = entries[0]
        fl.parse_strict(image[first.offset : first.offset + first.length])

    def test_allocation_table_in_image_matches_manifest(self):
        logs = card_logs()
        image, manifest = fixtures.pack_card(logs, [], 1024 * 1024)
        table = image[: image.index(b"\x00")].decode()
        for line in manifest.splitlines():
            assert line in table

    def test_capacity_exceeded(self):
        logs = card_logs()
        with pytest.raises(CapacityExceeded):
            fixtures.pack_card(logs, [], 5 * 1024)

    def test_planted_jpeg_found_by_scanner(self, tmp_path, rng):
        media = [("IMG_0001.JPG", make_jpeg(rng))]
        image_bytes, manifest = fixtures.pack_card([], media, 256 * 1024)
        entry = fixtures.parse_layout(manifest)[0]
        image = imaging.acquire(
            io.BytesIO(image_bytes), tmp_path / "card.img", acquired_at=ts()
        )
        hits = carving.scan_signatures(image)
        assert ("jpeg", entry.offset) in hits

    def test_figure4_shape(self):
        logs = []
        for i in range(10):
            frames = fixtures.synth_flight(i, 3, 1)
            logs.append((f"FLY{95 + i:03d}.DAT", fl.generate(HEADER, frames)))
        image, manifest = fixtures.pack_card(logs, [], 4 * 1024 * 1024, unclosed_last=True)
        entries = fixtures.parse_layout(manifest)
        assert entries[0].name == "FLY095.DAT"
        assert entries[-1].name == "FLY104.DAT"
        for entry in entries[:-1]:
            fl.parse_strict(image[entry.offset : entry.offset + entry.length])
        with pytest.raises(MissingFooter):
            last = entries[-1]
            fl.parse_strict(image[last.offset : last.offset + last.length])
