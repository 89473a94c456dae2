"""Signature scanning and carving against planted fixtures."""

from __future__ import annotations

import hashlib
import io

import pytest

from dronetrace import carving, imaging
from dronetrace.errors import InvalidParams, MissingFile

from conftest import make_jpeg, make_mp4, make_png, ts


def image_with(tmp_path, data: bytes, name="plant.img") -> imaging.StorageImage:
    return imaging.acquire(io.BytesIO(data), tmp_path / name, acquired_at=ts())


def plant(buffer: bytearray, offset: int, content: bytes) -> None:
    buffer[offset : offset + len(content)] = content


class TestScan:
    def test_blank_image_has_no_hits(self, tmp_path):
        image = image_with(tmp_path, bytes(1024 * 1024))
        assert carving.scan_signatures(image) == []

    def test_single_jpeg_at_4096(self, tmp_path, rng):
        buffer = bytearray(64 * 1024)
        plant(buffer, 4096, make_jpeg(rng))
        image = image_with(tmp_path, bytes(buffer))
        assert carving.scan_signatures(image) == [("jpeg", 4096)]

    def test_back_to_back_pngs_in_order(self, tmp_path, rng):
        first = make_png(rng)
        second = make_png(rng)
        buffer = bytearray(32 * 1024)
        plant(buffer, 1000, first)
        plant(buffer, 1000 + len(first), second)
        image = image_with(tmp_path, bytes(buffer))
        hits = carving.scan_signatures(image)
        assert hits == [("png", 1000), ("png", 1000 + len(first))]

    def test_mp4_hit_points_at_box_start(self, tmp_path, rng):
        clip = make_mp4(rng)
        buffer = bytearray(32 * 1024)
        plant(buffer, 2048, clip)
        image = image_with(tmp_path, bytes(buffer))
        hits = [h for h in carving.scan_signatures(image) if h[0] == "mp4"]
        assert hits[0] == ("mp4", 2048)

    def test_missing_file(self, tmp_path):
        image = image_with(tmp_path, bytes(64))
        (tmp_path / "plant.img").unlink()
        with pytest.raises(MissingFile):
            carving.scan_signatures(image)


class TestCarve:
    def test_three_jpegs_recovered_byte_identical(self, tmp_path, rng):
        originals = [make_jpeg(rng, body_size=1024 * (i + 1)) for i in range(3)]
        buffer = bytearray(256 * 1024)
        offsets = [512, 65536, 131072]
        for offset, content in zip(offsets, originals):
            plant(buffer, offset, content)
        image = image_with(tmp_path, bytes(buffer))
        carved = carving.carve(image, tmp_path / "out")
        jpegs = [c for c in carved if c.signature_name == "jpeg"]
        assert len(jpegs) == 3
        for carved_file, original, offset in zip(jpegs, originals, offsets):
            assert carved_file.offset == offset
            assert carved_file.unterminated is False
            recovered = (tmp_path / "out" / f"{offset}_jpeg.jpg").read_bytes()
            assert recovered == original
            assert carved_file.content_digest == hashlib.sha256(original).hexdigest()

    def test_overwritten_footer_flagged_unterminated(self, tmp_path, rng):
        content = make_jpeg(rng)
        buffer = bytearray(16 * 1024)
        plant(buffer, 100, content)
        buffer[100 + len(content) - 2 : 100 + len(content)] = b"\x00\x00"  # kill FFD9
        image = image_with(tmp_path, bytes(buffer))
        small_sig = [
            carving.Signature(
                "jpeg", b"\xff\xd8\xff", carving.TerminatorMode.FOOTER,
                footer=b"\xff\xd9", max_size=8192, extension="jpg",
            )
        ]
        carved = carving.carve(image, tmp_path / "out", small_sig)
        assert len(carved) == 1
        assert carved[0].unterminated
        assert carved[0].length == 8192  # emitted up to max_size

    def test_png_and_mp4_recovered(self, tmp_path, rng):
        png = make_png(rng)
        mp4 = make_mp4(rng)
        buffer = bytearray(64 * 1024)
        plant(buffer, 4096, png)
        plant(buffer, 32768, mp4)
        image = image_with(tmp_path, bytes(buffer))
        carved = {c.signature_name: c for c in carving.carve(image, tmp_path / "out")}
        assert carved["png"].length == len(png)
        assert carved["png"].content_digest == hashlib.sha256(png).hexdigest()
        assert carved["mp4"].length == len(mp4)
        assert carved["mp4"].content_digest == hashlib.sha256(mp4).hexdigest()

    def test_empty_image(self, tmp_path):
        image = image_with(tmp_path, b"")
        assert carving.carve(image, tmp_path / "out") == []

    def test_no_out_of_bounds(self, tmp_path, rng):
        # JPEG header at the very end, no footer possible
        buffer = bytearray(8 * 1024)
        buffer[-3:] = b"\xff\xd8\xff"
        image = image_with(tmp_path, bytes(buffer))
        carved = carving.carve(image, tmp_path / "out")
        for c in carved:
            assert c.offset + c.length <= image.size_bytes

    def test_determinism(self, tmp_path, rng):
        buffer = bytearray(64 * 1024)
        plant(buffer, 512, make_jpeg(rng))
        plant(buffer, 16384, make_png(rng))
        image = image_with(tmp_path, bytes(buffer))
        first = carving.carve(image, tmp_path / "out1")
        second = carving.carve(image, tmp_path / "out2")
        assert [(c.signature_name, c.offset, c.length, c.content_digest) for c in first] == [
            (c.signature_name, c.offset, c.length, c.content_digest) for c in second
        ]


class TestSignatureFile:
    def test_load_and_use(self, tmp_path, rng):
        sig_file = tmp_path / "sigs.csv"
        sig_file.write_text(
            "# custom signatures\n"
            "jpeg,ffd8ff,footer,ffd9,1048576\n"
            "png,89504e470d0a1a0a,png_chunks,,1048576\n"
            "mp4,66747970,mp4_boxes,,1048576\n"
        )
        signatures = carving.load_signature_file(sig_file)
        assert [s.name for s in signatures] == ["jpeg", "png", "mp4"]
        content = make_jpeg(rng)
        buffer = bytearray(16 * 1024)
        plant(buffer, 256, content)
        image = image_with(tmp_path, bytes(buffer))
        carved = carving.carve(image, tmp_path / "out", signatures)
        assert carved[0].length == len(content)

    def test_malformed_line_rejected(self, tmp_path):
        sig_file = tmp_path / "sigs.csv"
        sig_file.write_text("jpeg,ffd8ff,footer\n")
        with pytest.raises(InvalidParams):
            carving.load_signature_file(sig_file)

    def test_bad_mode_rejected(self, tmp_path):
        sig_file = tmp_path / "sigs.csv"
        sig_file.write_text("jpeg,ffd8ff,nonsense,ffd9,100\n")
        with pytest.raises(InvalidParams):
            carving.load_signature_file(sig_file)
