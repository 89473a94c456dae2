"""Signature-based carving of media files from storage images.

Filesystem metadata is ignored on purpose: carving walks the raw bytes,
finds format headers and extracts to each format's terminator.  Fragmented
files are out of scope and will carve incorrectly.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import InvalidParams, WriteFailure
from .imaging import StorageImage
from .ioutil import read_bytes

DEFAULT_MAX_SIZE = 64 * 1024 * 1024


class TerminatorMode(str, Enum):
    FOOTER = "footer"
    PNG_CHUNKS = "png_chunks"
    MP4_BOXES = "mp4_boxes"


@dataclass(frozen=True)
class Signature:
    name: str
    header: bytes
    mode: TerminatorMode
    footer: bytes = b""
    max_size: int = DEFAULT_MAX_SIZE
    extension: str = ""

    def __post_init__(self):
        if not self.header:
            raise InvalidParams(f"signature {self.name}: empty header")
        if self.max_size <= 0:
            raise InvalidParams(f"signature {self.name}: max_size must be positive")
        if self.mode is TerminatorMode.FOOTER and not self.footer:
            raise InvalidParams(f"signature {self.name}: footer mode needs a footer")
        if not self.extension:
            object.__setattr__(self, "extension", self.name)


BUILTIN_SIGNATURES = (
    Signature("jpeg", b"\xff\xd8\xff", TerminatorMode.FOOTER, footer=b"\xff\xd9", extension="jpg"),
    Signature("png", b"\x89PNG\r\n\x1a\n", TerminatorMode.PNG_CHUNKS, extension="png"),
    # MP4-family: the recognizable pattern is "ftyp" at +4; the carve start
    # is the box length field four bytes earlier.
    Signature("mp4", b"ftyp", TerminatorMode.MP4_BOXES, extension="mp4"),
)


@dataclass(frozen=True)
class CarvedFile:
    signature_name: str
    offset: int
    length: int
    content_digest: str  # sha256 hex
    output_path: str
    unterminated: bool = False


def load_signature_file(path: Path) -> list[Signature]:
    """Parse a signature definition file.

    One signature per line: ``name,hex_header,mode,hex_footer_or_empty,max_size_bytes``
    with mode one of footer, png_chunks, mp4_boxes.  Blank lines and lines
    starting with '#' are skipped.
    """
    signatures = []
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise InvalidParams(f"{path}:{lineno}: expected 5 comma-separated fields")
        name, hex_header, mode, hex_footer, max_size = (p.strip() for p in parts)
        try:
            signatures.append(
                Signature(
                    name=name,
                    header=bytes.fromhex(hex_header),
                    mode=TerminatorMode(mode),
                    footer=bytes.fromhex(hex_footer) if hex_footer else b"",
                    max_size=int(max_size),
                )
            )
        except ValueError as exc:
            raise InvalidParams(f"{path}:{lineno}: {exc}") from exc
    return signatures


def _header_hits(data: bytes, sig: Signature) -> list[int]:
    hits = []
    pos = 0
    while True:
        idx = data.find(sig.header, pos)
        if idx == -1:
            break
        start = idx - 4 if sig.mode is TerminatorMode.MP4_BOXES else idx
        if start >= 0:
            hits.append(start)
        pos = idx + 1
    return hits


def scan_signatures(
    image: StorageImage, signatures: list[Signature] | None = None
) -> list[tuple[str, int]]:
    """All header occurrences, ascending by offset; overlaps all reported."""
    signatures = list(signatures) if signatures else list(BUILTIN_SIGNATURES)
    data = read_bytes(Path(image.image_path))
    hits: list[tuple[int, str]] = []
    for sig in signatures:
        hits.extend((offset, sig.name) for offset in _header_hits(data, sig))
    hits.sort()
    return [(name, offset) for offset, name in hits]


def _end_by_footer(data: bytes, start: int, sig: Signature) -> tuple[int, bool]:
    limit = min(len(data), start + sig.max_size)
    idx = data.find(sig.footer, start + len(sig.header), limit)
    if idx == -1:
        return limit, True
    return idx + len(sig.footer), False


def _end_by_png_chunks(data: bytes, start: int, sig: Signature) -> tuple[int, bool]:
    limit = min(len(data), start + sig.max_size)
    pos = start + 8  # past the PNG signature
    while pos + 8 <= limit:
        (length,) = struct.unpack_from(">I", data, pos)
        chunk_type = data[pos + 4 : pos + 8]
        end = pos + 8 + length + 4  # data + CRC
        if end > limit:
            return limit, True
        if chunk_type == b"IEND":
            return end, False
        pos = end
    return limit, True


def _end_by_mp4_boxes(data: bytes, start: int, sig: Signature) -> tuple[int, bool]:
    limit = min(len(data), start + sig.max_size)
    pos = start
    first = True
    while pos + 8 <= limit:
        (size,) = struct.unpack_from(">I", data, pos)
        box_type = data[pos + 4 : pos + 8]
        if first and box_type != b"ftyp":
            return pos, True
        if size == 1:  # 64-bit extended size
            if pos + 16 > limit:
                return limit, True
            (size,) = struct.unpack_from(">Q", data, pos + 8)
        if size < 8 or not all(0x20 <= b <= 0x7E for b in box_type):
            # non-box bytes: the container ended at pos
            return (pos, False) if not first else (pos, True)
        if pos + size > limit:
            return limit, True
        pos += size
        first = False
    return (pos, False) if not first and pos <= limit else (limit, True)


_TERMINATORS = {
    TerminatorMode.FOOTER: _end_by_footer,
    TerminatorMode.PNG_CHUNKS: _end_by_png_chunks,
    TerminatorMode.MP4_BOXES: _end_by_mp4_boxes,
}


def carve(
    image: StorageImage,
    out_dir: Path,
    signatures: list[Signature] | None = None,
) -> list[CarvedFile]:
    """Extract every signature hit to ``out_dir``.

    Unterminated hits (footer overwritten, structure runs off the end) are
    emitted up to max_size and flagged rather than dropped.
    """
    signatures = list(signatures) if signatures else list(BUILTIN_SIGNATURES)
    by_name = {sig.name: sig for sig in signatures}
    data = read_bytes(Path(image.image_path))
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteFailure(f"cannot create {out_dir}: {exc}") from exc

    carved = []
    for name, offset in scan_signatures(image, signatures):
        sig = by_name[name]
        end, unterminated = _TERMINATORS[sig.mode](data, offset, sig)
        content = data[offset:end]
        if not content:
            continue
        out_path = out_dir / f"{offset}_{sig.name}.{sig.extension}"
        try:
            out_path.write_bytes(content)
        except OSError as exc:
            raise WriteFailure(f"cannot write {out_path}: {exc}") from exc
        carved.append(
            CarvedFile(
                signature_name=sig.name,
                offset=offset,
                length=len(content),
                content_digest=hashlib.sha256(content).hexdigest(),
                output_path=str(out_path),
                unterminated=unterminated,
            )
        )
    return carved
