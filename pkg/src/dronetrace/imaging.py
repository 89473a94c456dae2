"""Bit-exact storage acquisition with dual-digest manifests.

Acquired originals are read-only: every later procedure that must write
(log finalization, in-image patching) runs against a clone.  Unreadable
sectors are zero-filled and recorded, never aborted on, matching common
acquisition-tool behaviour.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, Optional

from .errors import (
    DestExists,
    IntegrityMismatch,
    IoFailure,
    MissingFile,
    NotAClone,
    SourceUnverified,
)
from .ioutil import atomic_write_text
from .timestamps import format_rfc3339, parse_rfc3339, to_utc_ms

DEFAULT_SECTOR_SIZE = 512
_CHUNK = 1 << 20

MANIFEST_SUFFIX = ".manifest"


@dataclass(frozen=True)
class HashManifest:
    sha256: str  # lowercase hex, 64 chars
    sha1: str  # lowercase hex, 40 chars
    bad_sectors: tuple[tuple[int, int], ...]
    acquired_at: datetime


@dataclass
class StorageImage:
    image_path: str
    size_bytes: int
    manifest: HashManifest
    source_description: str = ""
    read_only: bool = True
    is_clone: bool = False
    parent_image: Optional[str] = None
    exhibit_id: Optional[str] = None


@dataclass(frozen=True)
class CloneRecord:
    clone_path: str
    verified: bool
    cloned_at: datetime


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    mismatched: tuple[str, ...] = ()  # subset of ("sha256", "sha1", "size")

    def __str__(self) -> str:
        return "OK" if self.ok else "MISMATCH " + ",".join(self.mismatched)


@dataclass(frozen=True)
class DiffRange:
    offset: int
    length: int


def write_manifest_sidecar(image_path: Path, image: StorageImage) -> Path:
    """Write the `<image>.manifest` sidecar in its fixed line order."""
    lines = [
        f"size={image.size_bytes}",
        f"sha256={image.manifest.sha256}",
        f"sha1={image.manifest.sha1}",
        f"acquired_at={format_rfc3339(image.manifest.acquired_at)}",
    ]
    lines += [f"bad={off},{length}" for off, length in image.manifest.bad_sectors]
    sidecar = Path(str(image_path) + MANIFEST_SUFFIX)
    atomic_write_text(sidecar, "\n".join(lines) + "\n")
    return sidecar


def load_manifest_sidecar(image_path: Path) -> StorageImage:
    """Rebuild a StorageImage from its sidecar (clone/case flags unknown)."""
    sidecar = Path(str(image_path) + MANIFEST_SUFFIX)
    if not sidecar.is_file():
        raise MissingFile(str(sidecar))
    fields: dict[str, str] = {}
    bad: list[tuple[int, int]] = []
    for line in sidecar.read_text("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key == "bad":
            off, _, length = value.partition(",")
            bad.append((int(off), int(length)))
        else:
            fields[key] = value
    manifest = HashManifest(
        sha256=fields["sha256"],
        sha1=fields["sha1"],
        bad_sectors=tuple(bad),
        acquired_at=parse_rfc3339(fields["acquired_at"]),
    )
    return StorageImage(
        image_path=str(image_path),
        size_bytes=int(fields["size"]),
        manifest=manifest,
    )


def acquire(
    source: BinaryIO,
    dest_path: Path,
    acquired_at: datetime,
    sector_size: int = DEFAULT_SECTOR_SIZE,
    source_description: str = "",
    exhibit_id: Optional[str] = None,
) -> StorageImage:
    """Acquire a byte stream into a read-only image plus sidecar manifest.

    The stream is read sector by sector; an OSError on a sector read
    zero-fills that sector, records it in the bad-sector list and continues
    at the next sector boundary.  Both digests are computed in the same pass
    over the bytes as written.
    """
    dest_path = Path(dest_path)
    if dest_path.exists():
        raise DestExists(str(dest_path))
    if sector_size <= 0:
        raise IoFailure(f"sector_size must be positive, got {sector_size}")

    sha256 = hashlib.sha256()
    sha1 = hashlib.sha1()
    bad: list[tuple[int, int]] = []
    offset = 0
    try:
        with open(dest_path, "wb") as out:
            while True:
                try:
                    chunk = source.read(sector_size)
                except OSError:
                    chunk = b"\x00" * sector_size
                    bad.append((offset, sector_size))
                    _reposition(source, offset + sector_size)
                if not chunk:
                    break
                out.write(chunk)
                sha256.update(chunk)
                sha1.update(chunk)
                offset += len(chunk)
            out.flush()
    except OSError as exc:
        raise IoFailure(f"acquisition failed: {exc}") from exc

    image = StorageImage(
        image_path=str(dest_path),
        size_bytes=offset,
        manifest=HashManifest(
            sha256=sha256.hexdigest(),
            sha1=sha1.hexdigest(),
            bad_sectors=tuple(bad),
            acquired_at=to_utc_ms(acquired_at),
        ),
        source_description=source_description,
        read_only=True,
        is_clone=False,
        exhibit_id=exhibit_id,
    )
    write_manifest_sidecar(dest_path, image)
    return image


def _reposition(source: BinaryIO, offset: int) -> None:
    try:
        if source.seekable():
            source.seek(offset)
    except (OSError, AttributeError):
        pass  # non-seekable harness streams advance past the fault themselves


def _hash_file(path: Path) -> tuple[str, str, int]:
    sha256 = hashlib.sha256()
    sha1 = hashlib.sha1()
    size = 0
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_CHUNK)
            if not chunk:
                break
            sha256.update(chunk)
            sha1.update(chunk)
            size += len(chunk)
    return sha256.hexdigest(), sha1.hexdigest(), size


def verify_image(image: StorageImage) -> VerifyResult:
    """Recompute both digests over the stored file and compare."""
    path = Path(image.image_path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        sha256, sha1, size = _hash_file(path)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    mismatched = []
    if size != image.size_bytes:
        mismatched.append("size")
    if sha256 != image.manifest.sha256:
        mismatched.append("sha256")
    if sha1 != image.manifest.sha1:
        mismatched.append("sha1")
    return VerifyResult(ok=not mismatched, mismatched=tuple(mismatched))


def clone(
    image: StorageImage, clone_path: Path, cloned_at: datetime
) -> tuple[CloneRecord, StorageImage]:
    """Byte-identical writable copy of a verified image."""
    clone_path = Path(clone_path)
    if not Path(image.image_path).is_file():
        raise MissingFile(image.image_path)
    if not verify_image(image).ok:
        raise SourceUnverified(image.image_path)
    if clone_path.exists():
        raise DestExists(str(clone_path))

    sha256 = hashlib.sha256()
    sha1 = hashlib.sha1()
    size = 0
    try:
        with open(image.image_path, "rb") as src, open(clone_path, "wb") as dst:
            while True:
                chunk = src.read(_CHUNK)
                if not chunk:
                    break
                dst.write(chunk)
                sha256.update(chunk)
                sha1.update(chunk)
                size += len(chunk)
    except OSError as exc:
        raise IoFailure(f"clone failed: {exc}") from exc

    verified = (
        size == image.size_bytes
        and sha256.hexdigest() == image.manifest.sha256
        and sha1.hexdigest() == image.manifest.sha1
    )
    cloned_at = to_utc_ms(cloned_at)
    clone_image = StorageImage(
        image_path=str(clone_path),
        size_bytes=size,
        manifest=HashManifest(
            sha256=sha256.hexdigest(),
            sha1=sha1.hexdigest(),
            bad_sectors=image.manifest.bad_sectors,
            acquired_at=cloned_at,
        ),
        source_description=image.source_description,
        read_only=False,
        is_clone=True,
        parent_image=image.image_path,
        exhibit_id=image.exhibit_id,
    )
    write_manifest_sidecar(clone_path, clone_image)
    return CloneRecord(str(clone_path), verified, cloned_at), clone_image


def diff_images(a: StorageImage, b: StorageImage) -> list[DiffRange]:
    """Maximal disjoint byte ranges where the two image files differ.

    A length difference is reported as a final range from min(size) to
    max(size).  The empty list means byte-identical.
    """
    path_a, path_b = Path(a.image_path), Path(b.image_path)
    for p in (path_a, path_b):
        if not p.is_file():
            raise MissingFile(str(p))

    ranges: list[list[int]] = []

    def note_diff(offset: int, length: int) -> None:
        if ranges and ranges[-1][0] + ranges[-1][1] == offset:
            ranges[-1][1] += length
        else:
            ranges.append([offset, length])

    offset = 0
    with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
        while True:
            ca = fa.read(_CHUNK)
            cb = fb.read(_CHUNK)
            common = min(len(ca), len(cb))
            if ca[:common] != cb[:common]:
                run_start = None
                for i in range(common):
                    if ca[i] != cb[i]:
                        if run_start is None:
                            run_start = i
                    elif run_start is not None:
                        note_diff(offset + run_start, i - run_start)
                        run_start = None
                if run_start is not None:
                    note_diff(offset + run_start, common - run_start)
            offset += common
            if len(ca) != len(cb) or not ca:
                break

    size_a, size_b = path_a.stat().st_size, path_b.stat().st_size
    if size_a != size_b:
        note_diff(min(size_a, size_b), max(size_a, size_b) - min(size_a, size_b))
    return [DiffRange(off, length) for off, length in ranges]


def patch_image(image: StorageImage, offset: int, data: bytes) -> None:
    """Overwrite bytes inside a clone image, e.g. to close a flight log.

    Refuses read-only originals: acquisition evidence is never modified.
    """
    if image.read_only or not image.is_clone:
        raise NotAClone(f"{image.image_path} is not a writable clone")
    path = Path(image.image_path)
    if not path.is_file():
        raise MissingFile(str(path))
    if offset < 0 or offset + len(data) > image.size_bytes:
        raise IntegrityMismatch(
            f"patch range {offset}+{len(data)} exceeds image size {image.size_bytes}"
        )
    try:
        with open(path, "r+b") as fh:
            fh.seek(offset)
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"patch failed: {exc}") from exc
