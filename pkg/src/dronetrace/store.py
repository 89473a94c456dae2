"""Case persistence: one case = one directory holding ``case.dtc``.

The case document is human-auditable structured text (YAML: key/value with
nested lists), written atomically so a killed process never leaves a
half-written case behind.  Ledger digests are stored as lowercase hex.  An
advisory ``case.lock`` file serializes mutating processes.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from pathlib import Path

import yaml

from .casefile import (
    CapabilityChecklist,
    CaseFile,
    CustodyAction,
    CustodyEvent,
    Exhibit,
    ExhibitKind,
    IdentificationRecord,
    LedgerEntry,
    ModificationCategory,
    ModificationRecord,
    OffenceContext,
    PhotoCategory,
    PhotoRecord,
    PortRecord,
    PortType,
    SeizureRecord,
    StepRecord,
    StepStatus,
    StorageLocation,
    StorageMedium,
    TriState,
)
from .errors import DuplicateCaseId, IoFailure, LockHeld, MissingFile
from .imaging import HashManifest, StorageImage
from .ioutil import atomic_write_bytes
from .report import EvidenceItem, EvidenceKind
from .timestamps import coerce_timestamp, format_rfc3339

CASE_FILENAME = "case.dtc"
LOCK_FILENAME = "case.lock"
FORMAT_TAG = "dronetrace-case-v1"


def _ts(value) -> str:
    return format_rfc3339(value)


def _opt(record, mapper):
    return mapper(record) if record is not None else None


# --- serialization to plain data ---

def _seizure_to_dict(s: SeizureRecord) -> dict:
    return {
        "container_used": s.container_used,
        "exhibit_reference": s.exhibit_reference,
        "seizing_officer": s.seizing_officer,
        "unique_seal_number": s.unique_seal_number,
        "seized_when": _ts(s.seized_when),
        "seized_where": s.seized_where,
        "network_isolated": s.network_isolated,
        "signature_space_confirmed": s.signature_space_confirmed,
    }


def _identification_to_dict(i: IdentificationRecord) -> dict:
    return {
        "make": i.make,
        "model": i.model,
        "serial_or_qr": i.serial_or_qr,
        "suspected_counterfeit": i.suspected_counterfeit,
        "suspected_stolen": i.suspected_stolen,
        "research_notes": i.research_notes,
        "dimensions_mm": list(i.dimensions_mm) if i.dimensions_mm else None,
    }


def _capabilities_to_dict(c: CapabilityChecklist) -> dict:
    return {
        "video_capture": c.video_capture.value,
        "audio_capture": c.audio_capture.value,
        "load_carrying": c.load_carrying.value,
        "offensive": c.offensive.value,
        "defensive": c.defensive.value,
        "visible_damage": c.visible_damage,
        "missing_parts": c.missing_parts,
    }


def _exhibit_to_dict(e: Exhibit) -> dict:
    return {
        "exhibit_id": e.exhibit_id,
        "kind": e.kind.value,
        "parent_exhibit": e.parent_exhibit,
        "conventional_forensics_done": e.conventional_forensics_done,
        "seizure": _opt(e.seizure, _seizure_to_dict),
        "identification": _opt(e.identification, _identification_to_dict),
        "capabilities": _opt(e.capabilities, _capabilities_to_dict),
        "modifications": [
            {
                "category": m.category.value,
                "description": m.description,
                "standard_part": m.standard_part,
            }
            for m in e.modifications
        ],
        "storage_locations": [
            {
                "medium": loc.medium.value,
                "accessible": loc.accessible,
                "removed_as_sub_exhibit": loc.removed_as_sub_exhibit,
                "notes": loc.notes,
            }
            for loc in e.storage_locations
        ],
        "ports": [{"port_type": p.port_type.value, "notes": p.notes} for p in e.ports],
        "photographs": [
            {
                "category": p.category.value,
                "file_reference": p.file_reference,
                "taken_at": _ts(p.taken_at),
            }
            for p in e.photographs
        ],
    }


def _image_to_dict(img: StorageImage) -> dict:
    return {
        "image_path": img.image_path,
        "size_bytes": img.size_bytes,
        "sha256": img.manifest.sha256,
        "sha1": img.manifest.sha1,
        "bad_sectors": [list(pair) for pair in img.manifest.bad_sectors],
        "acquired_at": _ts(img.manifest.acquired_at),
        "source_description": img.source_description,
        "read_only": img.read_only,
        "is_clone": img.is_clone,
        "parent_image": img.parent_image,
        "exhibit_id": img.exhibit_id,
    }


def case_to_dict(case: CaseFile) -> dict:
    return {
        "format": FORMAT_TAG,
        "case_id": case.case_id,
        "examiner": case.examiner,
        "created_at": _ts(case.created_at),
        "offence": _opt(
            case.offence,
            lambda o: {
                "offence_name": o.offence_name,
                "alleged_role": o.alleged_role,
                "evidence_targets": o.evidence_targets,
            },
        ),
        "exhibits": [_exhibit_to_dict(e) for e in case.exhibits],
        "steps": [
            {
                "exhibit_id": r.exhibit_id,
                "step": r.step_number,
                "status": r.status.value,
                "justification": r.justification,
                "notes": r.notes,
                "updated_at": _ts(r.updated_at) if r.updated_at else None,
                "retried_after_destructive": r.retried_after_destructive,
            }
            for r in case.step_records
        ],
        "ledger": [
            {
                "sequence": entry.sequence,
                "actor": entry.event.actor,
                "action": entry.event.action.name,
                "exhibit_id": entry.event.exhibit_id,
                "occurred_at": _ts(entry.event.occurred_at),
                "note": entry.event.note,
                "prev_digest": entry.prev_digest,
                "entry_digest": entry.entry_digest,
            }
            for entry in case.ledger
        ],
        "images": [_image_to_dict(img) for img in case.images],
        "evidence": [
            {
                "item_id": item.item_id,
                "kind": item.kind.value,
                "source_exhibit": item.source_exhibit,
                "source_image": item.source_image,
                "producing_operation": item.producing_operation,
                "content_digest": item.content_digest,
                "artifact_path": item.artifact_path,
                "relevance_note": item.relevance_note,
            }
            for item in case.evidence
        ],
    }


# --- deserialization ---

def _seizure_from_dict(d: dict) -> SeizureRecord:
    return SeizureRecord(
        container_used=d["container_used"],
        exhibit_reference=d["exhibit_reference"],
        seizing_officer=d["seizing_officer"],
        unique_seal_number=d["unique_seal_number"],
        seized_when=coerce_timestamp(d["seized_when"]),
        seized_where=d["seized_where"],
        network_isolated=d["network_isolated"],
        signature_space_confirmed=d["signature_space_confirmed"],
    )


def _identification_from_dict(d: dict) -> IdentificationRecord:
    dims = d.get("dimensions_mm")
    return IdentificationRecord(
        make=d.get("make", ""),
        model=d.get("model", ""),
        serial_or_qr=d.get("serial_or_qr", ""),
        suspected_counterfeit=d.get("suspected_counterfeit", False),
        suspected_stolen=d.get("suspected_stolen", False),
        research_notes=d.get("research_notes", ""),
        dimensions_mm=tuple(dims) if dims else None,
    )


def _capabilities_from_dict(d: dict) -> CapabilityChecklist:
    return CapabilityChecklist(
        video_capture=TriState(d["video_capture"]),
        audio_capture=TriState(d["audio_capture"]),
        load_carrying=TriState(d["load_carrying"]),
        offensive=TriState(d["offensive"]),
        defensive=TriState(d["defensive"]),
        visible_damage=d.get("visible_damage", ""),
        missing_parts=d.get("missing_parts", ""),
    )


def exhibit_from_dict(d: dict) -> Exhibit:
    return Exhibit(
        exhibit_id=d["exhibit_id"],
        kind=ExhibitKind(d["kind"]),
        parent_exhibit=d.get("parent_exhibit"),
        conventional_forensics_done=d.get("conventional_forensics_done", False),
        seizure=_opt(d.get("seizure"), _seizure_from_dict),
        identification=_opt(d.get("identification"), _identification_from_dict),
        capabilities=_opt(d.get("capabilities"), _capabilities_from_dict),
        modifications=[
            ModificationRecord(
                category=ModificationCategory(m["category"]),
                description=m["description"],
                standard_part=m.get("standard_part", False),
            )
            for m in d.get("modifications") or []
        ],
        storage_locations=[
            StorageLocation(
                medium=StorageMedium(loc["medium"]),
                accessible=loc.get("accessible", True),
                removed_as_sub_exhibit=loc.get("removed_as_sub_exhibit"),
                notes=loc.get("notes", ""),
            )
            for loc in d.get("storage_locations") or []
        ],
        ports=[
            PortRecord(port_type=PortType(p["port_type"]), notes=p.get("notes", ""))
            for p in d.get("ports") or []
        ],
        photographs=[
            PhotoRecord(
                category=PhotoCategory(p["category"]),
                file_reference=p["file_reference"],
                taken_at=coerce_timestamp(p["taken_at"]),
            )
            for p in d.get("photographs") or []
        ],
    )


def _image_from_dict(d: dict) -> StorageImage:
    return StorageImage(
        image_path=d["image_path"],
        size_bytes=d["size_bytes"],
        manifest=HashManifest(
            sha256=d["sha256"],
            sha1=d["sha1"],
            bad_sectors=tuple(tuple(pair) for pair in d.get("bad_sectors") or []),
            acquired_at=coerce_timestamp(d["acquired_at"]),
        ),
        source_description=d.get("source_description", ""),
        read_only=d.get("read_only", True),
        is_clone=d.get("is_clone", False),
        parent_image=d.get("parent_image"),
        exhibit_id=d.get("exhibit_id"),
    )


def case_from_dict(data: dict) -> CaseFile:
    case = CaseFile(
        case_id=data["case_id"],
        examiner=data["examiner"],
        created_at=coerce_timestamp(data["created_at"]),
        offence=_opt(
            data.get("offence"),
            lambda o: OffenceContext(
                offence_name=o.get("offence_name", ""),
                alleged_role=o.get("alleged_role", ""),
                evidence_targets=o.get("evidence_targets", ""),
            ),
        ),
    )
    case.exhibits = [exhibit_from_dict(e) for e in data.get("exhibits") or []]
    case.step_records = [
        StepRecord(
            step_number=r["step"],
            exhibit_id=r["exhibit_id"],
            status=StepStatus(r["status"]),
            justification=r.get("justification", ""),
            notes=r.get("notes", ""),
            updated_at=coerce_timestamp(r["updated_at"]) if r.get("updated_at") else None,
            retried_after_destructive=r.get("retried_after_destructive", False),
        )
        for r in data.get("steps") or []
    ]
    case.ledger = [
        LedgerEntry(
            sequence=entry["sequence"],
            event=CustodyEvent(
                actor=entry["actor"],
                action=CustodyAction[entry["action"]],
                exhibit_id=entry["exhibit_id"],
                occurred_at=coerce_timestamp(entry["occurred_at"]),
                note=entry.get("note", ""),
            ),
            prev_digest=entry["prev_digest"],
            entry_digest=entry["entry_digest"],
        )
        for entry in data.get("ledger") or []
    ]
    case.images = [_image_from_dict(d) for d in data.get("images") or []]
    case.evidence = [
        EvidenceItem(
            item_id=item["item_id"],
            kind=EvidenceKind(item["kind"]),
            source_exhibit=item["source_exhibit"],
            source_image=item.get("source_image", ""),
            producing_operation=item.get("producing_operation", ""),
            content_digest=item["content_digest"],
            artifact_path=item.get("artifact_path", ""),
            relevance_note=item.get("relevance_note", ""),
        )
        for item in data.get("evidence") or []
    ]
    return case


# --- file operations ---

def case_path(case_dir: Path) -> Path:
    return Path(case_dir) / CASE_FILENAME


def save_case(case_dir: Path, case: CaseFile) -> Path:
    path = case_path(case_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = yaml.safe_dump(
        case_to_dict(case), sort_keys=False, allow_unicode=True, width=100
    )
    atomic_write_bytes(path, document.encode("utf-8"))
    return path


def load_case(case_dir: Path) -> CaseFile:
    path = case_path(case_dir)
    if not path.is_file():
        raise MissingFile(f"no case document at {path}")
    try:
        data = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise IoFailure(f"unreadable case document {path}: {exc}") from exc
    return case_from_dict(data)


def init_case_dir(case_dir: Path, case: CaseFile) -> Path:
    """Persist a new case; refuses a directory that already holds one."""
    path = case_path(case_dir)
    if path.exists():
        raise DuplicateCaseId(f"case document already exists at {path}")
    return save_case(case_dir, case)


@contextmanager
def case_lock(case_dir: Path):
    """Advisory single-mutator lock for a case directory."""
    case_dir = Path(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)
    lock = case_dir / LOCK_FILENAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockHeld(
            f"{lock} exists: another process is mutating this case "
            "(remove the file if that process died)"
        ) from None
    try:
        os.write(fd, f"pid={os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            lock.unlink()
        except OSError:
            pass
