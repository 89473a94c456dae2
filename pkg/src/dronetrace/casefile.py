"""Case files, exhibits, custody ledger and the 20-step workflow.

The examination workflow runs in three stages: preparation (steps 1-6),
examination (steps 7-17) and analysis/report (steps 18-20).  Steps are
free-order except step 17 (destructive extraction, allowed only once the
non-destructive steps 11-15 are terminal) and step 20 (report issuance,
allowed only once everything else is terminal).

The custody ledger is an append-only SHA-256 hash chain.  Entry digests are
computed over a canonical length-prefixed serialization so that independent
implementations can re-verify a persisted ledger byte-for-byte.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Callable, Optional

from .errors import (
    DanglingParent,
    DuplicateExhibitId,
    EmptyField,
    GateBlocked,
    IllegalTransition,
    MissingJustification,
    TimeRegression,
    UnknownExhibit,
)
from .timestamps import to_utc_ms, unix_ms

STEP_COUNT = 20
STAGE_STEPS = {1: range(1, 7), 2: range(7, 18), 3: range(18, 21)}

GENESIS_DIGEST = "00" * 32


class ExhibitKind(str, Enum):
    UAV = "UAV"
    GCS = "GCS"
    MOBILE_DEVICE = "MOBILE_DEVICE"
    MEMORY_CARD = "MEMORY_CARD"
    OTHER = "OTHER"


class TriState(str, Enum):
    YES = "YES"
    NO = "NO"
    UNKNOWN = "UNKNOWN"


class ModificationCategory(str, Enum):
    BATTERY = "BATTERY"
    MOTORS = "MOTORS"
    PROPELLERS = "PROPELLERS"
    CAMERA = "CAMERA"
    LOAD_CARRIER = "LOAD_CARRIER"
    OTHER = "OTHER"


class StorageMedium(str, Enum):
    REMOVABLE_CARD = "REMOVABLE_CARD"
    FIXED_CARD = "FIXED_CARD"
    FLASH = "FLASH"
    SIM = "SIM"


class PortType(str, Enum):
    USB2 = "USB2"
    USB3 = "USB3"
    USB_C = "USB_C"
    MICRO_USB = "MICRO_USB"
    LIGHTNING_STYLE = "LIGHTNING_STYLE"
    OTHER = "OTHER"


class PhotoCategory(str, Enum):
    IN_CONTAINER = "IN_CONTAINER"
    CONTAINER_DETAILS = "CONTAINER_DETAILS"
    OUT_OF_CONTAINER = "OUT_OF_CONTAINER"
    ANGLES = "ANGLES"
    MARKINGS = "MARKINGS"
    MODIFICATION = "MODIFICATION"
    DAMAGE = "DAMAGE"
    BIOS = "BIOS"
    LOAD_MECHANISM = "LOAD_MECHANISM"
    WEAPON_CAPABILITY = "WEAPON_CAPABILITY"


class CustodyAction(Enum):
    SEIZED = 0
    TRANSFERRED = 1
    OPENED = 2
    EXAMINED = 3
    RESEALED = 4
    ACQUIRED = 5
    CLONED = 6
    RETURNED = 7


class StepStatus(str, Enum):
    PENDING = "PENDING"
    IN_PROGRESS = "IN_PROGRESS"
    DONE = "DONE"
    NOT_APPLICABLE = "NOT_APPLICABLE"
    FAILED = "FAILED"


TERMINAL_STATUSES = frozenset(
    {StepStatus.DONE, StepStatus.FAILED, StepStatus.NOT_APPLICABLE}
)

# Legal status moves.  PENDING -> NOT_APPLICABLE is allowed directly so a
# step can be skipped with justification without a token "in progress" pass.
_LEGAL_TRANSITIONS = frozenset(
    {
        (StepStatus.PENDING, StepStatus.IN_PROGRESS),
        (StepStatus.PENDING, StepStatus.NOT_APPLICABLE),
        (StepStatus.IN_PROGRESS, StepStatus.DONE),
        (StepStatus.IN_PROGRESS, StepStatus.FAILED),
        (StepStatus.IN_PROGRESS, StepStatus.NOT_APPLICABLE),
        (StepStatus.FAILED, StepStatus.IN_PROGRESS),
    }
)


@dataclass(frozen=True)
class SeizureRecord:
    """Answers to the seven seizure-container questions.

    Constructing a record answers every question; there are no defaults.
    """

    container_used: bool
    exhibit_reference: str
    seizing_officer: str
    unique_seal_number: str
    seized_when: datetime
    seized_where: str
    network_isolated: bool
    signature_space_confirmed: bool

    def __post_init__(self):
        object.__setattr__(self, "seized_when", to_utc_ms(self.seized_when))


@dataclass
class IdentificationRecord:
    make: str = ""
    model: str = ""
    serial_or_qr: str = ""
    suspected_counterfeit: bool = False
    suspected_stolen: bool = False
    research_notes: str = ""
    dimensions_mm: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.dimensions_mm is not None:
            w, d = self.dimensions_mm
            if w <= 0 or d <= 0:
                raise EmptyField("dimensions_mm must be positive")
            self.dimensions_mm = (int(w), int(d))


@dataclass
class CapabilityChecklist:
    video_capture: TriState = TriState.UNKNOWN
    audio_capture: TriState = TriState.UNKNOWN
    load_carrying: TriState = TriState.UNKNOWN
    offensive: TriState = TriState.UNKNOWN
    defensive: TriState = TriState.UNKNOWN
    visible_damage: str = ""
    missing_parts: str = ""


@dataclass
class ModificationRecord:
    category: ModificationCategory
    description: str
    standard_part: bool = False

    def __post_init__(self):
        if not self.description:
            raise EmptyField("modification description")


@dataclass
class StorageLocation:
    medium: StorageMedium
    accessible: bool = True
    removed_as_sub_exhibit: Optional[str] = None
    notes: str = ""


@dataclass
class PortRecord:
    port_type: PortType
    notes: str = ""


@dataclass
class PhotoRecord:
    category: PhotoCategory
    file_reference: str
    taken_at: datetime

    def __post_init__(self):
        if not self.file_reference:
            raise EmptyField("photo file_reference")
        self.taken_at = to_utc_ms(self.taken_at)


@dataclass
class Exhibit:
    exhibit_id: str
    kind: ExhibitKind
    parent_exhibit: Optional[str] = None
    seizure: Optional[SeizureRecord] = None
    identification: Optional[IdentificationRecord] = None
    capabilities: Optional[CapabilityChecklist] = None
    modifications: list[ModificationRecord] = field(default_factory=list)
    storage_locations: list[StorageLocation] = field(default_factory=list)
    ports: list[PortRecord] = field(default_factory=list)
    photographs: list[PhotoRecord] = field(default_factory=list)
    conventional_forensics_done: bool = False


@dataclass(frozen=True)
class CustodyEvent:
    actor: str
    action: CustodyAction
    exhibit_id: str
    occurred_at: datetime
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "occurred_at", to_utc_ms(self.occurred_at))


@dataclass(frozen=True)
class LedgerEntry:
    sequence: int
    event: CustodyEvent
    prev_digest: str  # lowercase hex, 64 chars
    entry_digest: str


@dataclass
class StepRecord:
    step_number: int
    exhibit_id: str
    status: StepStatus = StepStatus.PENDING
    justification: str = ""
    notes: str = ""
    updated_at: Optional[datetime] = None
    retried_after_destructive: bool = False


@dataclass(frozen=True)
class GateDecision:
    allowed: bool
    blocking_steps: tuple[int, ...]
    reason: str


@dataclass
class OffenceContext:
    """Free-text offence analysis (step 3): no closed taxonomy exists."""

    offence_name: str = ""
    alleged_role: str = ""
    evidence_targets: str = ""


@dataclass
class CaseFile:
    case_id: str
    examiner: str
    created_at: datetime
    offence: Optional[OffenceContext] = None
    exhibits: list[Exhibit] = field(default_factory=list)
    ledger: list[LedgerEntry] = field(default_factory=list)
    step_records: list[StepRecord] = field(default_factory=list)
    images: list = field(default_factory=list)  # imaging.StorageImage
    evidence: list = field(default_factory=list)  # report.EvidenceItem

    def exhibit(self, exhibit_id: str) -> Exhibit:
        for ex in self.exhibits:
            if ex.exhibit_id == exhibit_id:
                return ex
        raise UnknownExhibit(exhibit_id)

    def has_exhibit(self, exhibit_id: str) -> bool:
        return any(ex.exhibit_id == exhibit_id for ex in self.exhibits)

    def step_record(self, exhibit_id: str, step_number: int) -> StepRecord:
        for rec in self.step_records:
            if rec.exhibit_id == exhibit_id and rec.step_number == step_number:
                return rec
        raise UnknownExhibit(f"{exhibit_id} step {step_number}")


@dataclass(frozen=True)
class StageCounts:
    terminal: int
    total: int

    @property
    def complete(self) -> bool:
        return self.terminal == self.total


@dataclass(frozen=True)
class ExhibitStageSummary:
    exhibit_id: str
    stage1: StageCounts
    stage2: StageCounts
    stage3: StageCounts

    @property
    def complete(self) -> bool:
        return self.stage1.complete and self.stage2.complete and self.stage3.complete


@dataclass(frozen=True)
class StageSummary:
    exhibits: tuple[ExhibitStageSummary, ...]

    @property
    def complete(self) -> bool:
        return all(e.complete for e in self.exhibits)


@dataclass(frozen=True)
class LedgerVerification:
    ok: bool
    tampered_at: Optional[int] = None

    def __str__(self) -> str:
        return "OK" if self.ok else f"TAMPERED at {self.tampered_at}"


# --- ledger hashing ---

def canonical_entry_bytes(sequence: int, event: CustodyEvent, prev_digest: str) -> bytes:
    """Canonical serialization covered by the entry digest.

    Layout: sequence u64 BE | actor len u32 BE | actor | action code u8 |
    exhibit_id len u32 BE | exhibit_id | occurred_at unix-ms u64 BE |
    note len u32 BE | note | prev digest raw 32 bytes.
    """
    actor = event.actor.encode("utf-8")
    exhibit = event.exhibit_id.encode("utf-8")
    note = event.note.encode("utf-8")
    return b"".join(
        (
            struct.pack(">Q", sequence),
            struct.pack(">I", len(actor)),
            actor,
            struct.pack(">B", event.action.value),
            struct.pack(">I", len(exhibit)),
            exhibit,
            struct.pack(">Q", unix_ms(event.occurred_at)),
            struct.pack(">I", len(note)),
            note,
            bytes.fromhex(prev_digest),
        )
    )


def compute_entry_digest(sequence: int, event: CustodyEvent, prev_digest: str) -> str:
    return hashlib.sha256(canonical_entry_bytes(sequence, event, prev_digest)).hexdigest()


# --- operations ---

def create_case(
    case_id: str,
    examiner: str,
    created_at: datetime,
    offence: Optional[OffenceContext] = None,
) -> CaseFile:
    """Create an empty case. Store-level id uniqueness is enforced on save."""
    if not case_id:
        raise EmptyField("case_id")
    if not examiner:
        raise EmptyField("examiner")
    return CaseFile(
        case_id=case_id,
        examiner=examiner,
        created_at=to_utc_ms(created_at),
        offence=offence,
    )


def add_exhibit(case: CaseFile, descriptor: Exhibit) -> str:
    """Attach an exhibit, open its 20 PENDING step records and log seizure.

    A populated seizure record appends a SEIZED custody event stamped with
    the seizure time, so exhibits must be added in seizure order.
    """
    if not descriptor.exhibit_id:
        raise EmptyField("exhibit_id")
    if case.has_exhibit(descriptor.exhibit_id):
        raise DuplicateExhibitId(descriptor.exhibit_id)
    if descriptor.parent_exhibit is not None and not case.has_exhibit(
        descriptor.parent_exhibit
    ):
        raise DanglingParent(descriptor.parent_exhibit)
    for loc in descriptor.storage_locations:
        if loc.removed_as_sub_exhibit is not None:
            _require_memory_card(case, loc.removed_as_sub_exhibit)

    case.exhibits.append(descriptor)
    for step in range(1, STEP_COUNT + 1):
        case.step_records.append(
            StepRecord(step_number=step, exhibit_id=descriptor.exhibit_id)
        )
    if descriptor.seizure is not None:
        seizure = descriptor.seizure
        append_custody(
            case,
            CustodyEvent(
                actor=seizure.seizing_officer,
                action=CustodyAction.SEIZED,
                exhibit_id=descriptor.exhibit_id,
                occurred_at=seizure.seized_when,
                note=f"seized at {seizure.seized_where}",
            ),
        )
    return descriptor.exhibit_id


def _require_memory_card(case: CaseFile, exhibit_id: str) -> None:
    if not case.has_exhibit(exhibit_id):
        raise DanglingParent(exhibit_id)
    if case.exhibit(exhibit_id).kind is not ExhibitKind.MEMORY_CARD:
        raise DanglingParent(f"{exhibit_id} is not a MEMORY_CARD exhibit")


def link_removed_card(
    case: CaseFile, owner_id: str, location_index: int, card_exhibit_id: str
) -> None:
    """Mark a storage location as removed into a MEMORY_CARD sub-exhibit.

    Needed after the fact: the card exhibit cannot exist before its owner.
    """
    owner = case.exhibit(owner_id)
    if not 0 <= location_index < len(owner.storage_locations):
        raise UnknownExhibit(f"{owner_id} storage location {location_index}")
    _require_memory_card(case, card_exhibit_id)
    owner.storage_locations[location_index].removed_as_sub_exhibit = card_exhibit_id


def append_custody(case: CaseFile, event: CustodyEvent) -> LedgerEntry:
    """Append a custody event; returns the chained ledger entry."""
    if not case.has_exhibit(event.exhibit_id):
        raise UnknownExhibit(event.exhibit_id)
    if unix_ms(event.occurred_at) < 0:
        raise TimeRegression("custody event predates the epoch")
    if case.ledger:
        tail = case.ledger[-1]
        if event.occurred_at < tail.event.occurred_at:
            raise TimeRegression(
                f"{event.occurred_at} is before ledger tail {tail.event.occurred_at}"
            )
        prev_digest = tail.entry_digest
        sequence = tail.sequence + 1
    else:
        prev_digest = GENESIS_DIGEST
        sequence = 0
    entry = LedgerEntry(
        sequence=sequence,
        event=event,
        prev_digest=prev_digest,
        entry_digest=compute_entry_digest(sequence, event, prev_digest),
    )
    case.ledger.append(entry)
    return entry


def verify_ledger(case: CaseFile) -> LedgerVerification:
    """Recompute every digest and chain link; tampering is a return value."""
    prev = GENESIS_DIGEST
    for index, entry in enumerate(case.ledger):
        if entry.sequence != index or entry.prev_digest != prev:
            return LedgerVerification(ok=False, tampered_at=index)
        try:
            recomputed = compute_entry_digest(entry.sequence, entry.event, entry.prev_digest)
        except (ValueError, struct.error):
            return LedgerVerification(ok=False, tampered_at=index)
        if recomputed != entry.entry_digest:
            return LedgerVerification(ok=False, tampered_at=index)
        prev = entry.entry_digest
    return LedgerVerification(ok=True)


def check_gate(case: CaseFile, exhibit_id: str, step_number: int) -> GateDecision:
    """Ordering gate for a step.

    Step 17 (destructive extraction) requires steps 11-15 terminal.  Step 20
    (report issuance) requires every other step terminal.  All other steps
    are free-order.
    """
    case.exhibit(exhibit_id)  # raises UnknownExhibit
    if step_number == 17:
        required = [11, 12, 13, 14, 15]
        label = "destructive extraction requires non-destructive steps exhausted"
    elif step_number == 20:
        required = [n for n in range(1, STEP_COUNT + 1) if n != 20]
        label = "report issuance requires all prior steps terminal"
    else:
        return GateDecision(allowed=True, blocking_steps=(), reason="step is free-order")

    blocking = tuple(
        n
        for n in required
        if case.step_record(exhibit_id, n).status not in TERMINAL_STATUSES
    )
    if blocking:
        return GateDecision(
            allowed=False,
            blocking_steps=blocking,
            reason=f"{label}; blocked by steps {list(blocking)}",
        )
    return GateDecision(allowed=True, blocking_steps=(), reason=label)


def record_step(
    case: CaseFile,
    exhibit_id: str,
    step_number: int,
    new_status: StepStatus,
    at: datetime,
    notes: str = "",
    justification: str = "",
) -> StepRecord:
    """Move a step through the workflow state machine.

    DONE on steps 11-17 appends an EXAMINED custody event.  A FAILED step
    retried after destructive extraction has begun is allowed but flagged
    for the report.
    """
    if not 1 <= step_number <= STEP_COUNT:
        raise UnknownExhibit(f"step {step_number} out of range")
    record = case.step_record(exhibit_id, step_number)

    if (record.status, new_status) not in _LEGAL_TRANSITIONS:
        raise IllegalTransition(
            f"step {step_number}: {record.status.value} -> {new_status.value}"
        )
    if new_status is StepStatus.NOT_APPLICABLE and not justification:
        raise MissingJustification(f"step {step_number} marked NOT_APPLICABLE")
    if new_status is StepStatus.IN_PROGRESS and step_number in (17, 20):
        decision = check_gate(case, exhibit_id, step_number)
        if not decision.allowed:
            raise GateBlocked(decision.reason, decision=decision)
    if new_status is StepStatus.DONE and step_number == 7:
        if case.exhibit(exhibit_id).capabilities is None:
            raise IllegalTransition(
                "step 7 cannot be DONE before the capability checklist is recorded"
            )

    # custody first: if its timestamp regresses, the record stays untouched
    if new_status is StepStatus.DONE and 11 <= step_number <= 17:
        append_custody(
            case,
            CustodyEvent(
                actor=case.examiner,
                action=CustodyAction.EXAMINED,
                exhibit_id=exhibit_id,
                occurred_at=at,
                note=f"step {step_number} completed",
            ),
        )

    if record.status is StepStatus.FAILED and new_status is StepStatus.IN_PROGRESS:
        destructive = case.step_record(exhibit_id, 17)
        if destructive.status is not StepStatus.PENDING and step_number != 17:
            record.retried_after_destructive = True

    record.status = new_status
    record.updated_at = to_utc_ms(at)
    if notes:
        record.notes = notes
    if justification:
        record.justification = justification
    return replace_copy(record)


def replace_copy(record: StepRecord) -> StepRecord:
    """Snapshot a step record so callers hold an immutable view."""
    return replace(record)


def case_status(case: CaseFile) -> StageSummary:
    """Terminal/total step counts per exhibit, grouped into the three stages."""
    summaries = []
    for exhibit in case.exhibits:
        counts = {}
        for stage, steps in STAGE_STEPS.items():
            total = len(steps)
            terminal = sum(
                1
                for n in steps
                if case.step_record(exhibit.exhibit_id, n).status in TERMINAL_STATUSES
            )
            counts[stage] = StageCounts(terminal=terminal, total=total)
        summaries.append(
            ExhibitStageSummary(
                exhibit_id=exhibit.exhibit_id,
                stage1=counts[1],
                stage2=counts[2],
                stage3=counts[3],
            )
        )
    return StageSummary(exhibits=tuple(summaries))


def sift_records(
    case: CaseFile, predicate: Callable[[StepRecord], bool]
) -> list[StepRecord]:
    """Stable-ordered filtered view of step records (read-only helper)."""
    return [replace_copy(r) for r in case.step_records if predicate(r)]
