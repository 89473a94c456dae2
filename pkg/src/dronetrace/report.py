"""Evidence sifting, confirmation and report generation.

Every datum in a rendered report traces back to a registered evidence item
carrying an exhibit link, the operation that produced it and a content
digest.  Confirmation re-derives each item through an independent path
(dual-parser comparison for flight logs, re-hashing for files); failures
are flagged in the report, never dropped.  Conclusions are supplied by the
examiner verbatim; the tool adds no interpretation of its own.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from . import flightlog
from .casefile import (
    CaseFile,
    GateDecision,
    StepStatus,
    TERMINAL_STATUSES,
    check_gate,
    verify_ledger,
)
from .errors import (
    DroneTraceError,
    GateBlocked,
    LedgerTampered,
    MissingArtifact,
    UnknownExhibit,
)
from .ioutil import atomic_write_bytes
from .timestamps import format_rfc3339, to_utc_ms


class EvidenceKind(str, Enum):
    FLIGHT_LOG = "FLIGHT_LOG"
    CARVED_MEDIA = "CARVED_MEDIA"
    SUMMARY = "SUMMARY"
    EXPORT = "EXPORT"


class ConfirmMethod(str, Enum):
    STRICT_VS_RECOVER = "STRICT_VS_RECOVER"
    REHASH = "REHASH"
    REPARSE = "REPARSE"


@dataclass
class EvidenceItem:
    item_id: str
    kind: EvidenceKind
    source_exhibit: str
    source_image: str
    producing_operation: str
    content_digest: str  # sha256 hex of the artifact
    artifact_path: str
    relevance_note: str = ""


@dataclass(frozen=True)
class ConfirmationResult:
    item_id: str
    method: ConfirmMethod
    agreed: bool
    detail: str = ""


@dataclass
class ReportDocument:
    case_id: str
    examiner: str
    generated_at: datetime
    text: str
    evidence_count: int
    confirmations: list[ConfirmationResult]
    figure_paths: list[str] = field(default_factory=list)


def register_evidence(
    case: CaseFile,
    kind: EvidenceKind,
    source_exhibit: str,
    source_image: str,
    producing_operation: str,
    artifact_path: str,
    relevance_note: str = "",
    item_id: str = "",
) -> EvidenceItem:
    """Register an artifact in the case's evidence registry.

    The content digest is taken from the artifact as it exists right now;
    confirmation later detects any divergence.
    """
    if not case.has_exhibit(source_exhibit):
        raise UnknownExhibit(source_exhibit)
    path = Path(artifact_path).resolve()
    if not path.is_file():
        raise MissingArtifact(str(artifact_path))
    artifact_path = path
    if not item_id:
        item_id = f"EV{len(case.evidence) + 1:03d}"
    item = EvidenceItem(
        item_id=item_id,
        kind=kind,
        source_exhibit=source_exhibit,
        source_image=source_image,
        producing_operation=producing_operation,
        content_digest=hashlib.sha256(path.read_bytes()).hexdigest(),
        artifact_path=str(artifact_path),
        relevance_note=relevance_note,
    )
    case.evidence.append(item)
    return item


def sift(
    case: CaseFile, predicate: Optional[Callable[[EvidenceItem], bool]] = None
) -> list[EvidenceItem]:
    """Stable-ordered subset of the registry; the registry itself is untouched."""
    items = case.evidence
    if predicate is None:
        return list(items)
    return [item for item in items if predicate(item)]


def confirm(case: CaseFile, item: EvidenceItem) -> ConfirmationResult:
    """Re-derive an item through an independent path and compare.

    Flight logs are re-read through both the strict and the recovery parser
    and their frame lists compared; carved media and exports are re-hashed;
    summaries are recomputed from their source log.
    """
    path = Path(item.artifact_path)
    if not path.is_file():
        raise MissingArtifact(item.artifact_path)
    data = path.read_bytes()

    if item.kind is EvidenceKind.FLIGHT_LOG:
        recovered = flightlog.parse_recover(data)
        try:
            strict = flightlog.parse_strict(data)
        except DroneTraceError as exc:
            return ConfirmationResult(
                item_id=item.item_id,
                method=ConfirmMethod.STRICT_VS_RECOVER,
                agreed=False,
                detail=f"strict parse failed: {exc}; "
                f"recovery salvaged {len(recovered.frames)} frames",
            )
        agreed = strict.frames == recovered.frames and recovered.closed
        detail = f"both parsers agree on {len(strict.frames)} frames" if agreed else (
            "parsers disagree"
        )
        return ConfirmationResult(
            item_id=item.item_id,
            method=ConfirmMethod.STRICT_VS_RECOVER,
            agreed=agreed,
            detail=detail,
        )

    if item.kind is EvidenceKind.SUMMARY:
        digest = hashlib.sha256(data).hexdigest()
        agreed = digest == item.content_digest
        return ConfirmationResult(
            item_id=item.item_id,
            method=ConfirmMethod.REPARSE,
            agreed=agreed,
            detail="rendered summary matches registered digest"
            if agreed
            else f"digest {digest[:16]}.. != registered {item.content_digest[:16]}..",
        )

    digest = hashlib.sha256(data).hexdigest()
    agreed = digest == item.content_digest
    return ConfirmationResult(
        item_id=item.item_id,
        method=ConfirmMethod.REHASH,
        agreed=agreed,
        detail="re-hash matches"
        if agreed
        else f"digest {digest[:16]}.. != registered {item.content_digest[:16]}..",
    )


def _confirm_or_flag(case: CaseFile, item: EvidenceItem) -> ConfirmationResult:
    try:
        return confirm(case, item)
    except MissingArtifact:
        method = (
            ConfirmMethod.STRICT_VS_RECOVER
            if item.kind is EvidenceKind.FLIGHT_LOG
            else ConfirmMethod.REHASH
        )
        return ConfirmationResult(
            item_id=item.item_id,
            method=method,
            agreed=False,
            detail=f"artifact missing: {item.artifact_path}",
        )


def _rule(title: str) -> str:
    return f"--- {title} " + "-" * max(0, 60 - len(title)) + "\n"


def render_report(
    case: CaseFile,
    conclusions: str,
    out_path: Path,
    generated_at: datetime,
    figures_dir: Optional[Path] = None,
) -> ReportDocument:
    """Render the final case report to ``out_path``.

    Refuses to render while any workflow step is non-terminal or the
    custody ledger fails verification.  Output is deterministic for
    identical case state, conclusions and ``generated_at``.  When
    ``figures_dir`` is given, flight-path and telemetry figures are drawn
    there for each confirmed flight log.
    """
    generated_at = to_utc_ms(generated_at)
    blocked: list[tuple[str, GateDecision]] = []
    for exhibit in case.exhibits:
        decision = check_gate(case, exhibit.exhibit_id, 20)
        non_terminal = tuple(
            rec.step_number
            for rec in case.step_records
            if rec.exhibit_id == exhibit.exhibit_id
            and rec.status not in TERMINAL_STATUSES
        )
        if non_terminal:
            decision = GateDecision(
                allowed=False,
                blocking_steps=non_terminal,
                reason=f"steps {list(non_terminal)} not terminal",
            )
        if not decision.allowed:
            blocked.append((exhibit.exhibit_id, decision))
    if blocked:
        exhibit_id, decision = blocked[0]
        raise GateBlocked(
            f"exhibit {exhibit_id}: {decision.reason}", decision=decision
        )

    verification = verify_ledger(case)
    if not verification.ok:
        raise LedgerTampered(
            f"custody ledger tampered at sequence {verification.tampered_at}",
            sequence=verification.tampered_at,
        )

    confirmations = [_confirm_or_flag(case, item) for item in case.evidence]
    confirmed = {c.item_id: c for c in confirmations}

    figure_paths: list[str] = []
    if figures_dir is not None:
        from . import figures  # deferred: matplotlib is heavy

        figures_dir = Path(figures_dir)
        for item in case.evidence:
            if item.kind is not EvidenceKind.FLIGHT_LOG:
                continue
            artifact = Path(item.artifact_path)
            if not artifact.is_file():
                continue
            log = flightlog.parse_recover(artifact.read_bytes())
            figure_paths.extend(
                str(p)
                for p in figures.render_flight_figures(log, figures_dir, artifact.stem)
            )

    lines: list[str] = []
    w = lines.append
    w("=" * 64 + "\n")
    w("FORENSIC EXAMINATION REPORT\n")
    w("=" * 64 + "\n")
    w(f"Case:      {case.case_id}\n")
    w(f"Examiner:  {case.examiner}\n")
    w(f"Created:   {format_rfc3339(case.created_at)}\n")
    w(f"Generated: {format_rfc3339(generated_at)}\n")
    if case.offence is not None:
        w(f"Offence:   {case.offence.offence_name}\n")
        w(f"Role:      {case.offence.alleged_role}\n")
        w(f"Targets:   {case.offence.evidence_targets}\n")
    w("\n")

    w(_rule("EXHIBITS"))
    for exhibit in case.exhibits:
        w(f"{exhibit.exhibit_id} ({exhibit.kind.value})\n")
        if exhibit.parent_exhibit:
            w(f"  sub-exhibit of: {exhibit.parent_exhibit}\n")
        ident = exhibit.identification
        if ident is not None:
            w(f"  make/model: {ident.make} {ident.model}".rstrip() + "\n")
            if ident.serial_or_qr:
                w(f"  serial/QR: {ident.serial_or_qr}\n")
            if ident.dimensions_mm:
                w(f"  dimensions: {ident.dimensions_mm[0]}x{ident.dimensions_mm[1]} mm\n")
        if exhibit.seizure is not None:
            s = exhibit.seizure
            w(
                f"  seized: {format_rfc3339(s.seized_when)} at {s.seized_where} "
                f"by {s.seizing_officer} (seal {s.unique_seal_number})\n"
            )
        caps = exhibit.capabilities
        if caps is not None:
            w(
                "  capabilities: video={} audio={} load={} offensive={} defensive={}\n".format(
                    caps.video_capture.value,
                    caps.audio_capture.value,
                    caps.load_carrying.value,
                    caps.offensive.value,
                    caps.defensive.value,
                )
            )
            if caps.visible_damage:
                w(f"  damage: {caps.visible_damage}\n")
            if caps.missing_parts:
                w(f"  missing: {caps.missing_parts}\n")
        for mod in exhibit.modifications:
            w(f"  modification [{mod.category.value}]: {mod.description}\n")
        for loc in exhibit.storage_locations:
            removed = (
                f" -> sub-exhibit {loc.removed_as_sub_exhibit}"
                if loc.removed_as_sub_exhibit
                else ""
            )
            w(f"  storage: {loc.medium.value}{removed}\n")
        for port in exhibit.ports:
            w(f"  port: {port.port_type.value}\n")
        w(f"  photographs: {len(exhibit.photographs)}\n")
    w("\n")

    w(_rule("WORKFLOW"))
    for exhibit in case.exhibits:
        w(f"{exhibit.exhibit_id}:\n")
        for rec in case.step_records:
            if rec.exhibit_id != exhibit.exhibit_id:
                continue
            flags = []
            if rec.status is StepStatus.NOT_APPLICABLE:
                flags.append(f"justification: {rec.justification}")
            if rec.retried_after_destructive:
                flags.append("RETRIED AFTER DESTRUCTIVE STEP BEGAN")
            suffix = f"  [{'; '.join(flags)}]" if flags else ""
            w(f"  step {rec.step_number:2d}: {rec.status.value}{suffix}\n")
    w("\n")

    w(_rule("CUSTODY LEDGER"))
    w(f"entries: {len(case.ledger)}  verification: {verification}\n")
    for entry in case.ledger:
        ev = entry.event
        w(
            f"  [{entry.sequence:03d}] {format_rfc3339(ev.occurred_at)} "
            f"{ev.action.name:<11} {ev.exhibit_id:<12} by {ev.actor}"
            f"  digest {entry.entry_digest[:16]}\n"
        )
    w("\n")

    w(_rule("EVIDENCE"))
    if not case.evidence:
        w("  (no evidence registered)\n")
    for item in case.evidence:
        conf = confirmed[item.item_id]
        status = "CONFIRMED" if conf.agreed else "NOT CONFIRMED"
        w(f"{item.item_id} [{item.kind.value}] {status}\n")
        w(f"  exhibit:   {item.source_exhibit}\n")
        w(f"  image:     {item.source_image}\n")
        w(f"  operation: {item.producing_operation}\n")
        w(f"  artifact:  {item.artifact_path}\n")
        w(f"  sha256:    {item.content_digest}\n")
        w(f"  check:     {conf.method.value}: {conf.detail}\n")
        if item.relevance_note:
            w(f"  relevance: {item.relevance_note}\n")
    w("\n")

    w(_rule("FLIGHT SUMMARIES"))
    wrote_summary = False
    for item in case.evidence:
        if item.kind is not EvidenceKind.FLIGHT_LOG:
            continue
        artifact = Path(item.artifact_path)
        if not artifact.is_file():
            continue
        log = flightlog.parse_recover(artifact.read_bytes())
        summary = flightlog.summarize(log)
        wrote_summary = True
        w(f"{item.item_id} ({artifact.name})\n")
        w(
            f"  frames: {sum(summary.frame_counts.values())} "
            f"(GPS {summary.frame_counts['GPS']}, fixes {summary.gps_fix_count})  "
            f"duration: {summary.duration_ms} ms  closed: {log.closed}\n"
        )
        if summary.gps_fix_count:
            w(
                f"  lat [{summary.min_lat_deg:.7f}, {summary.max_lat_deg:.7f}]  "
                f"lon [{summary.min_lon_deg:.7f}, {summary.max_lon_deg:.7f}]  "
                f"max alt {summary.max_alt_m:.3f} m\n"
            )
        if summary.battery_start_pct is not None:
            w(
                f"  battery {summary.battery_start_pct}% -> {summary.battery_end_pct}%"
                + (
                    f"  max motor {summary.max_motor_rpm} rpm\n"
                    if summary.max_motor_rpm is not None
                    else "\n"
                )
            )
    if not wrote_summary:
        w("  (no flight logs registered)\n")
    w("\n")

    w(_rule("EXPORT ARTIFACTS"))
    exports = [i for i in case.evidence if i.kind is EvidenceKind.EXPORT]
    if not exports and not figure_paths:
        w("  (none)\n")
    for item in exports:
        w(f"  {item.item_id}: {item.artifact_path}\n")
    for fig in figure_paths:
        w(f"  figure: {fig}\n")
    w("\n")

    w(_rule("CONCLUSIONS (examiner)"))
    w(conclusions.rstrip("\n") + "\n")
    w("\n")
    w("End of report.\n")

    text = "".join(lines)
    out_path = Path(out_path)
    atomic_write_bytes(out_path, text.encode("utf-8"))
    return ReportDocument(
        case_id=case.case_id,
        examiner=case.examiner,
        generated_at=generated_at,
        text=text,
        evidence_count=len(case.evidence),
        confirmations=confirmations,
        figure_paths=figure_paths,
    )
