"""Command-line surface for the toolkit.

Every mutating subcommand rewrites the case document atomically under an
advisory lock.  Exit codes: 0 success, 1 validation or gate failure (the
message names the blocking rule), 2 integrity failure (hash mismatch,
tampered ledger), 3 I/O failure.
"""

from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import click

from . import carving, casefile, export, fixtures, flightlog, imaging, report, store
from .errors import DroneTraceError, InvalidParams, MissingFile, UnknownExhibit
from .timestamps import parse_rfc3339, to_utc_ms, unix_ms


@dataclass
class AppContext:
    case_dir: Optional[Path]
    now: datetime


pass_app = click.make_pass_decorator(AppContext)


def _parse_ts(_ctx, _param, value):
    if value is None:
        return None
    try:
        return parse_rfc3339(value)
    except ValueError as exc:
        raise click.BadParameter(f"not an RFC 3339 timestamp: {value}") from exc


_AT_OPTION = click.option(
    "--at", callback=_parse_ts, default=None, help="Event timestamp (RFC 3339); defaults to --now."
)
_JSON_OPTION = click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")


@click.group()
@click.option(
    "--case",
    "case_dir",
    envvar="DRONETRACE_CASE",
    type=click.Path(path_type=Path),
    default=None,
    help="Case directory (or set DRONETRACE_CASE).",
)
@click.option(
    "--now",
    callback=_parse_ts,
    default=None,
    help="Override the current time (RFC 3339) for reproducible runs.",
)
@click.pass_context
def cli(ctx: click.Context, case_dir: Optional[Path], now: Optional[datetime]):
    """Forensic workflow toolkit for UAV examinations."""
    ctx.obj = AppContext(
        case_dir=case_dir,
        now=now if now is not None else to_utc_ms(datetime.now(timezone.utc)),
    )


def _require_case_dir(app: AppContext) -> Path:
    if app.case_dir is None:
        raise InvalidParams("no case directory: pass --case or set DRONETRACE_CASE")
    return app.case_dir


def _load_case(app: AppContext) -> casefile.CaseFile:
    return store.load_case(_require_case_dir(app))


@contextmanager
def _mutate_case(app: AppContext):
    """Lock, load, yield, save: the single-writer path for one case."""
    case_dir = _require_case_dir(app)
    with store.case_lock(case_dir):
        case = store.load_case(case_dir)
        yield case
        store.save_case(case_dir, case)


def _emit(as_json: bool, payload: dict, text: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(text)


def _image_record(case: Optional[casefile.CaseFile], path: Path) -> imaging.StorageImage:
    """Resolve an image: case registry first, sidecar manifest second."""
    resolved = str(path)
    if case is not None:
        for img in case.images:
            if img.image_path == resolved:
                return img
    return imaging.load_manifest_sidecar(path)


# --- case ---

@cli.group()
def case():
    """Create and inspect cases."""


@case.command("new")
@click.option("--case-id", required=True)
@click.option("--examiner", required=True)
@click.option("--offence", default="", help="Offence under investigation (free text).")
@click.option("--role", default="", help="Alleged role of the device (free text).")
@click.option("--targets", default="", help="Evidence targets (free text).")
@pass_app
def case_new(app: AppContext, case_id: str, examiner: str, offence: str, role: str, targets: str):
    """Create an empty case in the case directory."""
    case_dir = _require_case_dir(app)
    context = None
    if offence or role or targets:
        context = casefile.OffenceContext(
            offence_name=offence, alleged_role=role, evidence_targets=targets
        )
    new_case = casefile.create_case(case_id, examiner, created_at=app.now, offence=context)
    store.init_case_dir(case_dir, new_case)
    click.echo(f"created case {case_id} in {case_dir}")


@case.command("status")
@_JSON_OPTION
@pass_app
def case_status_cmd(app: AppContext, as_json: bool):
    """Stage progress per exhibit."""
    current = _load_case(app)
    summary = casefile.case_status(current)
    payload = {
        "case_id": current.case_id,
        "examiner": current.examiner,
        "ledger_entries": len(current.ledger),
        "evidence_items": len(current.evidence),
        "exhibits": [
            {
                "exhibit_id": ex.exhibit_id,
                "stage1": [ex.stage1.terminal, ex.stage1.total],
                "stage2": [ex.stage2.terminal, ex.stage2.total],
                "stage3": [ex.stage3.terminal, ex.stage3.total],
                "complete": ex.complete,
            }
            for ex in summary.exhibits
        ],
    }
    lines = [f"case {current.case_id} (examiner: {current.examiner})"]
    for ex in summary.exhibits:
        lines.append(
            f"  {ex.exhibit_id}: stage1 {ex.stage1.terminal}/{ex.stage1.total}  "
            f"stage2 {ex.stage2.terminal}/{ex.stage2.total}  "
            f"stage3 {ex.stage3.terminal}/{ex.stage3.total}"
            + ("  COMPLETE" if ex.complete else "")
        )
    lines.append(f"  ledger: {len(current.ledger)} entries, evidence: {len(current.evidence)} items")
    _emit(as_json, payload, "\n".join(lines))


# --- exhibit ---

@cli.group()
def exhibit():
    """Manage exhibits."""


@exhibit.command("add")
@click.option("--id", "exhibit_id", required=True)
@click.option(
    "--kind",
    type=click.Choice([k.value for k in casefile.ExhibitKind], case_sensitive=False),
    required=True,
)
@click.option("--parent", default=None, help="Parent exhibit id (sub-exhibits).")
@click.option(
    "--descriptor",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="YAML file with the full exhibit descriptor.",
)
@click.option("--make", "make_", default="")
@click.option("--model", default="")
@click.option("--serial", default="")
@pass_app
def exhibit_add(
    app: AppContext,
    exhibit_id: str,
    kind: str,
    parent: Optional[str],
    descriptor: Optional[Path],
    make_: str,
    model: str,
    serial: str,
):
    """Attach an exhibit; opens its 20-step record matrix."""
    if descriptor is not None:
        import yaml

        data = yaml.safe_load(descriptor.read_text("utf-8")) or {}
        data.setdefault("exhibit_id", exhibit_id)
        data.setdefault("kind", kind.upper())
        if parent is not None:
            data["parent_exhibit"] = parent
        ex = store.exhibit_from_dict(data)
    else:
        identification = None
        if make_ or model or serial:
            identification = casefile.IdentificationRecord(
                make=make_, model=model, serial_or_qr=serial
            )
        ex = casefile.Exhibit(
            exhibit_id=exhibit_id,
            kind=casefile.ExhibitKind(kind.upper()),
            parent_exhibit=parent,
            identification=identification,
        )
    with _mutate_case(app) as current:
        casefile.add_exhibit(current, ex)
    click.echo(f"added exhibit {exhibit_id}")


@exhibit.command("show")
@click.argument("exhibit_id")
@_JSON_OPTION
@pass_app
def exhibit_show(app: AppContext, exhibit_id: str, as_json: bool):
    """Show one exhibit descriptor."""
    current = _load_case(app)
    current.exhibit(exhibit_id)  # raises UNKNOWN_EXHIBIT
    payload = store.case_to_dict(current)
    record = next(e for e in payload["exhibits"] if e["exhibit_id"] == exhibit_id)
    import yaml

    _emit(as_json, record, yaml.safe_dump(record, sort_keys=False).rstrip())


# --- custody ---

@cli.group()
def custody():
    """Chain-of-custody ledger."""


@custody.command("log")
@click.option("--exhibit", "exhibit_id", required=True)
@click.option("--actor", required=True)
@click.option(
    "--action",
    type=click.Choice([a.name for a in casefile.CustodyAction], case_sensitive=False),
    required=True,
)
@click.option("--note", default="")
@_AT_OPTION
@pass_app
def custody_log(app: AppContext, exhibit_id: str, actor: str, action: str, note: str, at):
    """Append a custody event to the hash-chained ledger."""
    with _mutate_case(app) as current:
        entry = casefile.append_custody(
            current,
            casefile.CustodyEvent(
                actor=actor,
                action=casefile.CustodyAction[action.upper()],
                exhibit_id=exhibit_id,
                occurred_at=at or app.now,
                note=note,
            ),
        )
    click.echo(f"ledger entry {entry.sequence}: {entry.entry_digest}")


@custody.command("verify")
@_JSON_OPTION
@click.pass_context
def custody_verify(ctx: click.Context, as_json: bool):
    """Verify the ledger hash chain; exit 2 on tampering."""
    current = _load_case(ctx.obj)
    result = casefile.verify_ledger(current)
    _emit(
        as_json,
        {"ok": result.ok, "tampered_at": result.tampered_at, "entries": len(current.ledger)},
        str(result),
    )
    if not result.ok:
        ctx.exit(2)


# --- step ---

_STATUS_CHOICES = {s.value.lower().replace("_", "-"): s for s in casefile.StepStatus}


@cli.group()
def step():
    """20-step workflow progress."""


@step.command("set")
@click.option("--exhibit", "exhibit_id", required=True)
@click.option("--step", "step_number", type=click.IntRange(1, 20), required=True)
@click.option("--status", type=click.Choice(sorted(_STATUS_CHOICES)), required=True)
@click.option("--notes", default="")
@click.option("--justification", default="")
@_AT_OPTION
@pass_app
def step_set(
    app: AppContext,
    exhibit_id: str,
    step_number: int,
    status: str,
    notes: str,
    justification: str,
    at,
):
    """Record a step status transition (gated where required)."""
    with _mutate_case(app) as current:
        record = casefile.record_step(
            current,
            exhibit_id,
            step_number,
            _STATUS_CHOICES[status],
            at=at or app.now,
            notes=notes,
            justification=justification,
        )
    click.echo(f"step {record.step_number} -> {record.status.value}")


@step.command("gate")
@click.option("--exhibit", "exhibit_id", required=True)
@click.option("--step", "step_number", type=click.IntRange(1, 20), required=True)
@_JSON_OPTION
@click.pass_context
def step_gate(ctx: click.Context, exhibit_id: str, step_number: int, as_json: bool):
    """Evaluate the ordering gate for a step; exit 1 when blocked."""
    current = _load_case(ctx.obj)
    decision = casefile.check_gate(current, exhibit_id, step_number)
    _emit(
        as_json,
        {
            "allowed": decision.allowed,
            "blocking_steps": list(decision.blocking_steps),
            "reason": decision.reason,
        },
        ("ALLOWED" if decision.allowed else "BLOCKED") + f": {decision.reason}",
    )
    if not decision.allowed:
        ctx.exit(1)


# --- image ---

@cli.group()
def image():
    """Forensic imaging."""


@image.command("acquire")
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.argument("dest", type=click.Path(path_type=Path))
@click.option("--sector-size", type=int, default=imaging.DEFAULT_SECTOR_SIZE, show_default=True)
@click.option("--exhibit", "exhibit_id", default=None, help="Register against this exhibit.")
@click.option("--desc", "description", default="", help="Source description.")
@_AT_OPTION
@pass_app
def image_acquire(
    app: AppContext,
    source: Path,
    dest: Path,
    sector_size: int,
    exhibit_id: Optional[str],
    description: str,
    at,
):
    """Acquire SOURCE into a read-only image with a digest manifest."""
    at = at or app.now
    with open(source, "rb") as stream:
        img = imaging.acquire(
            stream,
            dest,
            acquired_at=at,
            sector_size=sector_size,
            source_description=description or str(source),
            exhibit_id=exhibit_id,
        )
    if app.case_dir is not None and exhibit_id is not None:
        with _mutate_case(app) as current:
            current.exhibit(exhibit_id)  # validate
            current.images.append(img)
            casefile.append_custody(
                current,
                casefile.CustodyEvent(
                    actor=current.examiner,
                    action=casefile.CustodyAction.ACQUIRED,
                    exhibit_id=exhibit_id,
                    occurred_at=at,
                    note=f"acquired {source} -> {dest}",
                ),
            )
    click.echo(f"acquired {img.size_bytes} bytes, sha256 {img.manifest.sha256}")
    if img.manifest.bad_sectors:
        click.echo(f"bad sectors: {list(img.manifest.bad_sectors)}")


@image.command("verify")
@click.argument("path", type=click.Path(path_type=Path))
@_JSON_OPTION
@click.pass_context
def image_verify(ctx: click.Context, path: Path, as_json: bool):
    """Re-hash an image against its manifest; exit 2 on mismatch."""
    app: AppContext = ctx.obj
    current = _load_case(app) if app.case_dir is not None else None
    img = _image_record(current, path)
    result = imaging.verify_image(img)
    _emit(
        as_json,
        {"ok": result.ok, "mismatched": list(result.mismatched), "path": str(path)},
        str(result),
    )
    if not result.ok:
        ctx.exit(2)


@image.command("clone")
@click.argument("source", type=click.Path(exists=True, path_type=Path))
@click.argument("dest", type=click.Path(path_type=Path))
@_AT_OPTION
@pass_app
def image_clone(app: AppContext, source: Path, dest: Path, at):
    """Clone a verified image into a writable working copy."""
    at = at or app.now
    current = _load_case(app) if app.case_dir is not None else None
    img = _image_record(current, source)
    record, clone_img = imaging.clone(img, dest, cloned_at=at)
    if current is not None:
        with _mutate_case(app) as mutating:
            mutating.images.append(clone_img)
            if img.exhibit_id is not None:
                casefile.append_custody(
                    mutating,
                    casefile.CustodyEvent(
                        actor=mutating.examiner,
                        action=casefile.CustodyAction.CLONED,
                        exhibit_id=img.exhibit_id,
                        occurred_at=at,
                        note=f"cloned {source} -> {dest}",
                    ),
                )
    click.echo(f"clone {'verified' if record.verified else 'NOT VERIFIED'}: {record.clone_path}")


@image.command("diff")
@click.argument("image_a", type=click.Path(exists=True, path_type=Path))
@click.argument("image_b", type=click.Path(exists=True, path_type=Path))
@_JSON_OPTION
@pass_app
def image_diff(app: AppContext, image_a: Path, image_b: Path, as_json: bool):
    """List byte ranges where two images differ."""
    a = imaging.StorageImage(str(image_a), image_a.stat().st_size, manifest=None)  # type: ignore[arg-type]
    b = imaging.StorageImage(str(image_b), image_b.stat().st_size, manifest=None)  # type: ignore[arg-type]
    ranges = imaging.diff_images(a, b)
    payload = {"ranges": [[r.offset, r.length] for r in ranges], "identical": not ranges}
    text = "identical" if not ranges else "\n".join(
        f"differ at {r.offset} for {r.length} bytes" for r in ranges
    )
    _emit(as_json, payload, text)


# --- log ---

@cli.group()
def log():
    """DATv1 flight logs."""


def _register_log_evidence(
    app: AppContext, exhibit_id: Optional[str], kind, artifact: Path, operation: str, image_ref: str
):
    if app.case_dir is None or exhibit_id is None:
        return
    with _mutate_case(app) as current:
        report.register_evidence(
            current,
            kind=kind,
            source_exhibit=exhibit_id,
            source_image=image_ref,
            producing_operation=operation,
            artifact_path=str(artifact),
        )


@log.command("parse")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--exhibit", "exhibit_id", default=None, help="Register as evidence.")
@click.option("--image", "image_ref", default="", help="Image the log came from.")
@_JSON_OPTION
@click.pass_context
def log_parse(ctx: click.Context, path: Path, exhibit_id: Optional[str], image_ref: str, as_json: bool):
    """Strict-parse a flight log; unreadable files name the exact fault."""
    data = path.read_bytes()
    try:
        parsed = flightlog.parse_strict(data)
    except flightlog.MissingFooter:
        click.echo(
            f"MISSING_FOOTER: {path.name} was never closed by the recorder; "
            "run `dronetrace log recover` to salvage it",
            err=True,
        )
        ctx.exit(1)
    summary = flightlog.summarize(parsed)
    payload = {
        "frames": len(parsed.frames),
        "closed": parsed.closed,
        "gps_fixes": summary.gps_fix_count,
        "duration_ms": summary.duration_ms,
        "warnings": parsed.warnings,
    }
    _emit(
        as_json,
        payload,
        f"{path.name}: {len(parsed.frames)} frames, closed, "
        f"{summary.gps_fix_count} GPS fixes, {summary.duration_ms} ms",
    )
    _register_log_evidence(
        ctx.obj, exhibit_id, report.EvidenceKind.FLIGHT_LOG, path, "log parse", image_ref
    )


@log.command("recover")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--exhibit", "exhibit_id", default=None, help="Register as evidence.")
@click.option("--image", "image_ref", default="", help="Image the log came from.")
@_JSON_OPTION
@pass_app
def log_recover(app: AppContext, path: Path, exhibit_id: Optional[str], image_ref: str, as_json: bool):
    """Recovery-parse a damaged or unclosed log (total, never fails)."""
    parsed = flightlog.parse_recover(path.read_bytes())
    rep = parsed.recovery
    payload = {
        "frames": len(parsed.frames),
        "closed": parsed.closed,
        "recovery": None
        if rep is None
        else {
            "bytes_consumed": rep.bytes_consumed,
            "bytes_total": rep.bytes_total,
            "frames_recovered": rep.frames_recovered,
            "frames_dropped": rep.frames_dropped,
            "trailing_garbage": rep.trailing_garbage,
            "header_synthesized": rep.header_synthesized,
        },
    }
    if rep is None:
        text = f"{path.name}: well-formed, {len(parsed.frames)} frames"
    else:
        text = (
            f"{path.name}: recovered {rep.frames_recovered} frames, "
            f"{rep.frames_dropped} dropped region(s), "
            f"{rep.bytes_consumed}/{rep.bytes_total} bytes consumed"
            + (", trailing garbage" if rep.trailing_garbage else "")
        )
    _emit(as_json, payload, text)
    _register_log_evidence(
        app, exhibit_id, report.EvidenceKind.FLIGHT_LOG, path, "log recover", image_ref
    )


@log.command("finalize")
@click.argument("input_path", type=click.Path(exists=True, path_type=Path), required=False)
@click.option("--image", "image_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="Clone image providing the write-safe context.")
@click.option("--name", default=None, help="Close this log in place inside the clone image.")
@click.option("--layout", type=click.Path(path_type=Path), default=None,
              help="Layout manifest (default: <image>.layout).")
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None,
              help="Write the finalized log to this file.")
@pass_app
def log_finalize(
    app: AppContext,
    input_path: Optional[Path],
    image_path: Path,
    name: Optional[str],
    layout: Optional[Path],
    output: Optional[Path],
):
    """Close an unclosed log on a clone (the original is never touched)."""
    current = _load_case(app) if app.case_dir is not None else None
    clone_img = _image_record(current, image_path)

    if name is not None:
        layout_path = layout or Path(str(image_path) + ".layout")
        if not layout_path.is_file():
            raise MissingFile(f"layout manifest {layout_path}")
        entries = fixtures.parse_layout(layout_path.read_text("utf-8"))
        match = next((e for e in entries if e.name == name), None)
        if match is None:
            raise UnknownExhibit(f"{name} not present in {layout_path}")
        with open(image_path, "rb") as fh:
            fh.seek(match.offset)
            log_bytes = fh.read(match.length)
        finalized = flightlog.finalize_log(clone_img, log_bytes)
        imaging.patch_image(clone_img, match.offset, finalized)
        updated = [
            fixtures.LayoutEntry(e.name, e.offset, len(finalized) if e.name == name else e.length)
            for e in entries
        ]
        layout_path.write_text(fixtures.format_layout(updated), "utf-8")
        if output is not None:
            output.write_bytes(finalized)
        click.echo(f"finalized {name} in place ({len(finalized)} bytes)")
        return

    if input_path is None:
        raise InvalidParams("pass an input log file or --name for in-place finalization")
    finalized = flightlog.finalize_log(clone_img, input_path.read_bytes())
    out = output or input_path.with_suffix(input_path.suffix + ".closed")
    out.write_bytes(finalized)
    click.echo(f"finalized {input_path.name} -> {out} ({len(finalized)} bytes)")


@log.command("summary")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None,
              help="Also write the summary to a file.")
@click.option("--exhibit", "exhibit_id", default=None, help="Register the written summary.")
@click.option("--image", "image_ref", default="", help="Image the log came from.")
@_JSON_OPTION
@pass_app
def log_summary(
    app: AppContext,
    path: Path,
    output: Optional[Path],
    exhibit_id: Optional[str],
    image_ref: str,
    as_json: bool,
):
    """Summarize a log: duration, counts, bounding box, battery, motors."""
    parsed = flightlog.parse_recover(path.read_bytes())
    s = flightlog.summarize(parsed)
    payload = {
        "duration_ms": s.duration_ms,
        "frame_counts": s.frame_counts,
        "gps_fix_count": s.gps_fix_count,
        "bbox": None
        if not s.gps_fix_count
        else {
            "min_lat": s.min_lat_deg,
            "max_lat": s.max_lat_deg,
            "min_lon": s.min_lon_deg,
            "max_lon": s.max_lon_deg,
        },
        "max_alt_m": s.max_alt_m,
        "battery_start_pct": s.battery_start_pct,
        "battery_end_pct": s.battery_end_pct,
        "max_motor_rpm": s.max_motor_rpm,
        "closed": parsed.closed,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    _emit(as_json, payload, text)
    if output is not None:
        output.write_text(text + "\n", "utf-8")
        _register_log_evidence(
            app, exhibit_id, report.EvidenceKind.SUMMARY, output, "log summary", image_ref
        )


# --- carve ---

@cli.group()
def carve():
    """Signature carving."""


def _signatures_from(path: Optional[Path]) -> Optional[list[carving.Signature]]:
    return carving.load_signature_file(path) if path is not None else None


@carve.command("scan")
@click.argument("image_path", type=click.Path(exists=True, path_type=Path))
@click.option("--signatures", "sig_file", type=click.Path(exists=True, path_type=Path), default=None)
@_JSON_OPTION
@pass_app
def carve_scan(app: AppContext, image_path: Path, sig_file: Optional[Path], as_json: bool):
    """List signature header hits in ascending offset order."""
    current = _load_case(app) if app.case_dir is not None else None
    img = _image_record(current, image_path)
    hits = carving.scan_signatures(img, _signatures_from(sig_file))
    _emit(
        as_json,
        {"hits": [[name, offset] for name, offset in hits]},
        "\n".join(f"{name} @ {offset}" for name, offset in hits) or "(no hits)",
    )


@carve.command("run")
@click.argument("image_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out-dir", type=click.Path(path_type=Path), required=True)
@click.option("--signatures", "sig_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--exhibit", "exhibit_id", default=None, help="Register carved files as evidence.")
@pass_app
def carve_run(
    app: AppContext,
    image_path: Path,
    out_dir: Path,
    sig_file: Optional[Path],
    exhibit_id: Optional[str],
):
    """Carve every signature hit into OUT_DIR."""
    current = _load_case(app) if app.case_dir is not None else None
    img = _image_record(current, image_path)
    carved = carving.carve(img, out_dir, _signatures_from(sig_file))
    for cf in carved:
        flag = "  (unterminated)" if cf.unterminated else ""
        click.echo(f"{cf.output_path}  {cf.length} bytes  sha256 {cf.content_digest[:16]}{flag}")
    click.echo(f"carved {len(carved)} file(s)")
    if app.case_dir is not None and exhibit_id is not None:
        with _mutate_case(app) as mutating:
            for cf in carved:
                report.register_evidence(
                    mutating,
                    kind=report.EvidenceKind.CARVED_MEDIA,
                    source_exhibit=exhibit_id,
                    source_image=str(image_path),
                    producing_operation="carve run",
                    artifact_path=cf.output_path,
                )


# --- export ---

@cli.group(name="export")
def export_group():
    """Evidential exports."""


def _load_log_lenient(path: Path) -> flightlog.FlightLog:
    parsed = flightlog.parse_recover(path.read_bytes())
    if not parsed.closed:
        click.echo(f"note: {path.name} is unclosed; exporting recovered frames", err=True)
    return parsed


@export_group.command("csv")
@click.argument("log_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.option("--exhibit", "exhibit_id", default=None, help="Register the export as evidence.")
@click.option("--image", "image_ref", default="", help="Image the log came from.")
@pass_app
def export_csv(app: AppContext, log_path: Path, output: Path, exhibit_id: Optional[str], image_ref: str):
    """Write the flat telemetry spreadsheet."""
    data = export.to_csv(_load_log_lenient(log_path))
    output.write_bytes(data)
    click.echo(f"wrote {output} ({len(data)} bytes)")
    _register_log_evidence(
        app, exhibit_id, report.EvidenceKind.EXPORT, output, "export csv", image_ref
    )


@export_group.command("kml")
@click.argument("log_path", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.option("--exhibit", "exhibit_id", default=None, help="Register the export as evidence.")
@click.option("--image", "image_ref", default="", help="Image the log came from.")
@pass_app
def export_kml(app: AppContext, log_path: Path, output: Path, exhibit_id: Optional[str], image_ref: str):
    """Write the KML flight path for mapping viewers."""
    data = export.to_kml(_load_log_lenient(log_path), name=log_path.name)
    output.write_bytes(data)
    click.echo(f"wrote {output} ({len(data)} bytes)")
    _register_log_evidence(
        app, exhibit_id, report.EvidenceKind.EXPORT, output, "export kml", image_ref
    )


# --- evidence ---

@cli.group()
def evidence():
    """Evidence registry."""


@evidence.command("sift")
@click.option("--kind", type=click.Choice([k.value for k in report.EvidenceKind]), default=None)
@click.option("--exhibit", "exhibit_id", default=None)
@_JSON_OPTION
@pass_app
def evidence_sift(app: AppContext, kind: Optional[str], exhibit_id: Optional[str], as_json: bool):
    """Filter the evidence registry (the registry itself is untouched)."""
    current = _load_case(app)

    def predicate(item: report.EvidenceItem) -> bool:
        if kind is not None and item.kind.value != kind:
            return False
        if exhibit_id is not None and item.source_exhibit != exhibit_id:
            return False
        return True

    items = report.sift(current, predicate)
    payload = {
        "items": [
            {
                "item_id": i.item_id,
                "kind": i.kind.value,
                "source_exhibit": i.source_exhibit,
                "artifact_path": i.artifact_path,
                "content_digest": i.content_digest,
            }
            for i in items
        ]
    }
    text = "\n".join(
        f"{i.item_id} [{i.kind.value}] {i.source_exhibit} {i.artifact_path}" for i in items
    ) or "(no matching evidence)"
    _emit(as_json, payload, text)


@evidence.command("confirm")
@click.argument("item_ids", nargs=-1)
@_JSON_OPTION
@click.pass_context
def evidence_confirm(ctx: click.Context, item_ids: tuple[str, ...], as_json: bool):
    """Re-derive evidence items; exit 2 if any fails confirmation."""
    current = _load_case(ctx.obj)
    items = current.evidence
    if item_ids:
        wanted = set(item_ids)
        items = [i for i in items if i.item_id in wanted]
        missing = wanted - {i.item_id for i in items}
        if missing:
            raise UnknownExhibit(f"unknown evidence item(s): {sorted(missing)}")
    results = [report.confirm(current, item) for item in items]
    payload = {
        "results": [
            {"item_id": r.item_id, "method": r.method.value, "agreed": r.agreed, "detail": r.detail}
            for r in results
        ]
    }
    text = "\n".join(
        f"{r.item_id} {r.method.value}: {'agreed' if r.agreed else 'DISAGREED'} ({r.detail})"
        for r in results
    ) or "(no evidence registered)"
    _emit(as_json, payload, text)
    if any(not r.agreed for r in results):
        ctx.exit(2)


# --- report ---

@cli.group(name="report")
def report_group():
    """Final report."""


@report_group.command("render")
@click.option("-o", "--output", type=click.Path(path_type=Path), default=None,
              help="Report path (default: <case>/report.txt).")
@click.option("--conclusions", default=None, help="Examiner conclusions (verbatim).")
@click.option("--conclusions-file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--generated-at", callback=_parse_ts, default=None,
              help="Report timestamp (RFC 3339); defaults to --now.")
@click.option("--figures/--no-figures", "with_figures", default=True,
              help="Render flight figures next to the report.")
@click.option("--figures-dir", type=click.Path(path_type=Path), default=None,
              help="Figure directory (default: <report dir>/figures).")
@pass_app
def report_render(
    app: AppContext,
    output: Optional[Path],
    conclusions: Optional[str],
    conclusions_file: Optional[Path],
    generated_at: Optional[datetime],
    with_figures: bool,
    figures_dir: Optional[Path],
):
    """Render the case report (refuses on open steps or a tampered ledger)."""
    case_dir = _require_case_dir(app)
    if conclusions_file is not None:
        conclusions = conclusions_file.read_text("utf-8")
    if conclusions is None:
        raise InvalidParams("pass --conclusions or --conclusions-file")
    out = output or (case_dir / "report.txt")
    fig_dir = None
    if with_figures:
        fig_dir = figures_dir or (Path(out).parent / "figures")
    current = _load_case(app)
    document = report.render_report(
        current,
        conclusions=conclusions,
        out_path=out,
        generated_at=generated_at or app.now,
        figures_dir=fig_dir,
    )
    click.echo(f"report written to {out}")
    for fig in document.figure_paths:
        click.echo(f"figure: {fig}")
    failed = [c for c in document.confirmations if not c.agreed]
    if failed:
        click.echo(f"note: {len(failed)} evidence item(s) failed confirmation (flagged)", err=True)


# --- fixture ---

@cli.group()
def fixture():
    """Synthetic test data."""


@fixture.command("flight")
@click.option("--seed", type=int, required=True)
@click.option("--duration", "duration_s", type=int, default=60, show_default=True)
@click.option("--rate", "rate_hz", type=int, default=1, show_default=True)
@click.option("--device-id", default="00" * 16, help="16-byte device id, hex.")
@click.option("--created-at", callback=_parse_ts, default=None)
@click.option("--unclosed", is_flag=True, help="Omit the footer (power-loss shape).")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@pass_app
def fixture_flight(
    app: AppContext,
    seed: int,
    duration_s: int,
    rate_hz: int,
    device_id: str,
    created_at: Optional[datetime],
    unclosed: bool,
    output: Path,
):
    """Generate a deterministic synthetic flight log."""
    frames = fixtures.synth_flight(seed, duration_s, rate_hz)
    header = flightlog.DatHeader(
        device_id=bytes.fromhex(device_id),
        created_at_ms=unix_ms(created_at or app.now),
    )
    data = flightlog.generate(header, frames, closed=not unclosed)
    output.write_bytes(data)
    click.echo(f"wrote {output} ({len(frames)} frames, {len(data)} bytes)")


@fixture.command("card")
@click.option("--log", "log_paths", type=click.Path(exists=True, path_type=Path), multiple=True)
@click.option("--media", "media_paths", type=click.Path(exists=True, path_type=Path), multiple=True)
@click.option("--size", "size_bytes", type=int, default=64 * 1024 * 1024, show_default=True)
@click.option("--unclosed-last", is_flag=True, help="Strip the final log's footer.")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
def fixture_card(
    log_paths: tuple[Path, ...],
    media_paths: tuple[Path, ...],
    size_bytes: int,
    unclosed_last: bool,
    output: Path,
):
    """Pack logs and media into a card image plus layout manifest."""
    logs = [(p.name, p.read_bytes()) for p in log_paths]
    media = [(p.name, p.read_bytes()) for p in media_paths]
    image_bytes, manifest = fixtures.pack_card(logs, media, size_bytes, unclosed_last)
    output.write_bytes(image_bytes)
    layout_path = Path(str(output) + ".layout")
    layout_path.write_text(manifest, "utf-8")
    click.echo(f"wrote {output} ({size_bytes} bytes) and {layout_path}")


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point mapping errors to the documented exit codes."""
    try:
        # with standalone_mode off, click returns ctx.exit codes instead of
        # calling sys.exit
        rv = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DroneTraceError as exc:
        click.echo(str(exc), err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"IO_FAILURE: {exc}", err=True)
        return 3
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
