"""Sift, confirm and report rendering."""

from __future__ import annotations

import io
from dataclasses import replace

import pytest

from dronetrace import casefile as cf
from dronetrace import flightlog as fl
from dronetrace import imaging, report
from dronetrace.errors import GateBlocked, LedgerTampered, MissingArtifact

from conftest import random_frames, ts

HEADER = fl.DatHeader(device_id=b"R" * 16, created_at_ms=0)


@pytest.fixture
def case_env(tmp_path, rng):
    """A case with one exhibit, one image and three evidence items."""
    case = cf.create_case("CASE-R", "A. Examiner", created_at=ts())
    cf.add_exhibit(
        case,
        cf.Exhibit(
            exhibit_id="UAV-1",
            kind=cf.ExhibitKind.UAV,
            capabilities=cf.CapabilityChecklist(load_carrying=cf.TriState.YES),
        ),
    )
    image = imaging.acquire(io.BytesIO(b"\x01" * 4096), tmp_path / "card.img", acquired_at=ts(1))
    image.exhibit_id = "UAV-1"
    case.images.append(image)

    frames = random_frames(rng, 60)
    log_path = tmp_path / "FLY001.DAT"
    log_path.write_bytes(fl.generate(HEADER, frames, closed=True))
    media_path = tmp_path / "100_jpeg.jpg"
    media_path.write_bytes(b"\xff\xd8\xff\xe0" + b"\x00" * 64 + b"\xff\xd9")
    csv_path = tmp_path / "FLY001.csv"
    csv_path.write_bytes(b"frame_index\n")

    for kind, path, op in (
        (report.EvidenceKind.FLIGHT_LOG, log_path, "log parse"),
        (report.EvidenceKind.CARVED_MEDIA, media_path, "carve run"),
        (report.EvidenceKind.EXPORT, csv_path, "export csv"),
    ):
        report.register_evidence(
            case,
            kind=kind,
            source_exhibit="UAV-1",
            source_image=image.image_path,
            producing_operation=op,
            artifact_path=str(path),
        )
    return case, tmp_path


def finish_all_steps(case: cf.CaseFile) -> None:
    for record in case.step_records:
        record.status = cf.StepStatus.DONE


class TestSift:
    def test_identity_filter_preserves_order(self, case_env):
        case, _ = case_env
        items = report.sift(case)
        assert [i.item_id for i in items] == ["EV001", "EV002", "EV003"]
        assert items is not case.evidence  # registry not aliased

    def test_kind_partition(self, case_env):
        case, _ = case_env
        logs = report.sift(case, lambda i: i.kind is report.EvidenceKind.FLIGHT_LOG)
        assert [i.item_id for i in logs] == ["EV001"]

    def test_empty_result(self, case_env):
        case, _ = case_env
        assert report.sift(case, lambda i: False) == []

    def test_two_logs_three_media_partition(self, tmp_path, rng):
        case = cf.create_case("CASE-S", "E", created_at=ts())
        cf.add_exhibit(case, cf.Exhibit(exhibit_id="UAV-1", kind=cf.ExhibitKind.UAV))
        registered = []
        for n in range(2):
            path = tmp_path / f"log{n}.DAT"
            path.write_bytes(fl.generate(HEADER, random_frames(rng, 5)))
            registered.append((report.EvidenceKind.FLIGHT_LOG, path))
        for n in range(3):
            path = tmp_path / f"media{n}.jpg"
            path.write_bytes(b"\xff\xd8\xff" + bytes(32) + b"\xff\xd9")
            registered.append((report.EvidenceKind.CARVED_MEDIA, path))
        for kind, path in registered:
            report.register_evidence(
                case, kind=kind, source_exhibit="UAV-1", source_image="img",
                producing_operation="op", artifact_path=str(path),
            )
        logs = report.sift(case, lambda i: i.kind is report.EvidenceKind.FLIGHT_LOG)
        assert len(logs) == 2
        assert all(i.kind is report.EvidenceKind.FLIGHT_LOG for i in logs)

    def test_registry_unmodified(self, case_env):
        case, _ = case_env
        before = list(case.evidence)
        report.sift(case, lambda i: i.kind is report.EvidenceKind.EXPORT)
        assert case.evidence == before


class TestConfirm:
    def test_closed_log_agrees(self, case_env):
        case, _ = case_env
        result = report.confirm(case, case.evidence[0])
        assert result.method is report.ConfirmMethod.STRICT_VS_RECOVER
        assert result.agreed

    def test_modified_carved_file_disagrees(self, case_env):
        case, tmp_path = case_env
        (tmp_path / "100_jpeg.jpg").write_bytes(b"tampered")
        result = report.confirm(case, case.evidence[1])
        assert result.method is report.ConfirmMethod.REHASH
        assert not result.agreed
        assert "digest" in result.detail

    def test_unclosed_log_flagged_not_dropped(self, case_env, rng):
        case, tmp_path = case_env
        unclosed = tmp_path / "FLY002.DAT"
        unclosed.write_bytes(fl.generate(HEADER, random_frames(rng, 10), closed=False))
        item = report.register_evidence(
            case,
            kind=report.EvidenceKind.FLIGHT_LOG,
            source_exhibit="UAV-1",
            source_image="card.img",
            producing_operation="log recover",
            artifact_path=str(unclosed),
        )
        result = report.confirm(case, item)
        assert result.method is report.ConfirmMethod.STRICT_VS_RECOVER
        assert not result.agreed
        assert "MISSING_FOOTER" in result.detail
        assert item in case.evidence  # flagged, never dropped

    def test_missing_artifact(self, case_env):
        case, tmp_path = case_env
        (tmp_path / "FLY001.csv").unlink()
        with pytest.raises(MissingArtifact):
            report.confirm(case, case.evidence[2])


class TestRender:
    def test_blocked_while_step_in_progress(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        case.step_record("UAV-1", 14).status = cf.StepStatus.IN_PROGRESS
        with pytest.raises(GateBlocked) as err:
            report.render_report(case, "c", tmp_path / "report.txt", generated_at=ts(9))
        assert 14 in err.value.decision.blocking_steps

    def test_tampered_ledger_refused(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        cf.append_custody(
            case,
            cf.CustodyEvent(
                actor="X",
                action=cf.CustodyAction.OPENED,
                exhibit_id="UAV-1",
                occurred_at=ts(2),
            ),
        )
        entry = case.ledger[0]
        case.ledger[0] = replace(entry, event=replace(entry.event, actor="Y"))
        with pytest.raises(LedgerTampered):
            report.render_report(case, "c", tmp_path / "report.txt", generated_at=ts(9))

    def test_render_includes_provenance_and_conclusions(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        document = report.render_report(
            case,
            "The device flew. Nothing more is claimed.",
            tmp_path / "report.txt",
            generated_at=ts(9),
        )
        text = (tmp_path / "report.txt").read_text()
        assert document.text == text
        for item in case.evidence:
            assert item.item_id in text
            assert item.content_digest in text
        assert "The device flew. Nothing more is claimed." in text
        assert "CONCLUSIONS (examiner)" in text
        assert document.evidence_count == 3
        assert all(c.agreed for c in document.confirmations)

    def test_missing_artifact_flagged_in_report(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        (tmp_path / "100_jpeg.jpg").unlink()
        document = report.render_report(
            case, "c", tmp_path / "report.txt", generated_at=ts(9)
        )
        flagged = [c for c in document.confirmations if not c.agreed]
        assert len(flagged) == 1
        assert "missing" in flagged[0].detail
        assert "NOT CONFIRMED" in document.text

    def test_render_deterministic(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        first = report.render_report(case, "c", tmp_path / "r1.txt", generated_at=ts(9))
        second = report.render_report(case, "c", tmp_path / "r2.txt", generated_at=ts(9))
        assert first.text == second.text
        assert (tmp_path / "r1.txt").read_bytes() == (tmp_path / "r2.txt").read_bytes()

    def test_figures_rendered_for_flight_logs(self, case_env):
        case, tmp_path = case_env
        finish_all_steps(case)
        document = report.render_report(
            case,
            "c",
            tmp_path / "report.txt",
            generated_at=ts(9),
            figures_dir=tmp_path / "figures",
        )
        assert document.figure_paths
        for path_str in document.figure_paths:
            path = tmp_path / "figures" / path_str.split("/")[-1]
            assert path.is_file() and path.stat().st_size > 0
            assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert "figure:" in document.text
