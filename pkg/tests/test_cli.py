"""CLI surface: exit codes, persistence, JSON output."""

from __future__ import annotations

import json

import pytest

from dronetrace import store
from dronetrace.cli import main

from conftest import ts


def run(*args: str) -> int:
    return main([str(a) for a in args])


@pytest.fixture
def case_dir(tmp_path):
    d = tmp_path / "case"
    code = run("--case", d, "--now", "2026-01-05T10:00:00Z",
               "case", "new", "--case-id", "CASE-001", "--examiner", "A. Examiner")
    assert code == 0
    return d


def test_case_new_and_duplicate(tmp_path, capsys):
    d = tmp_path / "case"
    assert run("--case", d, "case", "new", "--case-id", "C1", "--examiner", "E") == 0
    assert (d / "case.dtc").is_file()
    assert run("--case", d, "case", "new", "--case-id", "C1", "--examiner", "E") == 1
    assert "DUPLICATE_CASE_ID" in capsys.readouterr().err


def test_missing_case_dir_is_validation_error(capsys, monkeypatch):
    monkeypatch.delenv("DRONETRACE_CASE", raising=False)
    assert run("case", "status") == 1
    assert "no case directory" in capsys.readouterr().err


def test_env_var_selects_case(tmp_path, monkeypatch, capsys):
    d = tmp_path / "envcase"
    monkeypatch.setenv("DRONETRACE_CASE", str(d))
    assert run("case", "new", "--case-id", "C9", "--examiner", "E") == 0
    assert run("case", "status") == 0
    assert "C9" in capsys.readouterr().out


def test_exhibit_and_step_flow(case_dir, capsys):
    assert run("--case", case_dir, "exhibit", "add", "--id", "UAV-1", "--kind", "UAV",
               "--make", "DJI", "--model", "W322B") == 0
    # gated step blocked: exit 1 and the message names the blocking steps
    code = run("--case", case_dir, "--now", "2026-01-05T11:00:00Z",
               "step", "set", "--exhibit", "UAV-1", "--step", "17",
               "--status", "in-progress")
    captured = capsys.readouterr()
    assert code == 1
    assert "GATE_BLOCKED" in captured.err
    for blocking in ("11", "12", "13", "14", "15"):
        assert blocking in captured.err
    # free-order step is fine
    assert run("--case", case_dir, "--now", "2026-01-05T11:01:00Z",
               "step", "set", "--exhibit", "UAV-1", "--step", "9",
               "--status", "in-progress") == 0
    # persisted
    case = store.load_case(case_dir)
    assert case.step_record("UAV-1", 9).status.value == "IN_PROGRESS"


def test_step_gate_json(case_dir, capsys):
    run("--case", case_dir, "exhibit", "add", "--id", "UAV-1", "--kind", "UAV")
    capsys.readouterr()
    code = run("--case", case_dir, "step", "gate", "--exhibit", "UAV-1",
               "--step", "17", "--json")
    payload = json.loads(capsys.readouterr().out)
    assert code == 1
    assert payload["allowed"] is False
    assert payload["blocking_steps"] == [11, 12, 13, 14, 15]


def test_custody_log_verify_and_tamper(case_dir, capsys):
    run("--case", case_dir, "exhibit", "add", "--id", "UAV-1", "--kind", "UAV")
    assert run("--case", case_dir, "custody", "log", "--exhibit", "UAV-1",
               "--actor", "PC Smith", "--action", "SEIZED",
               "--at", "2026-01-05T10:30:00Z") == 0
    assert run("--case", case_dir, "custody", "verify") == 0
    # tamper with the persisted note
    doc = (case_dir / "case.dtc").read_text()
    (case_dir / "case.dtc").write_text(doc.replace("PC Smith", "PC Smyth"))
    capsys.readouterr()
    assert run("--case", case_dir, "custody", "verify", "--json") == 2
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"] is False and payload["tampered_at"] == 0


def test_unknown_exhibit_is_validation_error(case_dir, capsys):
    assert run("--case", case_dir, "custody", "log", "--exhibit", "NOPE",
               "--actor", "x", "--action", "OPENED") == 1
    assert "UNKNOWN_EXHIBIT" in capsys.readouterr().err


def test_lock_rejects_concurrent_mutator(case_dir, capsys):
    (case_dir / "case.lock").write_text("pid=12345\n")
    code = run("--case", case_dir, "exhibit", "add", "--id", "X", "--kind", "OTHER")
    assert code == 1
    assert "LOCK_HELD" in capsys.readouterr().err
    (case_dir / "case.lock").unlink()
    assert run("--case", case_dir, "exhibit", "add", "--id", "X", "--kind", "OTHER") == 0


def test_image_pipeline_and_exit_codes(case_dir, tmp_path, capsys, rng):
    source = tmp_path / "source.bin"
    source.write_bytes(rng.randbytes(64 * 1024))
    run("--case", case_dir, "exhibit", "add", "--id", "MC-1", "--kind", "MEMORY_CARD")
    image_path = tmp_path / "card.img"
    assert run("--case", case_dir, "--now", "2026-01-05T12:00:00Z",
               "image", "acquire", source, image_path, "--exhibit", "MC-1") == 0
    assert run("--case", case_dir, "image", "verify", image_path) == 0
    clone_path = tmp_path / "clone.img"
    assert run("--case", case_dir, "--now", "2026-01-05T12:05:00Z",
               "image", "clone", image_path, clone_path) == 0
    capsys.readouterr()
    assert run("image", "diff", image_path, clone_path, "--json") == 0
    assert json.loads(capsys.readouterr().out)["identical"] is True
    # flip a byte: verify exits 2
    raw = bytearray(image_path.read_bytes())
    raw[17] ^= 0xFF
    image_path.write_bytes(raw)
    assert run("--case", case_dir, "image", "verify", image_path) == 2
    # custody trail recorded ACQUIRED and CLONED
    case = store.load_case(case_dir)
    actions = [entry.event.action.name for entry in case.ledger]
    assert "ACQUIRED" in actions and "CLONED" in actions


def test_log_fixture_parse_recover_finalize(case_dir, tmp_path, capsys):
    log_path = tmp_path / "FLY104.DAT"
    assert run("fixture", "flight", "--seed", "104", "--duration", "20",
               "--created-at", "2016-12-10T19:59:56Z", "--unclosed",
               "-o", log_path) == 0
    capsys.readouterr()
    assert run("log", "parse", log_path) == 1
    err = capsys.readouterr().err
    assert "MISSING_FOOTER" in err and "log recover" in err
    assert run("log", "recover", log_path, "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["recovery"]["frames_recovered"] == payload["frames"] == 80

    # finalize requires a clone context
    run("--case", case_dir, "exhibit", "add", "--id", "MC-1", "--kind", "MEMORY_CARD")
    src = tmp_path / "src.bin"
    src.write_bytes(b"\x00" * 4096)
    img = tmp_path / "c.img"
    run("--case", case_dir, "--now", "2026-01-05T12:00:00Z",
        "image", "acquire", src, img, "--exhibit", "MC-1")
    capsys.readouterr()
    closed_path = tmp_path / "FLY104.closed.DAT"
    assert run("--case", case_dir, "log", "finalize", log_path,
               "--image", img, "-o", closed_path) == 1
    assert "NOT_A_CLONE" in capsys.readouterr().err
    clone_img = tmp_path / "c.clone.img"
    run("--case", case_dir, "--now", "2026-01-05T12:05:00Z",
        "image", "clone", img, clone_img)
    assert run("--case", case_dir, "log", "finalize", log_path,
               "--image", clone_img, "-o", closed_path) == 0
    assert run("log", "parse", closed_path) == 0


def test_carve_and_export(case_dir, tmp_path, capsys, rng):
    from conftest import make_jpeg

    payload = bytearray(128 * 1024)
    jpeg = make_jpeg(rng)
    payload[8192 : 8192 + len(jpeg)] = jpeg
    source = tmp_path / "src.bin"
    source.write_bytes(payload)
    image_path = tmp_path / "card.img"
    run("--case", case_dir, "exhibit", "add", "--id", "MC-1", "--kind", "MEMORY_CARD")
    run("--case", case_dir, "--now", "2026-01-05T12:00:00Z",
        "image", "acquire", source, image_path, "--exhibit", "MC-1")
    capsys.readouterr()
    assert run("carve", "scan", image_path, "--json") == 0
    hits = json.loads(capsys.readouterr().out)["hits"]
    assert ["jpeg", 8192] in hits
    assert run("--case", case_dir, "carve", "run", image_path,
               "-o", tmp_path / "carved", "--exhibit", "MC-1") == 0
    assert (tmp_path / "carved" / "8192_jpeg.jpg").read_bytes() == jpeg

    log_path = tmp_path / "FLY001.DAT"
    run("fixture", "flight", "--seed", "1", "--duration", "10", "-o", log_path,
        "--created-at", "2016-11-27T23:38:04Z")
    csv_path = tmp_path / "FLY001.csv"
    kml_path = tmp_path / "FLY001.kml"
    assert run("--case", case_dir, "export", "csv", log_path, "-o", csv_path,
               "--exhibit", "MC-1") == 0
    assert run("--case", case_dir, "export", "kml", log_path, "-o", kml_path,
               "--exhibit", "MC-1") == 0
    assert csv_path.read_bytes().startswith(b"frame_index,timestamp_ms")
    capsys.readouterr()
    assert run("--case", case_dir, "evidence", "sift", "--json") == 0
    items = json.loads(capsys.readouterr().out)["items"]
    kinds = [item["kind"] for item in items]
    assert kinds.count("CARVED_MEDIA") == 1 and kinds.count("EXPORT") == 2
    assert run("--case", case_dir, "evidence", "confirm") == 0
    # corrupt the carved file: confirm exits 2
    (tmp_path / "carved" / "8192_jpeg.jpg").write_bytes(b"oops")
    assert run("--case", case_dir, "evidence", "confirm") == 2


def test_report_render_gate_then_success(case_dir, tmp_path, capsys):
    run("--case", case_dir, "exhibit", "add", "--id", "UAV-1", "--kind", "UAV")
    capsys.readouterr()
    assert run("--case", case_dir, "report", "render",
               "--conclusions", "n/a", "--no-figures") == 1
    assert "GATE_BLOCKED" in capsys.readouterr().err
    # mark everything terminal (step 7 needs no checklist when NOT_APPLICABLE)
    for step in range(1, 21):
        if step in (2, 7):
            run("--case", case_dir, "--now", "2026-01-05T13:00:00Z",
                "step", "set", "--exhibit", "UAV-1", "--step", step,
                "--status", "not-applicable", "--justification", "not relevant here")
        else:
            run("--case", case_dir, "--now", "2026-01-05T13:00:00Z",
                "step", "set", "--exhibit", "UAV-1", "--step", step,
                "--status", "in-progress")
            run("--case", case_dir, "--now", "2026-01-05T13:00:01Z",
                "step", "set", "--exhibit", "UAV-1", "--step", step,
                "--status", "done")
    out = tmp_path / "report.txt"
    assert run("--case", case_dir, "--now", "2026-01-05T14:00:00Z",
               "report", "render", "--conclusions", "Facts only.",
               "-o", out, "--no-figures") == 0
    text = out.read_text()
    assert "Facts only." in text
    assert "verification: OK" in text
