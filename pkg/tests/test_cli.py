import json
import subprocess
import sys
from pathlib import Path

import pytest

from stase import corpus
from stase.cli import EXIT_CONFIRMED, EXIT_ERROR, EXIT_OK, main

CORPUS = Path(corpus.__file__).parent


def _artifacts(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.rglob("*"))
            if p.suffix == ".vd" or p.name.startswith(("θ_", "sig_", "peh_"))}


def _args(name):
    return ["--mir", str(CORPUS / f"{name}.mir"), "--config", str(CORPUS / f"{name}.cfg")]


def test_stages_compose_like_pipeline(tmp_path, capsys):
    name = "div_tp"
    st = tmp_path / "stages"
    assert main(["facts", str(CORPUS / f"{name}.mir"), "--out", str(st / "facts")]) == EXIT_OK
    assert main(["rules", str(st / "facts"), *_args(name), "--out", str(st)]) == EXIT_OK
    cands = json.loads((st / "candidates.json").read_text(encoding="utf-8"))
    assert len(cands) == 1
    assert main(["slice", str(st / "candidates.json"), *_args(name), "--out", str(st)]) == EXIT_OK
    vds = sorted(str(p) for p in st.glob("*.vd"))
    assert main(["harness", *vds, *_args(name), "--out", str(st)]) == EXIT_OK
    pehs = sorted(str(p) for p in st.glob("peh_*.json"))
    assert main(["symexec", *pehs, "--out", str(st)]) == EXIT_OK

    whole = tmp_path / "whole"
    assert main(["pipeline", str(CORPUS / f"{name}.mir"), "--config", str(CORPUS / f"{name}.cfg"),
                 "--out", str(whole)]) == EXIT_OK
    a, b = _artifacts(st), _artifacts(whole)
    assert a and a == b
    assert "confirmed" in capsys.readouterr().out


def test_fail_on_confirmed(tmp_path):
    args = ["pipeline", str(CORPUS / "div_tp.mir"), "--config", str(CORPUS / "div_tp.cfg"),
            "--out", str(tmp_path)]
    assert main(args + ["--fail-on-confirmed"]) == EXIT_CONFIRMED
    guarded = ["pipeline", str(CORPUS / "div_guarded.mir"), "--config", str(CORPUS / "div_guarded.cfg"),
               "--out", str(tmp_path / "g"), "--fail-on-confirmed"]
    assert main(guarded) == EXIT_OK


def test_corpus_list(capsys):
    assert main(["corpus", "--list"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == len(corpus.list_programs())
    assert any(line.startswith("tpm_div ") and "DivisionByZero@TpmNvsCommunciate:70" in line for line in out)


def test_corpus_subset_writes_summary(tmp_path, capsys):
    assert main(["corpus", "div_tp", "div_guarded", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "corpus.json").read_text(encoding="utf-8"))
    assert summary["f1"] == 1.0
    assert summary["decoys_dismissed"] == {"div_guarded": True}


def test_module_without_entrypoints_gives_empty_report(tmp_path, capsys):
    cfg = tmp_path / "none.cfg"
    cfg.write_text("[categories]\nenabled = DivisionByZero\n", encoding="utf-8")
    rc = main(["pipeline", str(CORPUS / "div_tp.mir"), "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_OK
    assert not list((tmp_path / "o").rglob("*.vd"))


def test_bad_input_exits_with_error(tmp_path, capsys):
    bad = tmp_path / "bad.mir"
    bad.write_text("fn @f( {\n", encoding="utf-8")
    assert main(["facts", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "error" in capsys.readouterr().err
    assert main(["facts", str(tmp_path / "missing.mir"), "--out", str(tmp_path)]) == EXIT_ERROR


def test_unknown_corpus_program(capsys):
    assert main(["corpus", "no_such_program"]) == EXIT_ERROR


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as ei:
        main(["pipeline", "--bogus"])
    assert ei.value.code == 2


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "stase.cli", "corpus", "--list"], capture_output=True, text=True)
    assert r.returncode == 0 and "pxebc" in r.stdout
