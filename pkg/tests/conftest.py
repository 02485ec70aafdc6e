from __future__ import annotations

import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import HarnessCase, build_ech_module  # noqa: E402

from stase import corpus  # noqa: E402
from stase.harness import read_harness  # noqa: E402
from stase.symexec import explore_segment, read_signature  # noqa: E402

CORPUS_DIR = Path(corpus.__file__).parent


@pytest.fixture(scope="session")
def corpus_eval(tmp_path_factory):
    """One full corpus run; artifacts under a session temp dir."""
    out = tmp_path_factory.mktemp("corpus")
    ev = corpus.evaluate(out_dir=out)
    return ev, out


@pytest.fixture(scope="session")
def harness_cases(corpus_eval) -> list[HarnessCase]:
    ev, out = corpus_eval
    cases = []
    for p in corpus.list_programs():
        m, cfg, ech = p.load()
        m_ech = build_ech_module(m, ech)
        for mf in sorted((out / p.name).glob("peh_*.json")):
            peh, seg = read_harness(mf)
            result = explore_segment(seg, peh)
            sig_path = mf.parent / mf.name.replace("peh_", "sig_", 1)
            sig = read_signature(sig_path) if sig_path.exists() else None
            cases.append(HarnessCase(p.name, m_ech, cfg, peh, seg, result, sig))
    return cases


# --------------------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_", report.nodeid)
    if m:
        _CRITERIA.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok = all(o == "passed" for o in _CRITERIA[n])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
