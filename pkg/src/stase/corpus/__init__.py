"""Bundled corpus: small MIR programs with seeded bugs and guarded decoys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

HERE = Path(__file__).resolve().parent


@dataclass(frozen=True)
class SeededBug:
    category: str
    function: str
    line: int


@dataclass
class CorpusProgram:
    name: str
    mir: Path
    cfg: Path
    ech: Optional[Path]
    kind: str  # true-positive | decoy
    seeded: list = field(default_factory=list)
    decoy_category: Optional[str] = None

    def load(self):
        """Return (module, analysis config, ECH or None)."""
        from ..harness import load_ech
        from ..mir import parse_file
        from ..vulnrules import load_config

        m = parse_file(str(self.mir))
        cfg = load_config(self.cfg.read_text(encoding="utf-8"), m)
        ech = load_ech(self.ech.read_text(encoding="utf-8")) if self.ech else None
        return m, cfg, ech


def manifest() -> dict:
    return json.loads((HERE / "manifest.json").read_text(encoding="utf-8"))


def list_programs() -> list[CorpusProgram]:
    out = []
    for e in manifest()["programs"]:
        out.append(CorpusProgram(
            e["name"], HERE / e["mir"], HERE / e["cfg"], HERE / e["ech"] if e.get("ech") else None,
            e["kind"], [SeededBug(**s) for s in e["seeded"]], e.get("decoy_category")))
    return out


def get(name: str) -> CorpusProgram:
    for p in list_programs():
        if p.name == name:
            return p
    raise KeyError(f"no corpus program {name!r}")


def path(name: str) -> Path:
    return get(name).mir


def load(name: str):
    return get(name).load()


@dataclass
class CorpusEvaluation:
    reports: dict  # program name -> PipelineReport
    seeded: set  # {(program, category, function, line)}
    candidates: set
    confirmed: set
    decoys_dismissed: dict  # program -> bool (every candidate dismissed)

    @property
    def recall_static(self) -> bool:
        return self.seeded <= self.candidates

    @property
    def f1(self) -> float:
        tp = len(self.confirmed & self.seeded)
        if not tp:
            return 0.0
        prec, rec = tp / len(self.confirmed), tp / len(self.seeded)
        return 2 * prec * rec / (prec + rec)

    def per_category(self) -> dict:
        out: dict = {}
        for rep in self.reports.values():
            for cat, c in rep.per_category().items():
                acc = out.setdefault(cat, {k: 0 for k in c if k != "static_fp_pct"})
                for k in acc:
                    acc[k] += c[k]
        for cat, acc in out.items():
            seeded = sum(1 for s in self.seeded if s[1] == cat)
            false_conf = sum(1 for s in self.confirmed - self.seeded if s[1] == cat)
            acc["seeded"] = seeded
            acc["false_confirmed"] = false_conf
            acc["fp_pct"] = round(100.0 * false_conf / acc["confirmed"], 2) if acc["confirmed"] else 0.0
            n = acc["candidates"]
            acc["static_fp_pct"] = round(100.0 * (n - acc["confirmed"] - acc["unconfirmed"]) / n, 2) if n else 0.0
        return out

    def text(self) -> str:
        lines = [f"{'category':18} {'seeded':>6} {'cand':>5} {'conf':>5} {'dism':>5} {'unconf':>6} "
                 f"{'RbSA FP%':>9} {'STASE FP%':>10}"]
        for cat, c in self.per_category().items():
            lines.append(f"{cat:18} {c['seeded']:6d} {c['candidates']:5d} {c['confirmed']:5d} "
                         f"{c['dismissed']:5d} {c['unconfirmed']:6d} {c['static_fp_pct']:9.2f} {c['fp_pct']:10.2f}")
        lines.append(f"static recall: {'complete' if self.recall_static else 'INCOMPLETE'}; "
                     f"confirmed-set F1 = {self.f1:.3f}; decoys dismissed: "
                     f"{sum(self.decoys_dismissed.values())}/{len(self.decoys_dismissed)}")
        return "\n".join(lines) + "\n"


def _key(program: str, row) -> tuple:
    return (program, row.category, row.func, int(row.L.rsplit(":", 1)[1]))


def evaluate(programs: Optional[list] = None, opts=None, out_dir=None) -> CorpusEvaluation:
    """Run the pipeline on each program and compare against the manifest."""
    from ..pipeline import run_pipeline
    from ..symexec import CONFIRMED, DISMISSED

    programs = programs if programs is not None else list_programs()
    ev = CorpusEvaluation({}, set(), set(), set(), {})
    for p in programs:
        m, cfg, ech = p.load()
        out = Path(out_dir) / p.name if out_dir is not None else None
        rep = run_pipeline(m, cfg, ech, opts, out, module_path=p.mir.name)
        ev.reports[p.name] = rep
        ev.seeded |= {(p.name, s.category, s.function, s.line) for s in p.seeded}
        ev.candidates |= {_key(p.name, r) for r in rep.rows}
        ev.confirmed |= {_key(p.name, r) for r in rep.rows if r.status == CONFIRMED}
        if p.kind == "decoy":
            ev.decoys_dismissed[p.name] = bool(rep.rows) and all(
                r.status == DISMISSED or r.static_status == "non-exploitable" for r in rep.rows)
    return ev
