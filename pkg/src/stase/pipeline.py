"""End-to-end orchestration: facts, rules, slices, harnesses, symbolic execution, signatures."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .datalog import evaluate_fixpoint, parse_rules, read_facts, write_facts
from .facts import SCHEMA, extract_facts
from .harness import EnvConfigHarness, artifact_stem, build_ech, generate_peh, instrument, write_harness
from .mir.ir import ModuleIR
from .points_to import PointsToResult, run_pointer_analysis
from .slicer import NonExploitable, build_sdg, emit_vuln_description, slice_for_finding, write_vd
from .symexec import (CONFIRMED, DISMISSED, UNCONFIRMED, EngineError, SolverConfig, UnmodeledAccess,
                      build_signature, classify, explore_segment, write_signature)
from .vulnrules import AnalysisConfig, CandidateFinding, VulnCategory, analysis_facts, rules_text, run_vuln_rules

log = logging.getLogger(__name__)

PTS_SCHEMA = {"subset.var_points_to": ("symbol", "symbol", "symbol", "symbol"), "pts_site": ("symbol", "symbol")}


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineOptions:
    seed: int = 0
    loop_bound: Optional[int] = None  # None: take the analysis config value
    call_depth: Optional[int] = None
    solver_bits: int = 24
    external_solver: Optional[str] = None
    max_steps: int = 2_000_000
    max_paths: int = 20_000

    def solver_config(self) -> SolverConfig:
        return SolverConfig.from_env(bits=self.solver_bits, external=self.external_solver, seed=self.seed)


@dataclass
class FindingRow:
    id: str
    category: str
    entry: str
    func: str
    K: str
    L: str
    static_status: str  # candidate | non-exploitable
    status: str  # confirmed | dismissed | unconfirmed(budget) | not-run
    disjuncts: int = 0
    timings: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class PipelineReport:
    module: str
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def passed_to_symexec(self) -> list:
        return [r for r in self.rows if r.static_status == "candidate"]

    def per_category(self) -> dict:
        out = {}
        for c in VulnCategory:
            rows = [r for r in self.rows if r.category == c.value]
            sym = [r for r in rows if r.static_status == "candidate"]
            n = {s: sum(r.status == s for r in sym) for s in (CONFIRMED, DISMISSED, UNCONFIRMED)}
            out[c.value] = {
                "candidates": len(rows),
                "symexec": len(sym),
                "confirmed": n[CONFIRMED],
                "dismissed": n[DISMISSED],
                "unconfirmed": n[UNCONFIRMED],
                "non_exploitable": len(rows) - len(sym),
                "static_fp_pct": _pct(len(rows) - n[CONFIRMED] - n[UNCONFIRMED], len(rows)),
            }
        return out

    def totals(self) -> dict:
        cats = self.per_category().values()
        keys = ("candidates", "symexec", "confirmed", "dismissed", "unconfirmed", "non_exploitable")
        t = {k: sum(c[k] for c in cats) for k in keys}
        t["static_fp_pct"] = _pct(t["candidates"] - t["confirmed"] - t["unconfirmed"], t["candidates"])
        return t

    def to_json(self) -> dict:
        return {"module": self.module, "findings": [asdict(r) for r in self.rows],
                "per_category": self.per_category(), "totals": self.totals(), "errors": self.errors}

    def text(self) -> str:
        lines = [f"module {self.module}", ""]
        lines.append(f"{'finding':58} {'L':28} {'static':15} symexec")
        for r in self.rows:
            lines.append(f"{r.id:58} {r.L:28} {r.static_status:15} {r.status}")
        lines += ["", f"{'category':18} {'cand':>5} {'conf':>5} {'dism':>5} {'unconf':>6} {'n/e':>4} {'RbSA FP%':>9}"]
        for cat, c in self.per_category().items():
            if not c["candidates"]:
                continue
            lines.append(f"{cat:18} {c['candidates']:5d} {c['confirmed']:5d} {c['dismissed']:5d} "
                         f"{c['unconfirmed']:6d} {c['non_exploitable']:4d} {c['static_fp_pct']:9.2f}")
        t = self.totals()
        lines.append(f"{'total':18} {t['candidates']:5d} {t['confirmed']:5d} {t['dismissed']:5d} "
                     f"{t['unconfirmed']:6d} {t['non_exploitable']:4d} {t['static_fp_pct']:9.2f}")
        for e in self.errors:
            lines.append(f"error: {e}")
        return "\n".join(lines) + "\n"


def _pct(a: int, b: int) -> float:
    return round(100.0 * a / b, 2) if b else 0.0


# --------------------------------------------------------------------------- stages


def fact_stage(m: ModuleIR) -> tuple[dict, PointsToResult]:
    facts = extract_facts(m)
    return facts, run_pointer_analysis(m, facts)


def write_fact_dir(out_dir, facts: dict, pts: PointsToResult) -> None:
    rels = dict(facts)
    rels["subset.var_points_to"] = pts.var_points_to()
    rels["pts_site"] = {(var, site) for var, cells in pts.pts.items() for site, _ in cells}
    write_facts(out_dir, rels)


def rule_stage_from_dir(m: ModuleIR, fact_dir, cfg: AnalysisConfig) -> list[CandidateFinding]:
    """Evaluate the rules over facts read back from ``fact_dir``."""
    rels = read_facts(fact_dir, {**SCHEMA, **PTS_SCHEMA})
    empty = PointsToResult(m.name)
    extra = analysis_facts(m, {}, empty, cfg)
    for k in ("smram_region", "forbidden_fn"):
        rels[k] = extra[k]
    results = evaluate_fixpoint(parse_rules(rules_text(cfg, m)), rels)
    return run_vuln_rules(m, cfg=cfg, results=results)


def findings_json(findings: list[CandidateFinding]) -> str:
    rows = [{"id": f.id, "category": f.category.value, "entry": f.entry, "func": f.func, "instr": f.instr,
             "file": f.file, "line": f.line, "col": f.col, "opcode": f.opcode, "location": f.location,
             "sources": list(f.taint_sources), "sinks": [list(s) for s in f.taint_sinks]} for f in findings]
    return json.dumps(rows, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def findings_from_json(text: str) -> list[CandidateFinding]:
    return [CandidateFinding(VulnCategory(r["category"]), r["entry"], r["func"], r["instr"], r["file"],
                             r["line"], r["col"], tuple(r["sources"]), tuple(tuple(s) for s in r["sinks"]),
                             r["opcode"]) for r in json.loads(text)]


def effective_config(cfg: AnalysisConfig, opts: PipelineOptions) -> AnalysisConfig:
    from dataclasses import replace

    return replace(cfg, loop_bound=cfg.loop_bound if opts.loop_bound is None else opts.loop_bound,
                   call_depth=cfg.call_depth if opts.call_depth is None else opts.call_depth)


def run_pipeline(m: ModuleIR, cfg: AnalysisConfig, ech: Optional[EnvConfigHarness] = None,
                 opts: Optional[PipelineOptions] = None, out_dir=None, module_path: str = "") -> PipelineReport:
    """Run every stage; artifacts go to ``out_dir`` when given."""
    opts = opts or PipelineOptions()
    cfg = effective_config(cfg, opts)
    report = PipelineReport(m.name)
    out = Path(out_dir) if out_dir is not None else None
    try:
        cfg.validate(m)
        if ech is not None:
            m = build_ech(m, ech)
        facts, pts = fact_stage(m)
    except Exception as exc:  # noqa: BLE001 - attributed and re-raised
        raise StageError("facts", str(exc)) from exc
    try:
        findings = run_vuln_rules(m, facts, pts, cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("rules", str(exc)) from exc
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_fact_dir(out / "facts", facts, pts)
        (out / "candidates.json").write_text(findings_json(findings), encoding="utf-8")
    if not findings:
        _write_report(out, report)
        return report
    try:
        sdg = build_sdg(m, facts, pts)
    except Exception as exc:  # noqa: BLE001
        raise StageError("slice", str(exc)) from exc
    solver_cfg = opts.solver_config()
    for f in findings:
        report.rows.append(_run_finding(m, cfg, f, pts, sdg, solver_cfg, opts, out, module_path, report))
    _write_report(out, report)
    return report


def _run_finding(m, cfg, f, pts, sdg, solver_cfg, opts, out, module_path, report) -> FindingRow:
    t0 = time.perf_counter()
    row = FindingRow(f.id, f.category.value, f.entry, f.func, f.instr, f.location, "candidate", "not-run")
    try:
        sl = slice_for_finding(m, cfg, f, sdg)
        vd = emit_vuln_description(m, cfg, f, sl, pts, sdg, module_path)
    except NonExploitable as exc:
        row.static_status, row.note = "non-exploitable", str(exc)
        return row
    t1 = time.perf_counter()
    stem = artifact_stem(vd.id)
    if out is not None:
        write_vd(out / f"{stem}.vd", vd)
    try:
        peh = generate_peh(vd, m, cfg.loop_bound, cfg.call_depth)
        seg = instrument(m, peh)
    except Exception as exc:  # noqa: BLE001
        report.errors.append(f"[harness] {f.id}: {exc}")
        row.note = f"harness error: {exc}"
        return row
    if out is not None:
        write_harness(out, peh, seg)
    t2 = time.perf_counter()
    try:
        result = explore_segment(seg, peh, solver_cfg, opts.max_steps, opts.max_paths)
    except (EngineError, UnmodeledAccess) as exc:
        report.errors.append(f"[symexec] {f.id}: {exc}")
        row.note = f"symexec error: {exc}"
        return row
    row.status = classify(result)
    sig = build_signature(result, seg, peh, f.category.value)
    if sig is not None:
        row.disjuncts = len(sig.disjuncts)
        if out is not None:
            write_signature(out, sig)
    t3 = time.perf_counter()
    row.timings = {"slice": round(t1 - t0, 4), "harness": round(t2 - t1, 4), "symexec": round(t3 - t2, 4)}
    return row


def _write_report(out: Optional[Path], report: PipelineReport) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
