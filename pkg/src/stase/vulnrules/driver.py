"""Evaluate the category rule sets and turn ``vuln_candidate`` tuples into findings."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from ..datalog import evaluate_fixpoint, parse_rules, query
from ..facts import extract_facts
from ..mir.ir import Local, ModuleIR
from ..points_to import PointsToResult, run_pointer_analysis
from .config import AnalysisConfig, VulnCategory


def rule_asset(name: str) -> str:
    return resources.files(__package__).joinpath("rules", name).read_text(encoding="utf-8")


def generated_rules(cfg: AnalysisConfig, m: ModuleIR) -> str:
    """``entrypoint``/``entryinput_of`` rules for the configured entry points."""
    out = []
    for fname, inputs in cfg.resolve_entrypoints(m).items():
        out.append(f'entrypoint(?func):-\n  func_name(?func, "@{fname}").')
        for idx in inputs.params:
            out.append(
                f"entryinput_of(?func, ?taintentry):-\n  entrypoint(?func),\n"
                f'  func_name(?func, "@{fname}"),\n  func_param(?func, ?taintentry, {idx}).')
        for g in inputs.globals:
            out.append(f'entryinput_of(?func, "@{g}"):-\n  func_name(?func, "@{fname}").')
    return "\n".join(out) + "\n"


def rules_text(cfg: AnalysisConfig, m: ModuleIR) -> str:
    parts = ["// generated from the analysis configuration", generated_rules(cfg, m),
             rule_asset("taint.dl")]
    for cat in sorted(set(cfg.enabled_categories), key=lambda c: c.value):
        parts.append(rule_asset(f"{cat.value}.dl"))
    # keep relations referenced by absent categories well-defined
    return "\n".join(parts)


def analysis_facts(m: ModuleIR, facts: dict, pts: PointsToResult, cfg: AnalysisConfig) -> dict:
    out = {k: set(v) for k, v in facts.items()}
    out["subset.var_points_to"] = pts.var_points_to()
    out["pts_site"] = {(var, site) for var, cells in pts.pts.items() for site, _ in cells}
    out["smram_region"] = {(r,) for r in (cfg.regions or [r.name for r in m.regions])}
    out["forbidden_fn"] = {
        (m.func_id(f.name),) for f in m.functions
        if any(fnmatch.fnmatchcase(f.name, p) for p in cfg.forbidden_calls)}
    return out


@dataclass(frozen=True)
class CandidateFinding:
    category: VulnCategory
    entry: str
    func: str
    instr: str
    file: str
    line: int
    col: int
    taint_sources: tuple[str, ...]
    taint_sinks: tuple[tuple[str, str], ...]
    opcode: str = ""

    @property
    def ordinal(self) -> int:
        return int(self.instr.rsplit(":", 1)[1])

    @property
    def id(self) -> str:
        return f"{self.category.value}.{self.entry}.{self.func}.{self.ordinal}"

    @property
    def location(self) -> str:
        return f"{self.file}:{self.line}"

    def sort_key(self):
        return (self.category.value, self.file, self.line, self.func, self.ordinal, self.entry)


def local_name(value_id: str) -> Optional[str]:
    """``<m.bc>:f:%x`` -> ``x``; globals and constants give ``None``."""
    if ":%" in value_id:
        return value_id.rsplit(":%", 1)[1]
    return None


def run_vuln_rules(m: ModuleIR, facts: Optional[dict] = None, pts: Optional[PointsToResult] = None,
                   cfg: Optional[AnalysisConfig] = None, results: Optional[dict] = None
                   ) -> list[CandidateFinding]:
    """Evaluate every enabled category and group candidates by (category, K, entry)."""
    cfg = cfg or AnalysisConfig()
    if results is None:
        facts = facts if facts is not None else extract_facts(m)
        pts = pts if pts is not None else run_pointer_analysis(m)
        program = parse_rules(rules_text(cfg, m))
        results = evaluate_fixpoint(program, analysis_facts(m, facts, pts, cfg))
    rows = query(results, "vuln_candidate") if "vuln_candidate" in results else []
    enabled = {c.value for c in cfg.enabled_categories}
    groups: dict[tuple, dict] = {}
    for cat, entry_id, instr, src, sink, role in rows:
        if cat not in enabled:
            continue
        entry = entry_id.rsplit(":", 1)[1]
        g = groups.setdefault((cat, instr, entry), {"src": set(), "sinks": set()})
        if src != "-":
            g["src"].add(src)
        g["sinks"].add((role, sink))
    out = []
    for (cat, instr, entry), g in groups.items():
        f, _, _ = m.locate(instr)
        i = m.instruction(instr)
        out.append(CandidateFinding(
            VulnCategory(cat), entry, f.name, instr, i.loc.file, i.loc.line, i.loc.col,
            tuple(sorted(g["src"])), tuple(sorted(g["sinks"])), i.opcode))
    out.sort(key=CandidateFinding.sort_key)
    return out
