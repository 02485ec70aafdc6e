"""Vulnerability rule sets, analysis configuration and assertion templates."""

from __future__ import annotations

from ..facts import value_id
from ..mir.ir import ModuleIR
from .config import ALL_CATEGORIES, AnalysisConfig, ConfigError, EntryInputs, VulnCategory, dump_config, load_config
from .driver import (
    CandidateFinding,
    analysis_facts,
    generated_rules,
    local_name,
    rule_asset,
    rules_text,
    run_vuln_rules,
)
from .templates import TEMPLATES, Assertion, AssertionTemplate, TemplateError, instantiate_assertion


def assertion_for(finding: CandidateFinding, m: ModuleIR, cfg: AnalysisConfig) -> Assertion:
    """Instantiate the category template of ``finding`` at its instruction."""
    k = m.instruction(finding.instr)
    positions = ()
    if finding.category == VulnCategory.OutOfBoundsAccess:
        sinks = {s for role, s in finding.taint_sinks if role == "index"}
        positions = tuple(p for p, o in enumerate(k.operands)
                          if p > 0 and value_id(m, finding.func, o) in sinks)
    return instantiate_assertion(finding.category, k, m, cfg, positions)


__all__ = [
    "ALL_CATEGORIES", "AnalysisConfig", "Assertion", "AssertionTemplate", "CandidateFinding",
    "ConfigError", "EntryInputs", "TEMPLATES", "TemplateError", "VulnCategory", "analysis_facts",
    "assertion_for", "dump_config", "generated_rules", "instantiate_assertion", "load_config",
    "local_name", "rule_asset", "rules_text", "run_vuln_rules",
]
