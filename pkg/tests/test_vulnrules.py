import pytest
from oracles import build_ech_module

from stase import corpus
from stase.mir import parse_module
from stase.mir.expr import format_expr, parse_expr
from stase.vulnrules import (ALL_CATEGORIES, AnalysisConfig, ConfigError, TemplateError, VulnCategory,
                             assertion_for, dump_config, instantiate_assertion, load_config, run_vuln_rules)

SEEDED = [(p.name, s) for p in corpus.list_programs() for s in p.seeded]


@pytest.mark.parametrize("name,bug", SEEDED, ids=[f"{n}-{b.category}" for n, b in SEEDED])
def test_seeded_bug_is_a_candidate(name, bug):
    m, cfg, ech = corpus.load(name)
    m = build_ech_module(m, ech)
    found = {(f.category.value, f.func, f.line) for f in run_vuln_rules(m, cfg=cfg)}
    assert (bug.category, bug.function, bug.line) in found


def test_division_finding_fields():
    m, cfg, _ = corpus.load("div_tp")
    [f] = run_vuln_rules(m, cfg=cfg)
    assert f.category == VulnCategory.DivisionByZero
    assert f.entry == "AverageHandler" and f.opcode == "udiv"
    assert f.taint_sources == ("<div_tp.bc>:AverageHandler:%Req",)
    assert f.taint_sinks == (("divisor", "<div_tp.bc>:AverageHandler:%count"),)
    assert f.id == f"DivisionByZero.AverageHandler.AverageHandler.{f.ordinal}"
    assert format_expr(assertion_for(f, m, cfg).expr) == format_expr(parse_expr("%count != 0"))


def test_untainted_division_is_not_a_candidate():
    text = """
fn @h(%x: i8) -> i8 {
entry:
  %k = add i8 3, 4
  %q = udiv i8 %x, %k
  ret i8 %q
}
"""
    m = parse_module(text)
    cfg = load_config("[entrypoints]\nh = 0\n", m)
    assert run_vuln_rules(m, cfg=cfg) == []


def test_no_entrypoints_no_candidates():
    m, _, _ = corpus.load("div_tp")
    assert run_vuln_rules(m, cfg=AnalysisConfig()) == []


def test_category_filter():
    m, cfg, _ = corpus.load("div_tp")
    assert run_vuln_rules(m, cfg=cfg.with_categories(["IntegerOverflow"])) == []


def test_oob_assertion_uses_array_length():
    m, cfg, _ = corpus.load("oob_tp")
    [f] = [f for f in run_vuln_rules(m, cfg=cfg) if f.category == VulnCategory.OutOfBoundsAccess]
    text = format_expr(assertion_for(f, m, cfg).expr)
    assert "lenof(@mHandlerState)" in text and "%cmd" in text


def test_template_rejects_wrong_opcode():
    m, cfg, _ = corpus.load("div_tp")
    k = next(i for f in m.functions for b in f.blocks for i in b.instructions if i.opcode == "load")
    with pytest.raises(TemplateError):
        instantiate_assertion(VulnCategory.DivisionByZero, k, m, cfg)


def test_config_round_trip():
    text = ("[entrypoints]\nHandler* = 0, 1, @gBuf\n[regions]\nnames = SMRAM\n"
            "[forbidden]\npatterns = gBS_*\n[categories]\nenabled = DivisionByZero, UseAfterFree\n"
            "[options]\nloop_bound = 5\ncall_depth = 4\n")
    cfg = load_config(text)
    assert cfg.entrypoints[0].params == (0, 1) and cfg.entrypoints[0].globals == ("gBuf",)
    assert cfg.enabled_categories == (VulnCategory.DivisionByZero, VulnCategory.UseAfterFree)
    assert load_config(dump_config(cfg)) == cfg


def test_default_config_enables_everything():
    assert load_config("").enabled_categories == ALL_CATEGORIES


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[entrypoints]\nf = zero\n",
    "[categories]\nenabled = NotACategory\n",
    "[options]\nloop_bound = -1\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        load_config(text)


def test_config_validated_against_module():
    m, _, _ = corpus.load("div_tp")
    with pytest.raises(ConfigError, match="unknown entrypoint"):
        load_config("[entrypoints]\nNope = 0\n", m)
    with pytest.raises(ConfigError, match="out of range"):
        load_config("[entrypoints]\nAverageHandler = 3\n", m)
