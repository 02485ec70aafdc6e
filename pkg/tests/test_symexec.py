import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import assignments, bv_eval, random_bool, random_symbols, satisfying_set

from stase import corpus
from stase.harness import generate_peh, instrument
from stase.mir import parse_module
from stase.slicer import build_sdg, emit_vuln_description, slice_for_finding
from stase.symexec import (CONFIRMED, DISMISSED, SAT, UNKNOWN, UNSAT, ExploreOptions, Solver, SolverConfig,
                           build_signature, classify, explore, explore_segment, interpret_concrete,
                           read_signature, write_signature)
from stase.symexec import expr as E
from stase.symexec.smtlib import parse_model
from stase.symexec.solver import all_models
from stase.vulnrules import run_vuln_rules

X8 = E.sym("x", 8)


def c8(v):
    return E.const(v, 8)


# --------------------------------------------------------------------------- expressions


def test_hash_consing():
    assert E.sym("x", 8) is E.sym("x", 8)
    y = E.sym("y", 8)
    assert E.add(X8, y) is E.add(X8, y)
    assert E.add(X8, y) is E.add(y, X8)


def test_constant_folding():
    assert E.add(c8(200), c8(100)) is c8(44)
    assert E.eq(X8, X8) is E.boolean(True)
    assert E.and_(E.boolean(False), E.eq(X8, c8(1))) is E.boolean(False)


@pytest.mark.parametrize("op,a,want", [
    ("udiv", 5, 0xFF), ("udiv", 0, 0xFF), ("sdiv", 5, 0xFF), ("sdiv", 0x80, 1), ("sdiv", 0xFF, 1),
])
def test_division_by_zero_semantics(op, a, want):
    e = E.binop(op, X8, c8(0))
    assert E.evaluate(e, {"x": a}) == want
    assert bv_eval(e, {"x": a}) == want


def test_signed_division_truncates_toward_zero():
    e = E.binop("sdiv", X8, c8(2))
    assert E.evaluate(e, {"x": 0xF9}) == 0xFD  # -7 / 2 == -3


def test_json_round_trip_is_identity():
    rng = random.Random(3)
    for _ in range(100):
        syms = random_symbols(rng)
        e = random_bool(rng, syms, 3, simplify=True)
        assert E.from_json(E.to_json(e)) is e


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplify_preserves_models(seed):
    rng = random.Random(seed)
    syms = random_symbols(rng)
    widths = {s.val: s.width for s in syms}
    raw = random_bool(rng, syms, 3, simplify=False)
    assert satisfying_set(E.simplify(raw), widths) == satisfying_set(raw, widths)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vector_evaluator_matches_scalar(seed):
    import numpy as np

    rng = random.Random(seed)
    syms = random_symbols(rng)
    widths = {s.val: s.width for s in syms}
    e = random_bool(rng, syms, 3, simplify=True)
    envs = list(assignments(widths))[:64]
    arrs = {n: np.array([env[n] for env in envs], dtype=np.uint64) for n in widths}
    got = E.evaluate_np(e, arrs, len(envs))
    assert [int(v) for v in np.broadcast_to(got, (len(envs),))] == [E.evaluate(e, env) for env in envs]


# --------------------------------------------------------------------------- solver


def test_small_sat_and_model_set():
    c = E.eq(E.mul(X8, c8(4)), c8(12))
    res = Solver().solve(c)
    assert res.status == SAT and res.method == "enumeration"
    models = {m for (m,) in all_models(c, {"x": 8})}
    assert models == {v for v in range(256) if (v * 4) % 256 == 12} == {3, 67, 131, 195}
    assert res.model["x"] in models


def test_contradiction_unsat():
    assert Solver().solve(E.and_(E.eq(X8, c8(0)), E.ne(X8, c8(0)))).status == UNSAT


def test_wide_query_solved_by_candidates():
    x, y = E.sym("x", 40), E.sym("y", 40)
    c = E.and_(E.eq(E.mul(x, y), E.const(987654321987, 40)), E.ult(E.const(3, 40), x))
    res = Solver(SolverConfig(bits=24)).solve(c)
    assert res.status == SAT
    assert E.evaluate(c, res.model) == 1


def test_unknown_emits_smtlib():
    x = E.sym("x", 40)
    c = E.eq(E.mul(x, E.const(1234567, 40)), E.const(987654321, 40))
    s = Solver(SolverConfig(bits=24, external=None))
    res = s.solve(c)
    assert res.status == UNKNOWN
    assert "(declare-fun |x| () (_ BitVec 40))" in res.smtlib
    assert "(check-sat)" in res.smtlib and s.smtlib_scripts == [res.smtlib]


def test_solver_caches_queries():
    s = Solver()
    c = E.eq(E.mul(X8, c8(4)), c8(12))
    s.solve(c)
    s.solve(c)
    assert s.queries == 1


def test_parse_model():
    text = "sat\n(model\n  (define-fun |x| () (_ BitVec 8) #x2a)\n  (define-fun y () (_ BitVec 4) #b0101)\n)\n"
    assert parse_model(text) == {"x": 42, "y": 5}


def test_non_boolean_constraint_rejected():
    with pytest.raises(ValueError):
        Solver().solve(X8)


# --------------------------------------------------------------------------- engine

GUARDED = """
fn @h() -> i8 {
entry:
  %a = symbolic_intrinsic i8 "a"
  %b = symbolic_intrinsic i8 "b"
  %big = icmp ugt i8 %a, 10
  condbr %big, yes, no
yes:
  assert_intrinsic %b != 0
  %q = udiv i8 %a, %b
  ret i8 %q
no:
  ret i8 0
}
"""


def test_explore_finds_violation_with_witness():
    m = parse_module(GUARDED)
    r = explore(m, "h")
    assert classify(r) == CONFIRMED
    [v] = r.violations
    assert v.model["b"] == 0 and v.model["a"] > 10
    assert interpret_concrete(m, "h", v.model).verdict == "violated"
    # the branch that cannot reach the assertion is pruned
    assert r.stats["pruned"] == 1


def test_infeasible_violation_dismissed():
    text = GUARDED.replace("%big = icmp ugt i8 %a, 10", "%big = icmp ne i8 %b, 0")
    m = parse_module(text)
    r = explore(m, "h")
    assert classify(r) == DISMISSED and r.violations == [] and r.covered


def test_loop_bound_limits_iterations():
    text = """
fn @h() -> i8 {
entry:
  %n = symbolic_intrinsic i8 "n"
  br head
head:
  %i = phi i8 [0, entry], [%i.next, body]
  %more = icmp ult i8 %i, %n
  condbr %more, body, exit
body:
  %i.next = add i8 %i, 1
  br head
exit:
  assert_intrinsic %i < 5
  ret i8 %i
}
"""
    m = parse_module(text)
    assert classify(explore(m, "h", ExploreOptions(loop_bound=3))) != CONFIRMED
    r = explore(m, "h", ExploreOptions(loop_bound=6))
    assert classify(r) == CONFIRMED
    assert all(v.model["n"] >= 5 for v in r.violations)


@st.composite
def branchy(draw):
    p1 = draw(st.sampled_from(["ult", "ugt", "eq", "ne", "slt", "sge"]))
    c1 = draw(st.integers(0, 255))
    op = draw(st.sampled_from(["add", "sub", "mul", "udiv", "sdiv"]))
    c2 = draw(st.integers(0, 255))
    rel = draw(st.sampled_from(["!=", "==", "<", ">="]))
    c3 = draw(st.integers(0, 255))
    return f"""
fn @h() -> i8 {{
entry:
  %a = symbolic_intrinsic i8 "a"
  %c = icmp {p1} i8 %a, {c1}
  condbr %c, yes, no
yes:
  %t = {op} i8 %a, {c2}
  assert_intrinsic %t {rel} {c3}
  ret i8 %t
no:
  ret i8 0
}}
"""


@settings(max_examples=40, deadline=None)
@given(branchy())
def test_violation_constraints_match_concrete_runs(text):
    m = parse_module(text)
    r = explore(m, "h")
    pre = E.or_(*[E.and_(*v.constraints, E.not_(v.assertion)) for v in r.violations])
    for a in range(256):
        by_sym = E.evaluate(pre, {"a": a}, default=0) == 1
        by_run = interpret_concrete(m, "h", {"a": a}).verdict == "violated"
        assert by_sym == by_run, a


# --------------------------------------------------------------------------- signatures


def _div_case():
    m, cfg, _ = corpus.load("div_tp")
    [f] = run_vuln_rules(m, cfg=cfg)
    vd = emit_vuln_description(m, cfg, f, slice_for_finding(m, cfg, f, build_sdg(m)))
    peh = generate_peh(vd, m)
    seg = instrument(m, peh)
    return peh, seg, explore_segment(seg, peh)


def test_division_signature(tmp_path):
    peh, seg, r = _div_case()
    sig = build_signature(r, seg, peh)
    assert sig.category == "DivisionByZero"
    [d] = sig.disjuncts
    assert d.witness["Req->Count"] == 0
    assert E.to_text(sig.precondition) == "Req->Count == 0"
    assert sig.segment["symbolic_arguments"] == ["Req->Count"]
    assert sig.segment["stubs"] == ["LogEvent"]
    js, txt = write_signature(tmp_path, sig)
    assert read_signature(js).dumps() == sig.dumps()
    text = txt.read_text(encoding="utf-8")
    assert text.startswith("1)Precondition:-\n")
    assert "2)Code Segment:-" in text and "3)Postcondition:-" in text


def test_no_violation_no_signature():
    m = parse_module(GUARDED.replace("%big = icmp ugt i8 %a, 10", "%big = icmp ne i8 %b, 0"))
    r = explore(m, "h")
    assert build_signature(r, None, None) is None
