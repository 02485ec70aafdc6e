import dataclasses

import networkx as nx
import pytest
from gen import modules
from hypothesis import given, settings

from stase import corpus
from stase.mir import parse_module
from stase.mir.cfg import call_graph
from stase.slicer import (CONTROL, DATA, MEMORY, SUMMARY, MutualRecursionError,
                          NonExploitable, build_sdg, dumps_vd, emit_vuln_description, loads_vd, read_vd,
                          slice_for_finding, two_pass_slice, write_vd)
from stase.vulnrules import run_vuln_rules

TWO_CALLS = """
fn @id(%p: i8) -> i8 {
entry:
  %r = add i8 %p, 0
  ret i8 %r
}
fn @main(%a: i8, %b: i8) -> i8 {
entry:
  %x = add i8 %a, 1
  %y = add i8 %b, 2
  %rx = call @id(%x)
  %ry = call @id(%y)
  %q = udiv i8 %rx, %ry
  ret i8 %q
}
"""


def _ids(m, func):
    return [i.id for i in m.function(func).instructions()]


def test_calling_context_respected():
    m = parse_module(TWO_CALLS)
    main = _ids(m, "main")
    sl = two_pass_slice(build_sdg(m), main[4], ["ry"])
    assert sl.instructions == frozenset({main[1], main[3], main[4], *_ids(m, "id")})
    # the other call site and its argument stay out
    assert main[0] not in sl.instructions and main[2] not in sl.instructions


def test_full_criterion_takes_both_operands():
    m = parse_module(TWO_CALLS)
    main = _ids(m, "main")
    sl = two_pass_slice(build_sdg(m), main[4])
    assert set(main[:5]) <= sl.instructions
    assert main[5] not in sl.instructions


def test_call_criterion_does_not_climb_into_other_callers():
    m = parse_module(TWO_CALLS)
    main = _ids(m, "main")
    sl = two_pass_slice(build_sdg(m), main[3])
    assert sl.instructions == frozenset({main[1], main[3], *_ids(m, "id")})


def test_summary_edges_at_call_sites():
    m = parse_module(TWO_CALLS)
    assert len(build_sdg(m).edges_of_kind(SUMMARY)) >= 2


def test_unknown_criterion():
    m = parse_module(TWO_CALLS)
    with pytest.raises(KeyError):
        two_pass_slice(build_sdg(m), "<module.bc>:main:99")


def test_mutual_recursion_rejected():
    text = """
fn @a(%x: i8) -> i8 {
entry:
  %r = call @b(%x)
  ret i8 %r
}
fn @b(%x: i8) -> i8 {
entry:
  %r = call @a(%x)
  ret i8 %r
}
"""
    with pytest.raises(MutualRecursionError):
        build_sdg(parse_module(text))


def _div_vd():
    m, cfg, _ = corpus.load("div_tp")
    [f] = run_vuln_rules(m, cfg=cfg)
    sl = slice_for_finding(m, cfg, f, build_sdg(m))
    return m, cfg, f, sl, emit_vuln_description(m, cfg, f, sl, module_path="div_tp.mir")


def test_division_description():
    m, _, f, sl, vd = _div_vd()
    assert len(sl.instructions) == 3
    assert vd.P == "div_tp" and vd.E == "AverageHandler"
    assert [i.label for i in vd.I] == ["Req->Count"]
    assert vd.A == "assert(count ≠ 0)"
    assert vd.K == f.instr and vd.L == "div_tp.c:24"
    # the unrelated logging call is stubbed; unsliced lines before K are discarded
    assert vd.U_functions == ("LogEvent",)
    assert vd.U == ("@LogEvent", "div_tp.c:19", "div_tp.c:22", "div_tp.c:23")


def test_vd_round_trip(tmp_path):
    *_, vd = _div_vd()
    assert loads_vd(dumps_vd(vd)) == vd
    write_vd(tmp_path / "x.vd", vd)
    assert read_vd(tmp_path / "x.vd") == vd
    assert dumps_vd(read_vd(tmp_path / "x.vd")) == dumps_vd(vd)


def test_unreachable_entry_is_non_exploitable():
    m, cfg, f, sl, _ = _div_vd()
    with pytest.raises(NonExploitable):
        emit_vuln_description(m, cfg, dataclasses.replace(f, entry="LogEvent"), sl)


CLOSED = {DATA, CONTROL, MEMORY, SUMMARY}


@settings(max_examples=80, deadline=None)
@given(modules())
def test_slice_closed_under_intraprocedural_dependences(mod):
    text, _ = mod
    m = parse_module(text)
    sdg = build_sdg(m)
    last = m.functions[-1]
    for i in last.instructions():
        sl = two_pass_slice(sdg, i.id)
        assert i.id in sl.instructions
        for n in sl.nodes:
            for u, kind in sdg.in_edges(n):
                if kind in CLOSED:
                    assert u in sl.nodes, (n, u, kind)
        # the generator never calls the last function, so the slice stays in it and its callees
        reach = {last.name} | nx.descendants(call_graph(m), last.name)
        assert {sdg.func_of[n] for n in sl.nodes if n in sdg.func_of} <= reach
