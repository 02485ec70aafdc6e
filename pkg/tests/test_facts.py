from collections import Counter

import pytest
from gen import modules
from hypothesis import given, settings

from stase import corpus
from stase.facts import SCHEMA, extract_facts
from stase.mir import parse_file, parse_module
from stase.mir.cfg import IrreducibleCFG


def _loop(limit: int, pred: str = "ult", step: int = 1) -> str:
    return f"""
fn @f() -> i8 {{
entry:
  br head
head:
  %i = phi i8 [0, entry], [%i.next, body]
  %more = icmp {pred} i8 %i, {limit}
  condbr %more, body, exit
body:
  %i.next = add i8 %i, {step}
  br head
exit:
  ret i8 %i
}}
"""


def test_every_relation_present_and_typed():
    facts = extract_facts(parse_file(corpus.path("div_tp")))
    assert set(facts) == set(SCHEMA)
    for rel, rows in facts.items():
        for row in rows:
            assert len(row) == len(SCHEMA[rel])
            for v, t in zip(row, SCHEMA[rel]):
                assert isinstance(v, int if t == "number" else str), (rel, row)


def test_division_operands():
    m = parse_file(corpus.path("div_tp"))
    facts = extract_facts(m)
    [(iid,)] = facts["udiv_instr"]
    fid = m.func_id("AverageHandler")
    assert facts["udiv_instr_first_operand"] == {(iid, f"{fid}:%total")}
    assert facts["udiv_instr_second_operand"] == {(iid, f"{fid}:%count")}
    assert (iid, 24) in {(i, ln) for i, ln, _ in facts["instr_pos"]}


def test_gep_load_store_and_globals():
    m = parse_file(corpus.path("div_tp"))
    facts = extract_facts(m)
    fid = m.func_id("AverageHandler")
    assert {b for _, b in facts["gep_instr_base"]} == {f"{fid}:%Req"}
    assert {"@mLastAverage", "@mEvents"} == {g for g, _ in facts["global_var"]}
    assert any(a == "@mLastAverage" for _, a in facts["store_instr_address"])
    assert (fid, f"{fid}:%Req", 0) in facts["func_param"]


def test_call_and_external_facts():
    m = parse_file(corpus.path("callout_tp"))
    facts = extract_facts(m)
    ext = m.func_id("gBS_LocateProtocol")
    assert (ext,) in facts["func_external"]
    assert any(fn == ext for _, fn in facts["call_instr_fn"])


def test_counted_loop_bound_detected():
    m = parse_file(corpus.path("callout_tp"))
    facts = extract_facts(m)
    assert len(facts["loop_header"]) == 1
    [(hid, n)] = facts["loop_bound_const"]
    assert hid.endswith("#head") and n == 3


@pytest.mark.parametrize("limit,pred,step,trips", [(10, "ult", 1, 10), (0, "ult", 1, 0),
                                                  (9, "ult", 2, 5), (5, "ne", 1, 5)])
def test_trip_counts(limit, pred, step, trips):
    facts = extract_facts(parse_module(_loop(limit, pred, step)))
    assert {n for _, n in facts["loop_bound_const"]} == {trips}


def test_unbounded_loop_has_header_but_no_bound():
    text = """
fn @f(%n: i8) -> i8 {
entry:
  br head
head:
  %i = phi i8 [0, entry], [%i.next, body]
  %more = icmp ult i8 %i, %n
  condbr %more, body, exit
body:
  %i.next = add i8 %i, 1
  br head
exit:
  ret i8 %i
}
"""
    facts = extract_facts(parse_module(text))
    assert len(facts["loop_header"]) == 1 and facts["loop_bound_const"] == set()


def test_irreducible_cfg_rejected():
    text = """
fn @f(%c: i1) {
entry:
  condbr %c, a, b
a:
  br b
b:
  br a
}
"""
    with pytest.raises(IrreducibleCFG):
        extract_facts(parse_module(text))


@settings(max_examples=120, deadline=None)
@given(modules())
def test_opcode_facts_match_generated_counts(mod):
    text, counts = mod
    facts = extract_facts(parse_module(text))
    got = Counter(op for _, op in facts["instr_opcode"])
    for op, n in counts.items():
        assert got[op] == n, op
    for op in ("add", "sub", "mul", "udiv", "sdiv"):
        assert len(facts[f"{op}_instr"]) == counts[op]
    # every instruction has exactly one function, position and block
    ids = {i for i, _ in facts["instr_opcode"]}
    assert {i for i, _ in facts["instr_func"]} == ids
    assert {i for i, _ in facts["block_of"]} == ids
    assert len(facts["instr_pos"]) == len(ids)
