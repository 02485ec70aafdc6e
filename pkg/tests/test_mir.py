import re

import pytest
from gen import modules
from hypothesis import given, settings

from stase import corpus
from stase.mir import MirError, parse_file, parse_module, pretty_print, validate_module
from stase.mir.ir import IntType, PtrType

MINIMAL = "fn @f(%a:i32) { e: ret %a }"


def test_minimal_module():
    m = parse_module(MINIMAL)
    assert [f.name for f in m.functions] == ["f"]
    [f] = m.functions
    assert len(f.blocks) == 1 and len(f.blocks[0].instructions) == 1
    assert f.blocks[0].instructions[0].opcode == "ret"
    assert validate_module(m) == []


def test_undefined_value_is_reported():
    with pytest.raises(MirError) as ei:
        parse_module("fn @f() { e: %x = udiv i32 %y, 0 }")
    msgs = [str(d) for d in ei.value.diagnostics]
    assert any("undefined value %y" in s for s in msgs)


def test_missing_terminator_names_block():
    with pytest.raises(MirError) as ei:
        parse_module("fn @f() {\ne:\n  %x = add i32 1, 2\n}\n")
    msgs = [str(d) for d in ei.value.diagnostics]
    assert len([s for s in msgs if "terminator" in s]) == 1
    assert "block e" in msgs[0]


def test_duplicate_function_one_diagnostic_per_duplicate():
    body = "fn @f() {\ne:\n  ret\n}\n"
    for copies in (2, 3):
        with pytest.raises(MirError) as ei:
            parse_module(body * copies)
        dup = [d for d in ei.value.diagnostics if "duplicate function name" in str(d)]
        assert len(dup) == copies - 1


def test_diagnostic_format():
    with pytest.raises(MirError) as ei:
        parse_module("fn @f() {\ne:\n  %x = add i32 %nope, 2\n  ret\n}\n", file="x.mir")
    assert re.match(r"^[^:]+:\d+:\d+: error: ", str(ei.value.diagnostics[0]))


def test_syntax_error_has_position():
    with pytest.raises(MirError) as ei:
        parse_module("fn @f( {\n")
    assert re.search(r":\d+:\d+: error:", str(ei.value))


def test_unknown_callee_rejected():
    with pytest.raises(MirError):
        parse_module("fn @f() {\ne:\n  call @nowhere()\n  ret\n}\n")


def test_arithmetic_width_mismatch_rejected():
    with pytest.raises(MirError):
        parse_module("fn @f(%a: i8, %b: i16) -> i8 {\ne:\n  %x = add i8 %a, %b\n  ret i8 %x\n}\n")


def test_tpm_div_corpus_file():
    m = parse_file(corpus.path("tpm_div"))
    f = m.function("TpmNvsCommunciate")
    instrs = [i for b in f.blocks for i in b.instructions]
    assert any(i.opcode == "load" and "CommBufferSize" in str(i.operands[0]) for i in instrs)
    [div] = [i for i in instrs if i.opcode == "udiv"]
    assert div.loc.line == 70
    assert div.id == "<injected_Tcg2Smm.bc>:TpmNvsCommunciate:32"


def test_struct_declarations_printed_before_functions():
    m = parse_file(corpus.path("pxebc"))
    text = pretty_print(m)
    first_fn = text.index("\nfn @")
    assert all(text.index(f"struct {s.name}") < first_fn for s in m.structs)


def test_minimal_module_canonical_text():
    text = pretty_print(parse_module(MINIMAL))
    body = [ln for ln in text.splitlines() if ln.startswith("  ")]
    assert len(body) == 1 and body[0].lstrip().startswith("ret")


def test_source_locations_default_to_input_lines():
    m = parse_module("fn @f(%a: i8) -> i8 {\ne:\n  %b = add i8 %a, 1\n  ret i8 %b\n}\n", file="t.c")
    locs = [i.loc.line for b in m.functions[0].blocks for i in b.instructions]
    assert locs == [3, 4]
    assert all(i.loc.line >= 1 for b in m.functions[0].blocks for i in b.instructions)


def test_instruction_ids_unique_and_deterministic():
    text = corpus.path("pxebc").read_text()
    ids1 = [i.id for f in parse_module(text).functions for b in f.blocks for i in b.instructions]
    ids2 = [i.id for f in parse_module(text).functions for b in f.blocks for i in b.instructions]
    assert ids1 == ids2 and len(set(ids1)) == len(ids1)


def test_param_types_parsed():
    m = parse_file(corpus.path("smm_profile"))
    params = dict(m.function("SmramProfileHandler").params)
    assert all(isinstance(t, (IntType, PtrType)) for t in params.values())


@pytest.mark.parametrize("name", [p.name for p in corpus.list_programs()])
def test_corpus_validates_and_round_trips(name):
    m = parse_file(corpus.path(name))
    assert validate_module(m) == []
    text = pretty_print(m)
    again = parse_module(text, file=str(corpus.path(name)))
    assert again == m
    assert pretty_print(again) == text


@settings(max_examples=150, deadline=None)
@given(modules())
def test_random_module_round_trip(mod):
    text, _ = mod
    m = parse_module(text)
    printed = pretty_print(m)
    assert parse_module(printed) == m
    assert pretty_print(parse_module(printed)) == printed
