import dataclasses

import pytest

from stase import corpus
from stase.harness import (EchError, EnvConfigHarness, HarnessError, build_ech, dump_ech, generate_peh,
                           instrument, load_ech, read_harness, write_harness)
from stase.mir import parse_module
from stase.mir.ir import SymbolicInit
from stase.slicer import build_sdg, emit_vuln_description, slice_for_finding
from stase.vulnrules import run_vuln_rules


def _div_peh():
    m, cfg, _ = corpus.load("div_tp")
    [f] = run_vuln_rules(m, cfg=cfg)
    vd = emit_vuln_description(m, cfg, f, slice_for_finding(m, cfg, f, build_sdg(m)))
    return m, vd, generate_peh(vd, m)


def _all(m):
    return [i for f in m.functions for i in f.instructions()]


def test_peh_contents():
    _, vd, peh = _div_peh()
    assert peh.entry == "AverageHandler" and peh.target == vd.K
    assert [v.symbol for v in peh.symbolic_vars] == ["Req->Count"]
    assert peh.symbolic_vars[0].type == "i8"
    assert peh.stubs == ("LogEvent",)
    assert peh.assertion == "%count != 0"


def test_instrumented_segment_shape():
    m, _, peh = _div_peh()
    seg = instrument(m, peh)
    ins = _all(seg.module)
    asserts = [i for i in ins if i.opcode == "assert_intrinsic"]
    assert len(asserts) == 1 and asserts[0].id == seg.assertion
    # the assertion sits immediately before K
    [f] = [f for f in seg.module.functions if f.name == "AverageHandler"]
    body = list(f.instructions())
    j = [i.id for i in body].index(seg.assertion)
    assert body[j + 1].id == seg.target and body[j + 1].opcode == "udiv"
    # the stubbed callee returns a fresh symbol
    stub = list(seg.module.function("LogEvent").instructions())
    assert [i.opcode for i in stub] == ["symbolic_intrinsic", "ret"]
    assert stub[0].sym_name == "ret:@LogEvent"
    # the prologue makes the attacker field symbolic before the original code
    assert body[1].opcode == "symbolic_intrinsic" and body[1].sym_name == "Req->Count"


def test_instrumenting_twice_rejected():
    m, _, peh = _div_peh()
    seg = instrument(m, peh)
    with pytest.raises(HarnessError):
        instrument(seg.module, peh)


def test_cannot_stub_entry_or_target_function():
    m, _, peh = _div_peh()
    with pytest.raises(HarnessError):
        instrument(m, dataclasses.replace(peh, stubs=("AverageHandler",)))


def test_unknown_target_rejected():
    m, _, peh = _div_peh()
    with pytest.raises(HarnessError):
        instrument(m, dataclasses.replace(peh, target="<div_tp.bc>:AverageHandler:99"))


def test_instrumentation_deterministic():
    m, _, peh = _div_peh()
    a, b = instrument(m, peh), instrument(m, peh)
    assert a.text == b.text and a.digest == b.digest


def test_harness_files_round_trip(tmp_path):
    m, _, peh = _div_peh()
    seg = instrument(m, peh)
    theta, manifest = write_harness(tmp_path, peh, seg)
    assert theta.name.startswith("θ_") and manifest.name.startswith("peh_")
    peh2, seg2 = read_harness(manifest)
    assert peh2 == peh
    assert seg2.text == seg.text and seg2.target == seg.target and seg2.assertion == seg.assertion


ECH_MODULE = """
struct Guid { a: i64, b: i64 }
global @mLimit : i32
global @PcdFlag : i8
global @gGuid : Guid
global @mTable : i32
region SMRAM base=0x7F000000 size=0x1000000
fn @Get() -> i32 {
entry:
  ret i32 0
}
fn @h() -> i32 {
entry:
  %t = call @Get()
  %l = load i32, @mLimit
  ret i32 %l
}
"""


def test_ech_load_dump_round_trip():
    text = ("[symbolic_params]\nmLimit = 32\nSMRAM = 64\n[pcd]\nnames = PcdFlag\n"
            "[guids]\ngGuid = 0x0123456789abcdef_fedcba9876543210\n[table_stubs]\nGet = @mTable\n")
    ech = load_ech(text)
    assert ech.symbolic_firmware_params == [("mLimit", 32), ("SMRAM", 64)]
    assert ech.pcd_symbolics == ["PcdFlag"]
    assert ech.global_table_stubs == {"Get": "mTable"}
    assert load_ech(dump_ech(ech)) == ech


def test_ech_rewrites_and_idempotence():
    m = parse_module(ECH_MODULE)
    ech = load_ech("[symbolic_params]\nmLimit = 32\nSMRAM = 64\n[pcd]\nnames = PcdFlag\n"
                   "[guids]\ngGuid = 0x0123456789abcdef_fedcba9876543210\n")
    once = build_ech(m, ech)
    assert build_ech(once, ech) == once
    g = {x.name: x for x in once.globals}
    assert g["mLimit"].init == SymbolicInit(32)
    assert isinstance(g["PcdFlag"].init, SymbolicInit)
    # little-endian cell layout of the 128-bit GUID
    assert g["gGuid"].init == (0xfedcba9876543210, 0x0123456789abcdef)
    [r] = once.regions
    assert r.base == SymbolicInit(64) and r.size == SymbolicInit(64)


def test_empty_ech_is_identity():
    m = parse_module(ECH_MODULE)
    assert build_ech(m, EnvConfigHarness()) is m


@pytest.mark.parametrize("text", [
    "[symbolic_params]\nnope = 32\n",
    "[symbolic_params]\nmLimit = 12\n",
    "[pcd]\nnames = Missing\n",
    "[guids]\nmLimit = 0x1\n",
    "[table_stubs]\nGet = @nowhere\n",
    "[bogus]\n",
])
def test_ech_errors(text):
    m = parse_module(ECH_MODULE)
    with pytest.raises(EchError):
        build_ech(m, load_ech(text))
