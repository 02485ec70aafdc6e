"""Type inference and well-formedness checks for :class:`ModuleIR`."""

from __future__ import annotations

from collections import Counter
from dataclasses import replace
from typing import Optional

from . import expr as mexpr
from .cfg import dominators, reachable_blocks
from .ir import (
    ARITH,
    INTRINSICS,
    WIDTHS,
    ArrayType,
    Const,
    Field,
    FunctionDef,
    GlobalRef,
    Instruction,
    IntType,
    Local,
    ModuleIR,
    NullConst,
    PtrType,
    StructType,
    SymbolicInit,
    TypeDesc,
    VOID,
    VoidType,
    is_int,
    is_ptr,
    is_scalar,
)
from .parser import Diagnostic


def _diag(i_or_loc, msg: str, instr: Optional[str] = None) -> Diagnostic:
    loc = i_or_loc.loc if hasattr(i_or_loc, "loc") else i_or_loc
    return Diagnostic(loc.file, loc.line, loc.col, msg, "error", instr)


def callee_signature(m: ModuleIR, name: str) -> Optional[tuple[tuple[TypeDesc, ...], TypeDesc]]:
    for f in m.functions:
        if f.name == name:
            return tuple(t for _, t in f.params), f.ret_type or VOID
    return INTRINSICS.get(name)


def gep_result(m: ModuleIR, base: TypeDesc, indices) -> Optional[TypeDesc]:
    if not isinstance(base, PtrType):
        return None
    t = base.pointee
    for idx in indices:
        if isinstance(idx, Field):
            if not isinstance(t, StructType) or t.name not in {s.name for s in m.structs}:
                return None
            ft = m.struct(t.name).field_type(idx.name)
            if ft is None:
                return None
            t = ft
        else:
            if not isinstance(t, ArrayType):
                return None
            t = t.elem
    return PtrType(t)


def value_type(v, env: dict[str, TypeDesc], m: ModuleIR, hint: Optional[TypeDesc] = None):
    if isinstance(v, Local):
        return env.get(v.name)
    if isinstance(v, GlobalRef):
        for g in m.globals:
            if g.name == v.name:
                return PtrType(g.type)
        return None
    if isinstance(v, NullConst):
        return hint if is_ptr(hint) else PtrType(IntType(8))
    if isinstance(v, Const):
        return hint if hint is not None and is_int(hint) else IntType(64)
    return None


def _result_type(m: ModuleIR, i: Instruction, env) -> Optional[TypeDesc]:
    op = i.opcode
    if op == "alloca":
        return PtrType(i.type)
    if op in ("load", "phi", "zext", "trunc", "symbolic_intrinsic") or op in ARITH:
        return i.type
    if op == "icmp":
        return IntType(1)
    if op == "gep":
        base = value_type(i.operands[0], env, m) if i.operands else None
        return gep_result(m, base, i.operands[1:]) if base is not None else None
    if op == "call":
        sig = callee_signature(m, i.callee)
        return sig[1] if sig else None
    return VOID


def infer_types(m: ModuleIR) -> tuple[ModuleIR, list[Diagnostic]]:
    """Fill ``result_type`` on every instruction and resolve omitted return types."""
    diags: list[Diagnostic] = []
    # resolve return types first so calls can see them
    funcs = []
    for f in m.functions:
        ret = f.ret_type
        if ret is None:
            ret = VOID
            env = dict(f.params)
            for i in f.instructions():
                if i.opcode == "ret" and i.operands:
                    if not isinstance(i.type, VoidType):
                        ret = i.type
                    else:
                        ret = value_type(i.operands[0], _defs(f), m) or IntType(64)
                    break
        funcs.append(replace(f, ret_type=ret))
    m = replace(m, functions=tuple(funcs))
    new_funcs = []
    for f in m.functions:
        if f.is_external:
            new_funcs.append(f)
            continue
        env: dict[str, TypeDesc] = dict(f.params)
        types: dict[str, TypeDesc] = {}
        # iterate: gep results may depend on later-defined (but dominating) values
        for _ in range(len(list(f.instructions())) + 1):
            changed = False
            for i in f.instructions():
                if i.id in types:
                    continue
                t = _result_type(m, i, env)
                if t is not None:
                    types[i.id] = t
                    if i.result:
                        env.setdefault(i.result, t)
                    changed = True
            if not changed:
                break
        blocks = []
        for b in f.blocks:
            ins = []
            for i in b.instructions:
                ins.append(replace(i, result_type=types.get(i.id, VOID)))
            blocks.append(replace(b, instructions=tuple(ins)))
        new_funcs.append(replace(f, blocks=tuple(blocks)))
    return replace(m, functions=tuple(new_funcs)), diags


def _defs(f: FunctionDef) -> dict[str, TypeDesc]:
    env = dict(f.params)
    for i in f.instructions():
        if i.result and i.opcode in ("load", "phi", "zext", "trunc", "symbolic_intrinsic", *ARITH):
            env[i.result] = i.type
    return env


def _check_type(t: TypeDesc, m: ModuleIR, where, diags, iid=None):
    if isinstance(t, IntType):
        if t.width not in WIDTHS:
            diags.append(_diag(where, f"unsupported integer width i{t.width}", iid))
    elif isinstance(t, PtrType):
        _check_type(t.pointee, m, where, diags, iid)
    elif isinstance(t, ArrayType):
        if t.length < 0:
            diags.append(_diag(where, "negative array length", iid))
        _check_type(t.elem, m, where, diags, iid)
    elif isinstance(t, StructType):
        if t.name not in {s.name for s in m.structs}:
            diags.append(_diag(where, f"unknown struct type {t.name}", iid))


def validate_module(m: ModuleIR) -> list[Diagnostic]:
    """Return diagnostics for every violated invariant; empty means well-formed."""
    diags: list[Diagnostic] = []
    top = _ModLoc(m)

    for name, n in Counter(f.name for f in m.functions).items():
        for f in [f for f in m.functions if f.name == name][1:]:
            diags.append(_diag(f, f"duplicate function name @{name}"))
    for name, n in Counter(g.name for g in m.globals).items():
        for g in [g for g in m.globals if g.name == name][1:]:
            diags.append(_diag(g, f"duplicate global name @{name}"))
    for name, n in Counter(s.name for s in m.structs).items():
        if n > 1:
            diags.append(_diag(top, f"duplicate struct name {name}"))
    for s in m.structs:
        for fname, c in Counter(fn for fn, _ in s.fields).items():
            if c > 1:
                diags.append(_diag(top, f"duplicate field {fname} in struct {s.name}"))
        for _, ft in s.fields:
            _check_type(ft, m, top, diags)
    for g in m.globals:
        _check_type(g.type, m, g, diags)
    for r in m.regions:
        if isinstance(r.base, int) and isinstance(r.size, int):
            if r.base < 0 or r.size < 0 or r.base + r.size >= 1 << 64:
                diags.append(_diag(r, f"region {r.name}: base + size wraps at 64 bits"))
    for iid, c in Counter(i.id for f in m.functions for i in f.instructions()).items():
        if c > 1:
            diags.append(_diag(top, f"duplicate instruction id {iid}", iid))

    for f in m.functions:
        if not f.is_external:
            diags.extend(_validate_function(m, f))
    return diags


class _ModLoc:
    def __init__(self, m: ModuleIR):
        from .ir import SourceLoc

        self.loc = SourceLoc(m.source_file, 1, 0)


def _validate_function(m: ModuleIR, f: FunctionDef) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    if not f.blocks:
        diags.append(_diag(f, f"function @{f.name} has no blocks"))
        return diags
    for _, t in f.params:
        _check_type(t, m, f, diags)
    labels = [b.label for b in f.blocks]
    for lbl, c in Counter(labels).items():
        if c > 1:
            diags.append(_diag(f, f"duplicate block label {lbl} in @{f.name}"))
    label_set = set(labels)

    # terminators
    for b in f.blocks:
        if not b.instructions or not b.instructions[-1].is_terminator:
            loc = b.instructions[-1] if b.instructions else f
            diags.append(_diag(loc, f"block {b.label} in @{f.name} lacks a terminator"))
        for i in b.instructions[:-1]:
            if i.is_terminator:
                diags.append(_diag(i, f"terminator {i.opcode} in the middle of block {b.label}", i.id))
        for s in b.successors():
            if s not in label_set:
                diags.append(_diag(b.instructions[-1], f"branch to unknown block {s}", b.instructions[-1].id))
    if any("terminator" in d.message or "unknown block" in d.message for d in diags):
        structural_ok = False
    else:
        structural_ok = True

    # single definition
    defined: dict[str, tuple[str, int]] = {}
    for pname, _ in f.params:
        if pname in defined:
            diags.append(_diag(f, f"parameter %{pname} defined twice"))
        defined[pname] = ("<param>", -1)
    for b in f.blocks:
        for k, i in enumerate(b.instructions):
            if i.result:
                if i.result in defined:
                    diags.append(_diag(i, f"SSA violation: %{i.result} defined more than once", i.id))
                else:
                    defined[i.result] = (b.label, k)

    env: dict[str, TypeDesc] = dict(f.params)
    for i in f.instructions():
        if i.result and i.result not in env:
            env[i.result] = i.result_type

    dom = dominators(f) if structural_ok else {}
    reach = reachable_blocks(f) if structural_ok else set()
    preds: dict[str, list[str]] = {b.label: [] for b in f.blocks}
    for b in f.blocks:
        for s in b.successors():
            if s in preds:
                preds[s].append(b.label)

    def check_use(name: str, i: Instruction, block: str, pos: int, at_end_of: Optional[str] = None):
        if name not in defined:
            diags.append(_diag(i, f"use of undefined value %{name}", i.id))
            return
        dblock, dpos = defined[name]
        if dblock == "<param>" or not structural_ok:
            return
        ublock = at_end_of or block
        if ublock not in reach:
            return
        if dblock == ublock:
            if at_end_of is None and dpos >= pos:
                diags.append(_diag(i, f"use of %{name} not dominated by its definition", i.id))
        elif dblock not in dom.get(ublock, set()):
            diags.append(_diag(i, f"use of %{name} not dominated by its definition", i.id))

    for b in f.blocks:
        for k, i in enumerate(b.instructions):
            if i.opcode == "phi":
                for v, lbl in zip(i.operands, i.labels):
                    if lbl not in preds.get(b.label, []):
                        diags.append(_diag(i, f"phi incoming block {lbl} is not a predecessor of {b.label}", i.id))
                    if isinstance(v, Local):
                        check_use(v.name, i, b.label, k, at_end_of=lbl if lbl in label_set else None)
            else:
                for u in i.uses():
                    check_use(u.name, i, b.label, k)
            diags.extend(_check_instruction(m, f, i, env))
    return diags


def _arity(i: Instruction) -> Optional[str]:
    n = len(i.operands)
    want = {
        "alloca": 0, "load": 1, "store": 2, "icmp": 2, "zext": 1, "trunc": 1,
        "br": 0, "condbr": 1, "free": 1, "memcpy": 3, "assert_intrinsic": 0,
        "symbolic_intrinsic": 0, **{a: 2 for a in ARITH},
    }.get(i.opcode)
    if want is not None and n != want:
        return f"{i.opcode} expects {want} operand(s), got {n}"
    if i.opcode == "gep" and n < 2:
        return "gep expects a base plus at least one index"
    if i.opcode == "phi" and (n == 0 or n != len(i.labels)):
        return "phi needs at least one [value, label] pair"
    if i.opcode == "ret" and n > 1:
        return "ret takes at most one operand"
    return None


def _check_instruction(m: ModuleIR, f: FunctionDef, i: Instruction, env) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    err = _arity(i)
    if err:
        return [_diag(i, err, i.id)]

    def vt(v, hint=None):
        return value_type(v, env, m, hint)

    def bad(msg):
        out.append(_diag(i, msg, i.id))

    for op in i.operands:
        if isinstance(op, GlobalRef) and vt(op) is None:
            bad(f"unknown global @{op.name}")
    op = i.opcode
    _check_type(i.type, m, i, out, i.id)
    if op in ARITH:
        if not is_int(i.type):
            bad(f"{op} requires an integer type")
        for v in i.operands:
            t = vt(v, i.type)
            if t is not None and t != i.type:
                bad(f"{op} operand {v} has type {t}, expected {i.type}")
    elif op == "icmp":
        for v in i.operands:
            t = vt(v, i.type)
            if t is not None and t != i.type and not (is_ptr(t) and is_ptr(i.type)):
                bad(f"icmp operand {v} has type {t}, expected {i.type}")
    elif op in ("zext", "trunc"):
        src = vt(i.operands[0], IntType(int(i.pred[1:])) if i.pred and i.pred.startswith("i") else None)
        if not (is_int(src) and is_int(i.type)):
            bad(f"{op} requires integer types")
        elif op == "zext" and src.width > i.type.width:
            bad(f"zext from i{src.width} to narrower i{i.type.width}")
        elif op == "trunc" and src.width < i.type.width:
            bad(f"trunc from i{src.width} to wider i{i.type.width}")
    elif op == "load":
        pt = vt(i.operands[0])
        if pt is not None and not (is_ptr(pt) and pt.pointee == i.type):
            bad(f"load of {i.type} through operand of type {pt}")
        if not is_scalar(i.type):
            bad("load must produce a scalar")
    elif op == "store":
        pt = vt(i.operands[1])
        if pt is not None and not (is_ptr(pt) and pt.pointee == i.type):
            bad(f"store of {i.type} through operand of type {pt}")
        t = vt(i.operands[0], i.type)
        if t is not None and t != i.type and not (is_ptr(t) and is_ptr(i.type)):
            bad(f"stored value has type {t}, expected {i.type}")
    elif op == "gep":
        if i.result_type is VOID or i.result_type == VOID:
            bad("gep indices do not match the base type")
        for idx in i.operands[1:]:
            if not isinstance(idx, Field):
                t = vt(idx)
                if t is not None and not is_int(t):
                    bad("gep array index must be an integer")
    elif op == "condbr":
        t = vt(i.operands[0], IntType(1))
        if t is not None and t != IntType(1):
            bad("condbr condition must be i1")
    elif op == "call":
        sig = callee_signature(m, i.callee)
        if sig is None:
            bad(f"unknown callee @{i.callee}")
        else:
            params, _ = sig
            if len(params) != len(i.operands):
                bad(f"call to @{i.callee} passes {len(i.operands)} argument(s), expected {len(params)}")
            else:
                for v, pt in zip(i.operands, params):
                    t = vt(v, pt)
                    if t is not None and t != pt and not (is_ptr(t) and is_ptr(pt)):
                        bad(f"argument {v} to @{i.callee} has type {t}, expected {pt}")
    elif op == "ret":
        if i.operands:
            t = vt(i.operands[0], f.ret_type)
            if t is not None and t != f.ret_type and not (is_ptr(t) and is_ptr(f.ret_type)):
                bad(f"ret of {t} in function returning {f.ret_type}")
        elif f.ret_type != VOID:
            bad(f"missing return value in function returning {f.ret_type}")
    elif op in ("free",):
        t = vt(i.operands[0])
        if t is not None and not is_ptr(t):
            bad("free requires a pointer")
    elif op == "memcpy":
        for v in i.operands[:2]:
            t = vt(v)
            if t is not None and not is_ptr(t):
                bad("memcpy dst/src must be pointers")
        t = vt(i.operands[2], IntType(64))
        if t is not None and not is_int(t):
            bad("memcpy length must be an integer")
    elif op == "symbolic_intrinsic":
        if not is_scalar(i.type):
            bad("symbolic_intrinsic needs a scalar type")
    elif op == "alloca":
        if isinstance(i.type, VoidType):
            bad("alloca of void")
    elif op == "assert_intrinsic":
        for name in mexpr.expr_locals(i.expr):
            if name not in env:
                pass  # reported by the dominance check
    return out
