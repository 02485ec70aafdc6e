"""Canonical text rendering of :class:`ModuleIR`.

Struct declarations come first, then globals and regions, then functions in
their original order. Every instruction carries an explicit ``!loc`` so that
``parse_module(pretty_print(m)) == m``.
"""

from __future__ import annotations

from .expr import format_expr
from .ir import ARITH, GlobalDecl, Instruction, ModuleIR, RegionDecl, SourceLoc, VoidType


def _loc(loc: SourceLoc) -> str:
    return f'!loc("{loc.file}", {loc.line}, {loc.col})'


def _init(v) -> str:
    if isinstance(v, tuple):
        return "{" + ", ".join(str(x) for x in v) + "}"
    return str(v)


def format_instruction(i: Instruction) -> str:
    op = i.opcode
    ops = [str(o) for o in i.operands]
    lhs = f"%{i.result} = " if i.result else ""
    if op == "alloca":
        body = f"alloca {i.type}"
    elif op == "load":
        body = f"load {i.type}, {ops[0]}"
    elif op == "store":
        body = f"store {i.type} {ops[0]}, {ops[1]}"
    elif op == "gep":
        body = "gep " + ", ".join(ops)
    elif op in ARITH:
        body = f"{op} {i.type} {ops[0]}, {ops[1]}"
    elif op == "icmp":
        body = f"icmp {i.pred} {i.type} {ops[0]}, {ops[1]}"
    elif op in ("zext", "trunc"):
        body = f"{op} {i.pred} {ops[0]} to {i.type}"
    elif op == "phi":
        pairs = ", ".join(f"[{v}, {l}]" for v, l in zip(ops, i.labels))
        body = f"phi {i.type} {pairs}"
    elif op == "br":
        body = f"br {i.labels[0]}"
    elif op == "condbr":
        body = f"condbr {ops[0]}, {i.labels[0]}, {i.labels[1]}"
    elif op == "call":
        body = f"call @{i.callee}(" + ", ".join(ops) + ")"
    elif op == "ret":
        if not ops:
            body = "ret"
        elif isinstance(i.type, VoidType):
            body = f"ret {ops[0]}"
        else:
            body = f"ret {i.type} {ops[0]}"
    elif op == "free":
        body = f"free {ops[0]}"
    elif op == "memcpy":
        body = "memcpy " + ", ".join(ops)
    elif op == "assert_intrinsic":
        body = f"assert_intrinsic {format_expr(i.expr)}"
    elif op == "symbolic_intrinsic":
        body = f'symbolic_intrinsic {i.type} "{i.sym_name}"'
    else:  # pragma: no cover - opcode set is closed
        raise ValueError(op)
    return f"{lhs}{body} {_loc(i.loc)}"


def _global(g: GlobalDecl) -> str:
    init = "" if g.init is None else f" = {_init(g.init)}"
    return f"global @{g.name} : {g.type}{init} {_loc(g.loc)}"


def _region(r: RegionDecl) -> str:
    return f"region {r.name} base={_init(r.base)} size={_init(r.size)} {_loc(r.loc)}"


def pretty_print(m: ModuleIR) -> str:
    lines = [f"module {m.name}", f'source "{m.source_file}"', ""]
    for s in m.structs:
        fields = ", ".join(f"{n}: {t}" for n, t in s.fields)
        lines.append(f"struct {s.name} {{ {fields} }}")
    if m.structs:
        lines.append("")
    for g in m.globals:
        lines.append(_global(g))
    for r in m.regions:
        lines.append(_region(r))
    if m.globals or m.regions:
        lines.append("")
    for f in m.functions:
        if f.is_external:
            params = ", ".join(str(t) for _, t in f.params)
            lines.append(f"extern @{f.name}({params}) -> {f.ret_type} {_loc(f.loc)}")
            continue
        params = ", ".join(f"%{n}: {t}" for n, t in f.params)
        lines.append(f"fn @{f.name}({params}) -> {f.ret_type} {_loc(f.loc)} {{")
        for b in f.blocks:
            bound = f" !bound({b.bound})" if b.bound is not None else ""
            lines.append(f"{b.label}:{bound}")
            for i in b.instructions:
                lines.append("  " + format_instruction(i))
        lines.append("}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
