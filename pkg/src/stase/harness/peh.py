"""Path exploration harness generation and IR instrumentation producing Θ."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..facts import detect_loops
from ..mir.cfg import call_graph, natural_loops
from ..mir.expr import format_expr, parse_expr
from ..mir.ir import (ArrayType, BasicBlock, Const, Field, FunctionDef, GlobalRef, Instruction,
                      Local, ModuleIR, PtrType, StructType, TypeDesc, VOID, is_scalar)
from ..mir.parser import parse_module
from ..mir.printer import pretty_print
from ..slicer.vd import InputRef, VulnerabilityDescription

DEFAULT_LOOP_BOUND = 3
DEFAULT_CALL_DEPTH = 8


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolicVar:
    """One symbolic input written by the prologue.

    ``hops`` are concrete selector paths (array indices as ints), one per
    pointer dereference starting at the root parameter or global.
    """

    symbol: str
    type: str
    kind: str
    root: str
    base: str
    hops: tuple = ()

    def to_json(self) -> dict:
        return {"symbol": self.symbol, "type": self.type, "kind": self.kind, "root": self.root,
                "base": self.base, "hops": [list(h) for h in self.hops]}

    @classmethod
    def from_json(cls, d: dict) -> "SymbolicVar":
        return cls(d["symbol"], d["type"], d["kind"], d["root"], d["base"],
                   tuple(tuple(h) for h in d["hops"]))


@dataclass
class PathExplorationHarness:
    id: str
    entry: str
    symbolic_vars: list[SymbolicVar]
    stubs: tuple
    target: str
    assertion: str
    helpers: tuple
    location: str
    loop_bounds: dict[str, int] = field(default_factory=dict)
    call_depth: int = DEFAULT_CALL_DEPTH
    default_loop_bound: int = DEFAULT_LOOP_BOUND

    def to_json(self) -> dict:
        return {
            "id": self.id, "entry": self.entry,
            "symbolic_vars": [v.to_json() for v in self.symbolic_vars],
            "stubs": list(self.stubs), "target": self.target, "assertion": self.assertion,
            "helpers": [[n, list(ops)] for n, ops in self.helpers], "location": self.location,
            "loop_bounds": dict(sorted(self.loop_bounds.items())), "call_depth": self.call_depth,
            "default_loop_bound": self.default_loop_bound,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PathExplorationHarness":
        return cls(d["id"], d["entry"], [SymbolicVar.from_json(v) for v in d["symbolic_vars"]],
                   tuple(d["stubs"]), d["target"], d["assertion"],
                   tuple((n, tuple(ops)) for n, ops in d["helpers"]), d["location"],
                   dict(d["loop_bounds"]), d["call_depth"], d.get("default_loop_bound", DEFAULT_LOOP_BOUND))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class InstrumentedSegment:
    module: ModuleIR
    text: str
    provenance: str
    entry: str
    target: str  # id of K inside Θ
    assertion: str  # id of the assert_intrinsic inside Θ
    digest: str


# --------------------------------------------------------------------------- PEH


def _structs(m: ModuleIR):
    return {s.name: s for s in m.structs}


def _step(t: Optional[TypeDesc], sel, structs) -> Optional[TypeDesc]:
    if t is None:
        return None
    if sel == "[]" or isinstance(sel, int):
        return t.elem if isinstance(t, ArrayType) else None
    if isinstance(t, StructType) and t.name in structs:
        return structs[t.name].field_type(sel)
    return None


def _expand_hop(t: Optional[TypeDesc], path: tuple, structs) -> list[tuple[tuple, TypeDesc]]:
    """Concrete selector paths for an abstract path (``[]`` expands to every index)."""
    out = [((), t)]
    for sel in path:
        nxt = []
        for p, tt in out:
            if tt is None:
                return []
            if sel == "[]":
                if not isinstance(tt, ArrayType):
                    return []
                nxt.extend((p + (k,), tt.elem) for k in range(tt.length))
            else:
                st = _step(tt, sel, structs)
                if st is None:
                    return []
                nxt.append((p + (sel,), st))
        out = nxt
    return out


def _render(root: str, base: str, hops: tuple) -> str:
    s = base
    for j, h in enumerate(hops):
        sels = "".join(f"[{x}]" if isinstance(x, int) else f".{x}" for x in h)
        if j == 0 and root == "global":
            s += sels
        elif h == ():
            s = "*" + s
        else:
            s += "->" + sels.lstrip(".")
    return s


def _scalar_leaves(t: TypeDesc, structs) -> list[tuple[tuple, TypeDesc]]:
    if is_scalar(t):
        return [((), t)]
    out = []
    if isinstance(t, ArrayType):
        for k in range(t.length):
            out += [((k,) + p, tt) for p, tt in _scalar_leaves(t.elem, structs)]
    elif isinstance(t, StructType) and t.name in structs:
        for fname, ftype in structs[t.name].fields:
            out += [((fname,) + p, tt) for p, tt in _scalar_leaves(ftype, structs)]
    return out


def symbolic_vars_for(ref: InputRef, m: ModuleIR, entry: str) -> list[SymbolicVar]:
    structs = _structs(m)
    f = m.function(entry)
    if ref.kind == "int":
        t = f.param_type(ref.base)
        return [SymbolicVar(ref.base, str(t), "int", "param", ref.base, ())]
    if ref.kind == "addr":
        t = f.param_type(ref.base)
        return [SymbolicVar(ref.base, str(t), "addr", "param", ref.base, ())]
    if ref.root == "param":
        pt = f.param_type(ref.base)
        t = pt.pointee if isinstance(pt, PtrType) else None
    else:
        t = m.global_decl(ref.base).type
    chains: list[tuple[tuple, Optional[TypeDesc]]] = [((), t)]
    for j, hop in enumerate(ref.hops):
        nxt = []
        for hops, tt in chains:
            for p, leaf in _expand_hop(tt, hop, structs):
                if j < len(ref.hops) - 1:
                    if not isinstance(leaf, PtrType):
                        continue
                    nxt.append((hops + (p,), leaf.pointee))
                else:
                    nxt.append((hops + (p,), leaf))
        chains = nxt
    out = []
    for hops, leaf in chains:
        if leaf is None:
            continue
        # unresolvable leaf fields fall back to every scalar cell of the object
        for sub, st in _scalar_leaves(leaf, structs):
            full = hops[:-1] + (hops[-1] + sub,)
            out.append(SymbolicVar(_render(ref.root, ref.base, full), str(st), "cell", ref.root,
                                   ref.base, full))
    return out


def generate_peh(vd: VulnerabilityDescription, m: ModuleIR, loop_bound: int = DEFAULT_LOOP_BOUND,
                 call_depth: int = DEFAULT_CALL_DEPTH) -> PathExplorationHarness:
    if not m.has_function(vd.E):
        raise HarnessError(f"unknown entry function @{vd.E}")
    try:
        m.instruction(vd.K)
    except KeyError:
        raise HarnessError(f"unknown instruction {vd.K}") from None
    for s in vd.U_functions:
        if not m.has_function(s):
            raise HarnessError(f"unknown stub function @{s}")
    syms: list[SymbolicVar] = []
    seen = set()
    for ref in vd.I:
        for v in symbolic_vars_for(ref, m, vd.E):
            if v.symbol not in seen:
                seen.add(v.symbol)
                syms.append(v)
    cg = call_graph(m)
    import networkx as nx

    reach = {vd.E} | (nx.descendants(cg, vd.E) if vd.E in cg else set())
    _, const_bounds = detect_loops(m)
    const = dict(const_bounds)
    bounds = {}
    for f in m.functions:
        if f.is_external or f.name not in reach or f.name in vd.U_functions:
            continue
        for loop in natural_loops(f):
            hid = f"{m.func_id(f.name)}#{loop.header}"
            bounds[f"{f.name}#{loop.header}"] = int(const.get(hid, loop_bound))
    return PathExplorationHarness(
        id=vd.id, entry=vd.E, symbolic_vars=syms, stubs=tuple(vd.U_functions), target=vd.K,
        assertion=vd.assertion, helpers=tuple(vd.helpers), location=vd.L, loop_bounds=bounds,
        call_depth=call_depth, default_loop_bound=loop_bound)


# --------------------------------------------------------------------------- instrumentation


def _loc_of(f: FunctionDef):
    return f.entry.instructions[0].loc if f.entry.instructions else f.loc


def _value(text: str):
    if text.startswith("%"):
        return Local(text[1:])
    if text.startswith("@"):
        return GlobalRef(text[1:])
    if text.startswith("."):
        return Field(text[1:])
    return Const(int(text, 0))


def _gep_ops(sels: tuple) -> list:
    return [Const(s) if isinstance(s, int) else Field(s) for s in sels]


def _prologue(m: ModuleIR, f: FunctionDef, peh: PathExplorationHarness):
    """Prologue instructions plus the parameter renames they introduce."""
    structs = _structs(m)
    loc = _loc_of(f)
    ins: list[Instruction] = []
    renames: dict[str, str] = {}
    n = 0

    def fresh(prefix):
        nonlocal n
        n += 1
        return f"stase.{prefix}.{n}"

    def mk(opcode, result=None, **kw):
        ins.append(Instruction("?", opcode, result=result, loc=loc, **kw))
        return Local(result) if result else None

    # parameters replaced by symbols first, so cell writes go through the new pointer
    for v in peh.symbolic_vars:
        if v.kind in ("int", "addr"):
            t = f.param_type(v.base)
            name = fresh("sym")
            mk("symbolic_intrinsic", name, type=t, sym_name=v.symbol if v.kind == "int" else "&" + v.base)
            renames[v.base] = name
    for v in peh.symbolic_vars:
        if v.kind != "cell":
            continue
        if v.root == "param":
            cur = Local(renames.get(v.base, v.base))
            t = f.param_type(v.base).pointee
        else:
            cur = GlobalRef(v.base)
            t = m.global_decl(v.base).type
        for j, hop in enumerate(v.hops):
            leaf = t
            for sel in hop:
                leaf = _step(leaf, sel, structs)
            if hop:
                cur = mk("gep", fresh("ptr"), operands=tuple([cur] + _gep_ops(hop)))
            if j < len(v.hops) - 1:
                cur = mk("load", fresh("ptr"), operands=(cur,), type=leaf)
                t = leaf.pointee
            else:
                s = mk("symbolic_intrinsic", fresh("sym"), type=leaf, sym_name=v.symbol)
                mk("store", operands=(s, cur), type=leaf)
    return ins, renames


def _rename(i: Instruction, renames: dict[str, str]) -> Instruction:
    if not renames:
        return i
    ops = tuple(Local(renames[o.name]) if isinstance(o, Local) and o.name in renames else o
                for o in i.operands)
    expr = i.expr
    if expr is not None:
        from ..mir.expr import EVar, substitute

        expr = substitute(expr, {k: EVar("%", v) for k, v in renames.items()})
    return replace(i, operands=ops, expr=expr)


def _stub_body(f: FunctionDef) -> tuple:
    loc = _loc_of(f)
    if f.ret_type == VOID:
        body = (Instruction("?", "ret", loc=loc),)
    else:
        body = (Instruction("?", "symbolic_intrinsic", result="stase.ret", type=f.ret_type, loc=loc,
                            sym_name=f"ret:@{f.name}"),
                Instruction("?", "ret", operands=(Local("stase.ret"),), type=f.ret_type, loc=loc))
    return (BasicBlock("entry", body),)


def instrument(m: ModuleIR, peh: PathExplorationHarness) -> InstrumentedSegment:
    """Rewrite ``m`` into Θ: stubs, symbolic prologue, one assertion before K, loop bounds."""
    for f in m.functions:
        for i in f.instructions():
            if i.opcode == "assert_intrinsic":
                raise HarnessError(f"module already carries an assertion ({i.id}); "
                                   "instrumenting twice is not allowed")
    try:
        kf, kb, kpos = m.locate(peh.target)
    except KeyError:
        raise HarnessError(f"injection point {peh.target} not found") from None
    if not m.has_function(peh.entry):
        raise HarnessError(f"unknown entry function @{peh.entry}")
    k = kb.instructions[kpos]
    expr = parse_expr(peh.assertion)
    helper_ins = tuple(
        Instruction("?", "gep", operands=tuple(_value(o) for o in ops), result=name, loc=k.loc)
        for name, ops in peh.helpers)
    assert_ins = Instruction("?", "assert_intrinsic", loc=k.loc, expr=expr)
    functions = []
    for f in m.functions:
        if f.is_external:
            functions.append(f)
            continue
        if f.name in peh.stubs:
            if f.name == peh.entry or f.name == kf.name:
                raise HarnessError(f"cannot stub @{f.name}: it holds the entry or the target")
            functions.append(replace(f, blocks=_stub_body(f)))
            continue
        renames = {}
        prologue = ()
        if f.name == peh.entry:
            prologue, renames = _prologue(m, f, peh)
        blocks = []
        for b in f.blocks:
            ins = list(b.instructions)
            if f.name == kf.name and b.label == kb.label:
                ins = ins[:kpos] + list(helper_ins) + [assert_ins] + ins[kpos:]
            ins = [_rename(i, renames) for i in ins]
            if b is f.entry and prologue:
                ins = list(prologue) + ins
            bound = peh.loop_bounds.get(f"{f.name}#{b.label}", b.bound)
            blocks.append(BasicBlock(b.label, tuple(ins), bound))
        functions.append(replace(f, blocks=tuple(blocks)))
    theta = replace(m, functions=tuple(functions))
    text = pretty_print(theta)
    from ..mir.parser import MirError

    try:
        parsed = parse_module(text, file=m.source_file, name=m.name)
    except MirError as exc:
        raise HarnessError(f"instrumented module does not validate:\n{exc}") from exc
    target = assertion = None
    for f in parsed.functions:
        for b in f.blocks:
            for j, i in enumerate(b.instructions):
                if i.opcode == "assert_intrinsic":
                    assertion, target = i.id, b.instructions[j + 1].id
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return InstrumentedSegment(parsed, text, peh.id, peh.entry, target, assertion, digest)


def artifact_stem(vd_id: str) -> str:
    return vd_id.replace("/", "_")


def write_harness(out_dir, peh: PathExplorationHarness, seg: InstrumentedSegment) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = artifact_stem(peh.id)
    theta = out / f"θ_{stem}.mir"
    theta.write_text(seg.text, encoding="utf-8")
    data = peh.to_json()
    data["theta"] = {"file": theta.name, "target": seg.target, "assertion": seg.assertion,
                     "digest": seg.digest}
    manifest = out / f"peh_{stem}.json"
    manifest.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
    return theta, manifest


def read_harness(manifest_path) -> tuple[PathExplorationHarness, InstrumentedSegment]:
    p = Path(manifest_path)
    data = json.loads(p.read_text(encoding="utf-8"))
    peh = PathExplorationHarness.from_json(data)
    th = data["theta"]
    text = (p.parent / th["file"]).read_text(encoding="utf-8")
    mod = parse_module(text, file="theta")
    return peh, InstrumentedSegment(mod, text, peh.id, peh.entry, th["target"], th["assertion"],
                                    th["digest"])
