"""Concrete reference interpreter for mini-IR modules.

Used as a test oracle: it shares no evaluation code with the symbolic engine,
only the naming conventions for inputs (symbol names, cell names, addresses).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Optional

from ..facts import value_id
from ..mir.cfg import natural_loops
from ..mir.expr import EBin, EBool, ECall, EConst, EName, ENot, EVar
from ..mir.ir import (ArrayType, Const, Field, GlobalRef, INTRINSICS, IntType, Local, ModuleIR,
                      NullConst, PtrType, StructType, SymbolicInit, abstract_path, path_str,
                      path_type_offset, scalar_cells, type_size)
from ..vulnrules.templates import smram_condition
from .engine import global_symbol, next_address

DEFAULT_PTR_BASE = 0x7000_0000


class Fault(Exception):
    def __init__(self, kind: str, iid: str):
        super().__init__(f"{kind} at {iid}")
        self.kind = kind
        self.iid = iid


class _Stop(Exception):
    def __init__(self, status: str):
        super().__init__(status)
        self.status = status


@dataclass(frozen=True)
class CPtr:
    obj: int
    path: tuple = ()


@dataclass
class CObj:
    site: str
    type: object
    addr: int
    cells: dict = field(default_factory=dict)
    lazy: bool = False
    freed: bool = False
    dead: bool = False


@dataclass
class ConcreteResult:
    verdict: str  # violated | holds | unreached
    status: str  # assert | returned | fault | bound | depth
    fault: Optional[str] = None
    fault_at: Optional[str] = None
    trace: list = field(default_factory=list)
    observations: set = field(default_factory=set)
    ret: object = None


def _m(v: int, w: int) -> int:
    return v & ((1 << w) - 1)


def _s(v: int, w: int) -> int:
    v = _m(v, w)
    return v - (1 << w) if v >> (w - 1) else v


def _div(op: str, a: int, b: int, w: int) -> int:
    if op == "udiv":
        return _m(a, w) // _m(b, w)
    sa, sb = _s(a, w), _s(b, w)
    q = abs(sa) // abs(sb)
    return _m(-q if (sa < 0) != (sb < 0) else q, w)


_LOOPS: dict[int, tuple] = {}


def _loop_table(m: ModuleIR) -> dict:
    """Loop headers and bodies per function; modules are immutable, so cache by identity."""
    hit = _LOOPS.get(id(m))
    if hit is not None and hit[0]() is m:
        return hit[1]
    t = {f.name: {lp.header: lp.body for lp in natural_loops(f)} for f in m.functions if not f.is_external}
    _LOOPS[id(m)] = (weakref.ref(m), t)
    return t


class Interpreter:
    def __init__(self, m: ModuleIR, entry: str, inputs: dict, loop_bound: int = 3, call_depth: int = 8,
                 max_steps: int = 200_000, observe: bool = False):
        self.m = m
        self.entry = entry
        self.inputs = dict(inputs)
        self.loop_bound = loop_bound
        self.call_depth = call_depth
        self.max_steps = max_steps
        self.observe = observe
        self.structs = {s.name: s for s in m.structs}
        self.funcs = {f.name: f for f in m.functions}
        self.objs: list[CObj] = []
        self.counter = 0
        self.default_ptrs = 0
        self.by_addr: dict[int, int] = {}
        self.sym_counts: dict[str, int] = {}
        self.result = ConcreteResult("unreached", "returned")
        self.gobj: dict[str, int] = {}
        self.cur = None
        self.loops = _loop_table(m)

    # -- memory
    def new_obj(self, site: str, t, lazy=False, addr: Optional[int] = None) -> int:
        if addr is None:
            addr, self.counter = next_address(self.counter, type_size(t, self.structs))
        self.objs.append(CObj(site, t, addr, lazy=lazy))
        return len(self.objs) - 1

    def ptr_input(self, name: str, site: str, t) -> Optional[CPtr]:
        if name in self.inputs:
            a = _m(self.inputs[name], 64)
        else:
            a = DEFAULT_PTR_BASE + self.default_ptrs * 0x1000
            self.default_ptrs += 1
        if a == 0:
            return None
        key = (name, a)
        if key not in self.by_addr:
            self.by_addr[key] = self.new_obj(site, t, lazy=True, addr=a)
        return CPtr(self.by_addr[key])

    def input_value(self, name: str, t, site: str):
        k = self.sym_counts.get(name, 0) + 1
        self.sym_counts[name] = k
        actual = name if k == 1 else f"{name}#{k}"
        if isinstance(t, PtrType):
            return self.ptr_input(actual, site, t.pointee)
        return _m(self.inputs.get(actual, 0), t.width)

    def obj(self, p, iid: str) -> CObj:
        if p is None:
            raise Fault("null dereference", iid)
        o = self.objs[p.obj]
        if o.dead:
            raise Fault("dangling pointer", iid)
        if o.freed:
            raise Fault("use after free", iid)
        return o

    def addr(self, p) -> int:
        if p is None:
            return 0
        o = self.objs[p.obj]
        return _m(o.addr + path_type_offset(o.type, p.path, self.structs)[1], 64)

    def load(self, o: CObj, path: tuple, t, iid: str):
        ct = path_type_offset(o.type, path, self.structs)[0]
        if not isinstance(ct, (IntType, PtrType)):
            raise Fault("unmodeled access", iid)
        if path not in o.cells:
            if isinstance(ct, PtrType):
                o.cells[path] = (CPtr(self.new_obj(f"{o.site}{path_str(abstract_path(path))}*", ct.pointee,
                                                   lazy=True)) if o.lazy else None)
            else:
                o.cells[path] = 0
        return o.cells[path]

    # -- driver
    def run(self) -> ConcreteResult:
        for g in self.m.globals:
            oid = self.new_obj(f"@{g.name}", g.type)
            self.gobj[g.name] = oid
            o = self.objs[oid]
            cells = scalar_cells(g.type, self.structs)
            if isinstance(g.init, SymbolicInit):
                for path, t, _ in cells:
                    name = global_symbol(g.name, path)
                    if isinstance(t, PtrType):
                        o.cells[path] = self.ptr_input(name, f"@{g.name}{path_str(abstract_path(path))}*",
                                                       t.pointee)
                    else:
                        w = g.init.width or t.width
                        o.cells[path] = _m(_m(self.inputs.get(name, 0), w), t.width)
            elif isinstance(g.init, int):
                path, t, _ = cells[0]
                o.cells[path] = _m(g.init, t.width) if isinstance(t, IntType) else None
            elif isinstance(g.init, tuple):
                for (path, t, _), v in zip(cells, g.init):
                    o.cells[path] = _m(v, t.width) if isinstance(t, IntType) else None
        self.regions = {}
        for r in self.m.regions:
            base = self.inputs.get(f"base({r.name})", 0) if isinstance(r.base, SymbolicInit) else r.base
            size = self.inputs.get(f"size({r.name})", 0) if isinstance(r.size, SymbolicInit) else r.size
            self.regions[r.name] = (_m(base, 64), _m(size, 64))
        f = self.funcs[self.entry]
        args = []
        for pname, pt in f.params:
            if isinstance(pt, PtrType):
                args.append(CPtr(self.new_obj(f"param:{f.name}:%{pname}", pt.pointee, lazy=True)))
            else:
                args.append(_m(self.inputs.get(pname, 0), pt.width))
        try:
            self.result.ret = self.call_function(f, args, 1)
            self.result.status = "returned"
        except Fault as exc:
            self.result.status, self.result.fault, self.result.fault_at = "fault", exc.kind, exc.iid
        except _Stop as exc:
            self.result.status = exc.status
        return self.result

    def call_function(self, f, args, depth: int):
        env = {p: a for (p, _), a in zip(f.params, args)}
        allocas = []
        loops = self.loops[f.name]
        counts: dict[str, int] = {}
        prev, label = None, f.entry.label
        try:
            while True:
                if label in loops:
                    counts[label] = counts.get(label, 1) + 1 if prev in loops[label] else 1
                    blk = f.block(label)
                    bound = blk.bound if blk.bound is not None else self.loop_bound
                    if counts[label] > bound + 1:
                        raise _Stop("bound")
                block = f.block(label)
                incoming = {}
                body = []
                for i in block.instructions:
                    if i.opcode == "phi" and not body:
                        incoming[i.result] = self.val(env, i.operands[i.labels.index(prev)], i.type)
                    else:
                        body.append(i)
                for name, v in incoming.items():
                    self.note(f, name, v)
                env.update(incoming)
                nxt = None
                for i in block.instructions[len(incoming):]:
                    self.result.trace.append(i.id)
                    if len(self.result.trace) > self.max_steps:
                        raise _Stop("bound")
                    out = self.exec(f, env, i, depth, allocas)
                    if out is not None:
                        kind, payload = out
                        if kind == "ret":
                            return payload
                        nxt = payload
                        break
                prev, label = label, nxt
        finally:
            for oid in allocas:
                self.objs[oid].dead = True

    def note(self, f, name: str, v) -> None:
        if self.observe and isinstance(v, CPtr):
            o = self.objs[v.obj]
            self.result.observations.add((value_id(self.m, f.name, Local(name)), o.site, abstract_path(v.path)))

    def val(self, env, v, t=None):
        if isinstance(v, Local):
            return env[v.name]
        if isinstance(v, GlobalRef):
            return CPtr(self.gobj[v.name])
        if isinstance(v, NullConst):
            return None
        if isinstance(v, Const):
            if isinstance(t, PtrType):
                return None
            return _m(v.value, t.width if isinstance(t, IntType) else 64)
        raise Fault("unmodeled operand", str(v))

    def exec(self, f, env, i, depth, allocas):
        op = i.opcode
        res = None
        if op == "alloca":
            oid = self.new_obj(f"alloca:{i.id}", i.type)
            allocas.append(oid)
            res = CPtr(oid)
        elif op == "load":
            p = self.val(env, i.operands[0])
            res = self.load(self.obj(p, i.id), p.path, i.type, i.id)
        elif op == "store":
            v = self.val(env, i.operands[0], i.type)
            p = self.val(env, i.operands[1])
            o = self.obj(p, i.id)
            ct = path_type_offset(o.type, p.path, self.structs)[0]
            if not isinstance(ct, (IntType, PtrType)):
                raise Fault("unmodeled access", i.id)
            o.cells[p.path] = v
        elif op == "gep":
            p = self.val(env, i.operands[0])
            if p is None:
                raise Fault("null pointer arithmetic", i.id)
            o = self.objs[p.obj]
            if o.dead:
                raise Fault("dangling pointer", i.id)
            path = p.path
            for sel in i.operands[1:]:
                t = path_type_offset(o.type, path, self.structs)[0]
                if isinstance(sel, Field):
                    if not isinstance(t, StructType):
                        raise Fault("unmodeled access", i.id)
                    path = path + (sel.name,)
                    continue
                if not isinstance(t, ArrayType):
                    raise Fault("unmodeled access", i.id)
                if isinstance(sel, Const):
                    k = sel.value
                else:
                    k = _s(env[sel.name], self.width_of(f, sel.name))
                if not 0 <= k < t.length:
                    raise Fault("index out of range", i.id)
                path = path + (k,)
            res = CPtr(p.obj, path)
        elif op in ("add", "sub", "mul"):
            a, b = (self.val(env, x, i.type) for x in i.operands)
            w = i.type.width
            res = _m(a + b if op == "add" else a - b if op == "sub" else a * b, w)
        elif op in ("udiv", "sdiv"):
            a, b = (self.val(env, x, i.type) for x in i.operands)
            if b == 0:
                raise Fault("division by zero", i.id)
            res = _div(op, a, b, i.type.width)
        elif op == "icmp":
            a, b = (self.val(env, x, i.type) for x in i.operands)
            w = 64 if isinstance(i.type, PtrType) else i.type.width
            if isinstance(i.type, PtrType) or isinstance(a, CPtr) or isinstance(b, CPtr) or a is None or b is None:
                a = self.addr(a) if not isinstance(a, int) else a
                b = self.addr(b) if not isinstance(b, int) else b
            res = int(_icmp(i.pred, a, b, w))
        elif op == "zext":
            res = self.val(env, i.operands[0], IntType(int(i.pred[1:])))
        elif op == "trunc":
            res = _m(self.val(env, i.operands[0], IntType(int(i.pred[1:]))), i.type.width)
        elif op == "br":
            return ("br", i.labels[0])
        elif op == "condbr":
            c = self.val(env, i.operands[0], IntType(1))
            return ("br", i.labels[0] if c else i.labels[1])
        elif op == "ret":
            return ("ret", self.val(env, i.operands[0], f.ret_type) if i.operands else None)
        elif op == "call":
            res = self.call(f, env, i, depth)
        elif op == "free":
            p = self.val(env, i.operands[0])
            if p is not None:
                self.obj(p, i.id).freed = True
        elif op == "memcpy":
            self.memcpy(env, i)
        elif op == "symbolic_intrinsic":
            res = self.input_value(i.sym_name, i.type, f"sym:{i.id}")
        elif op == "assert_intrinsic":
            self.cur = f
            ok = self.cond(env, i.expr)
            self.result.verdict = "holds" if ok else "violated"
            raise _Stop("assert")
        else:
            raise Fault("unmodeled opcode", i.id)
        if i.result is not None:
            env[i.result] = res
            self.note(f, i.result, res)
        return None

    def width_of(self, f, name: str) -> int:
        for pname, pt in f.params:
            if pname == name:
                return pt.width
        for i in f.instructions():
            if i.result == name:
                t = i.result_type
                return t.width if isinstance(t, IntType) else 64
        return 64

    def call(self, f, env, i, depth):
        callee = self.funcs.get(i.callee)
        if callee is None and i.callee in INTRINSICS:
            p = self.val(env, i.operands[0])
            n = self.val(env, i.operands[1], IntType(64))
            scope = {"stase.p": p, "stase.n": (n, 64)}
            self.cur = f
            return int(all(self.cond(env, smram_condition(EVar("%", "stase.p"), EVar("%", "stase.n"), r.name),
                                     scope) for r in self.m.regions))
        params = callee.params if callee else ()
        args = [self.val(env, a, pt) for a, (_, pt) in zip(i.operands, params)]
        if callee is None or callee.is_external:
            if i.result is None:
                return None
            return self.input_value(f"ret:@{i.callee}", callee.ret_type, f"stub:{i.id}")
        if depth >= self.call_depth:
            if i.result is None:
                return None
            return self.input_value(f"depth:@{i.callee}", callee.ret_type, f"stub:{i.id}")
        return self.call_function(callee, args, depth + 1)

    def memcpy(self, env, i):
        dp = self.val(env, i.operands[0])
        sp = self.val(env, i.operands[1])
        n = self.val(env, i.operands[2], IntType(64))
        do, so = self.obj(dp, i.id), self.obj(sp, i.id)
        doff = path_type_offset(do.type, dp.path, self.structs)[1]
        soff = path_type_offset(so.type, sp.path, self.structs)[1]
        limit = min(type_size(do.type, self.structs) - doff, type_size(so.type, self.structs) - soff)
        if n > limit:
            raise Fault("memcpy out of bounds", i.id)
        dst_at = {off: (path, t) for path, t, off in scalar_cells(do.type, self.structs)}
        writes = []
        for path, t, off in scalar_cells(so.type, self.structs):
            rel = off - soff
            sz = type_size(t, self.structs)
            if rel < 0 or rel + sz > n:
                continue
            dpath, dt = dst_at[doff + rel]
            v = self.load(so, path, t, i.id)
            if isinstance(dt, IntType) and isinstance(v, int):
                v = _m(v, dt.width)
            writes.append((dpath, v))
        for dpath, v in writes:
            do.cells[dpath] = v

    # -- assertion language
    def cond(self, env, e, scope=None) -> bool:
        v = self.ev(env, e, scope or {})
        return bool(v[0] if isinstance(v, tuple) else v)

    def ev(self, env, e, scope):
        """Returns (value, width) pairs; bare integers are (value, None)."""
        if isinstance(e, EConst):
            return (e.value, None)
        if isinstance(e, EBool):
            return (int(e.value), 1)
        if isinstance(e, EVar):
            if e.sigil == "%" and e.name in scope:
                v = scope[e.name]
                return v
            if e.sigil == "@":
                return CPtr(self.gobj[e.name])
            v = env[e.name]
            if v is None or isinstance(v, CPtr):
                return v
            return (v, self.width_of(self.cur, e.name))
        if isinstance(e, ENot):
            return (int(not self._truth(self.ev(env, e.arg, scope))), 1)
        if isinstance(e, ECall):
            return self.ev_call(env, e, scope)
        if isinstance(e, EBin):
            if e.op == "&&":
                return (int(self._truth(self.ev(env, e.left, scope)) and self._truth(self.ev(env, e.right, scope))), 1)
            if e.op == "||":
                return (int(self._truth(self.ev(env, e.left, scope)) or self._truth(self.ev(env, e.right, scope))), 1)
            return _binop(e.op, self.ev(env, e.left, scope), self.ev(env, e.right, scope))
        raise Fault("unmodeled expression", repr(e))

    @staticmethod
    def _truth(v) -> bool:
        return bool(v[0])

    def ev_call(self, env, e, scope):
        if e.fn in ("base", "size"):
            name = e.args[0].name if isinstance(e.args[0], EName) else None
            b, s = self.regions[name]
            return (b if e.fn == "base" else s, 64)
        p = self.ev(env, e.args[0], scope)
        if e.fn == "addr":
            if p is None or isinstance(p, CPtr):
                return (self.addr(p), 64)
            return (_m(p[0], 64), 64)
        if not isinstance(p, CPtr):
            raise Fault("unmodeled expression", e.fn)
        o = self.objs[p.obj]
        if e.fn == "freed":
            return (int(o.freed), 1)
        t, off = path_type_offset(o.type, p.path, self.structs)
        if e.fn == "offset":
            return (off, 64)
        if e.fn == "objsize":
            return (type_size(o.type, self.structs), 64)
        if e.fn == "lenof":
            return (t.length, None)
        raise Fault("unmodeled expression", e.fn)


def _icmp(pred: str, a: int, b: int, w: int) -> bool:
    if pred in ("slt", "sle", "sgt", "sge"):
        a, b = _s(a, w), _s(b, w)
    else:
        a, b = _m(a, w), _m(b, w)
    return {"eq": a == b, "ne": a != b, "ult": a < b, "ule": a <= b, "ugt": a > b, "uge": a >= b,
            "slt": a < b, "sle": a <= b, "sgt": a > b, "sge": a >= b}[pred]


_SIGNED = {"<s", "<=s", ">s", ">=s"}


def _binop(op: str, x, y):
    (a, wa), (b, wb) = x, y
    signed = op in _SIGNED
    cmp = op in ("==", "!=", "<", "<=", ">", ">=") or signed
    if wa is None and wb is None:
        if cmp:
            return (int(_cmp(op.rstrip("s"), a, b)), 1)
        return ({"+": a + b, "-": a - b, "*": a * b, "/": a // b if b else -1}[op], None)
    if wa is None or wb is None:
        k, w = (a, wb) if wa is None else (b, wa)
        lo, hi = (-(1 << (w - 1)), 1 << (w - 1)) if signed else (0, 1 << w)
        if cmp and not lo <= k < hi:
            w = 64
        wa = wb = w
    w = max(wa, wb)
    if signed:
        a, b = _s(a, wa), _s(b, wb)
        a, b = _s(a, w), _s(b, w)
    else:
        a, b = _m(a, wa), _m(b, wb)
    if cmp:
        return (int(_cmp(op.rstrip("s"), a, b)), 1)
    if op == "/":
        return (_m(a // b, w) if b else _m(-1, w), w)
    return (_m({"+": a + b, "-": a - b, "*": a * b}[op], w), w)


def _cmp(op: str, a: int, b: int) -> bool:
    return {"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def interpret_concrete(m: ModuleIR, entry: str, inputs: Optional[dict] = None, loop_bound: int = 3,
                       call_depth: int = 8, observe: bool = False, max_steps: int = 200_000) -> ConcreteResult:
    return Interpreter(m, entry, inputs or {}, loop_bound, call_depth, max_steps, observe).run()


__all__ = ["ConcreteResult", "Fault", "Interpreter", "interpret_concrete"]
