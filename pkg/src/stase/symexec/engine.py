"""Guided depth-first symbolic execution of an instrumented segment Θ."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from ..mir.cfg import natural_loops
from ..mir.expr import EBin, EBool, ECall, EConst, EName, ENot, EVar
from ..mir.ir import (ArrayType, Const, Field, FunctionDef, GlobalRef, INTRINSICS, Instruction,
                      IntType, Local, ModuleIR, NullConst, PtrType, StructType, SymbolicInit,
                      TypeDesc, VOID, is_scalar, path_type_offset, scalar_cells, type_size)
from ..vulnrules.templates import smram_condition
from . import expr as E
from .expr import SymExpr
from .solver import Solver, SolverConfig

log = logging.getLogger(__name__)

ADDR_BASE = 0x1000_0000
ADDR_STEP = 0x1000


class EngineError(Exception):
    """Resource ceiling or malformed segment."""


class UnmodeledAccess(Exception):
    pass


def cell_suffix(path: tuple) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path)


def global_symbol(gname: str, path: tuple) -> str:
    return f"@{gname}{cell_suffix(path)}"


def next_address(counter: int, size: int) -> tuple[int, int]:
    """Concrete address for the ``counter``-th allocation and the next counter."""
    return ADDR_BASE + counter * ADDR_STEP, counter + max(1, -(-size // ADDR_STEP))


@dataclass(frozen=True)
class Ptr:
    obj: Optional[int]
    path: tuple = ()


NULL = Ptr(None, ())


@dataclass
class Obj:
    id: int
    site: str
    type: TypeDesc
    addr: SymExpr
    cells: dict
    lazy: bool = False
    maybe_null: bool = False
    freed: bool = False

    def copy(self) -> "Obj":
        return Obj(self.id, self.site, self.type, self.addr, dict(self.cells), self.lazy,
                   self.maybe_null, self.freed)


@dataclass
class Frame:
    func: FunctionDef
    block: str
    index: int
    locals: dict
    prev: Optional[str] = None
    loops: dict = field(default_factory=dict)
    ret_to: Optional[str] = None
    allocas: list = field(default_factory=list)

    def copy(self) -> "Frame":
        return Frame(self.func, self.block, self.index, dict(self.locals), self.prev, dict(self.loops),
                     self.ret_to, list(self.allocas))


@dataclass
class SymState:
    frames: list
    objects: dict
    pc: tuple
    fork_id: str
    counter: int = 0
    sym_counts: dict = field(default_factory=dict)
    next_obj: int = 0
    nonnull: frozenset = frozenset()

    def copy(self, fork_suffix: str) -> "SymState":
        return SymState([f.copy() for f in self.frames], {k: o.copy() for k, o in self.objects.items()},
                        self.pc, f"{self.fork_id}.{fork_suffix}", self.counter, dict(self.sym_counts),
                        self.next_obj, self.nonnull)

    @property
    def top(self) -> Frame:
        return self.frames[-1]

    @property
    def constraint(self) -> SymExpr:
        return E.and_(*self.pc)


@dataclass
class PathRecord:
    fork_id: str
    constraints: tuple  # path constraint conjuncts
    assertion: SymExpr
    model: dict
    violated: bool


@dataclass
class FaultRecord:
    fork_id: str
    kind: str
    instr: str
    constraints: tuple


@dataclass
class ExplorationResult:
    violations: list = field(default_factory=list)
    covered: list = field(default_factory=list)
    faults: list = field(default_factory=list)
    unknown: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    exhausted: bool = False
    smtlib: list = field(default_factory=list)

    @property
    def reached(self) -> bool:
        return bool(self.violations or self.covered or self.unknown)


@dataclass
class ExploreOptions:
    call_depth: int = 8
    loop_bound: int = 3
    max_steps: int = 2_000_000
    max_paths: int = 20_000
    solver: SolverConfig = field(default_factory=SolverConfig)


class _Done(Exception):
    """Internal: the current path terminated."""


class Explorer:
    def __init__(self, m: ModuleIR, entry: str, opts: Optional[ExploreOptions] = None,
                 solver: Optional[Solver] = None):
        self.m = m
        self.entry = entry
        self.opts = opts or ExploreOptions()
        self.solver = solver or Solver(self.opts.solver)
        self.structs = {s.name: s for s in m.structs}
        self.funcs = {f.name: f for f in m.functions}
        self.result = ExplorationResult()
        self.steps = 0
        self.paths = 0
        self.pruned = 0
        self.bound_cut = 0
        self.target = None
        for f in m.functions:
            for i in f.instructions():
                if i.opcode == "assert_intrinsic":
                    if self.target is not None:
                        raise EngineError("segment holds more than one assertion")
                    self.target = (f.name, i.id)
        self.loops = {}
        for f in m.functions:
            if not f.is_external:
                self.loops[f.name] = {lp.header: lp.body for lp in natural_loops(f)}
        self.live = self._reachability()
        self.regions = {}

    # ------------------------------------------------------------------ static guidance
    def _reachability(self) -> set[tuple[str, str]]:
        """(function, block) pairs from which the assertion can still be reached."""
        if self.target is None:
            return set()
        tf, tid = self.target
        g = nx.DiGraph()
        reaches_fn = {tf}
        changed = True
        calls: dict[tuple[str, str], set[str]] = {}
        for f in self.m.functions:
            if f.is_external:
                continue
            for b in f.blocks:
                g.add_node((f.name, b.label))
                for s in b.successors():
                    g.add_edge((f.name, b.label), (f.name, s))
                calls[(f.name, b.label)] = {i.callee for i in b.instructions
                                            if i.opcode == "call" and i.callee in self.funcs}
        while changed:
            changed = False
            seeds = {n for n, cs in calls.items() if cs & reaches_fn}
            seeds |= {(tf, self.m.locate(tid)[1].label)}
            live = set(seeds)
            for s in seeds:
                live |= nx.ancestors(g, s)
            for f in self.m.functions:
                if not f.is_external and f.name not in reaches_fn and (f.name, f.entry.label) in live:
                    reaches_fn.add(f.name)
                    changed = True
        return live

    def _is_live(self, st: SymState) -> bool:
        return any((fr.func.name, fr.block) in self.live for fr in st.frames)

    # ------------------------------------------------------------------ helpers
    def check(self, st: SymState, *extra: SymExpr):
        return self.solver.solve(E.and_(*st.pc, *extra))

    def alloc(self, st: SymState, site: str, t: TypeDesc, lazy=False, addr: Optional[SymExpr] = None) -> int:
        oid = st.next_obj
        st.next_obj += 1
        maybe_null = addr is not None
        if addr is None:
            a, st.counter = next_address(st.counter, type_size(t, self.structs))
            addr = E.const(a, 64)
        st.objects[oid] = Obj(oid, site, t, addr, {}, lazy, maybe_null)
        return oid

    def fresh_name(self, st: SymState, name: str) -> str:
        k = st.sym_counts.get(name, 0) + 1
        st.sym_counts[name] = k
        return name if k == 1 else f"{name}#{k}"

    def fresh_value(self, st: SymState, name: str, t: TypeDesc, site: str):
        actual = self.fresh_name(st, name)
        if isinstance(t, PtrType):
            return Ptr(self.alloc(st, site, t.pointee, lazy=True, addr=E.sym(actual, 64)), ())
        return E.sym(actual, t.width)

    def addr_of(self, st: SymState, p: Ptr) -> SymExpr:
        if p.obj is None:
            return E.const(0, 64)
        o = st.objects.get(p.obj)
        if o is None:
            return E.const(0, 64)
        _, off = path_type_offset(o.type, p.path, self.structs)
        return E.add(o.addr, E.const(off, 64))

    def type_at(self, o: Obj, path: tuple) -> TypeDesc:
        return path_type_offset(o.type, path, self.structs)[0]

    def fork_fault(self, st: SymState, cond_fault: SymExpr, kind: str, iid: str) -> bool:
        """Record a fault path if ``cond_fault`` is feasible; narrow ``st`` to its negation.

        Returns False when the non-faulting continuation is infeasible.
        """
        if cond_fault.is_false:
            return True
        if cond_fault.is_true:
            self.result.faults.append(FaultRecord(st.fork_id, kind, iid, st.pc))
            return False
        r = self.check(st, cond_fault)
        if not r.unsat:
            self.result.faults.append(FaultRecord(st.fork_id + ".f", kind, iid, st.pc + (cond_fault,)))
        ok = E.not_(cond_fault)
        r2 = self.check(st, ok)
        if r2.unsat:
            return False
        st.pc = st.pc + (ok,)
        return True

    def deref(self, st: SymState, p, iid: str) -> Obj:
        if not isinstance(p, Ptr) or p.obj is None:
            self.result.faults.append(FaultRecord(st.fork_id, "null dereference", iid, st.pc))
            raise _Done
        o = st.objects.get(p.obj)
        if o is None:
            self.result.faults.append(FaultRecord(st.fork_id, "dangling pointer", iid, st.pc))
            raise _Done
        if o.maybe_null and o.id not in st.nonnull:
            if not self.fork_fault(st, E.eq(o.addr, E.const(0, 64)), "null dereference", iid):
                raise _Done
            st.nonnull = st.nonnull | {o.id}
        if o.freed:
            self.result.faults.append(FaultRecord(st.fork_id, "use after free", iid, st.pc))
            raise _Done
        return o

    def read_cell(self, st: SymState, o: Obj, path: tuple, t: TypeDesc, iid: str):
        ct = self.type_at(o, path)
        if not is_scalar(ct) or (ct != t and not (isinstance(ct, PtrType) and isinstance(t, PtrType))):
            raise UnmodeledAccess(f"{iid}: load of {t} from a {ct} cell of {o.site}")
        if path in o.cells:
            return o.cells[path]
        if isinstance(ct, PtrType):
            if o.lazy:
                v = Ptr(self.alloc(st, f"{o.site}{_pstr(path)}*", ct.pointee, lazy=True), ())
            else:
                v = NULL
        else:
            v = E.const(0, ct.width)
        o.cells[path] = v
        return v

    def write_cell(self, o: Obj, path: tuple, t: TypeDesc, v, iid: str):
        ct = self.type_at(o, path)
        if not is_scalar(ct):
            raise UnmodeledAccess(f"{iid}: store of {t} into a {ct} region of {o.site}")
        o.cells[path] = v

    # ------------------------------------------------------------------ values
    def value(self, st: SymState, v, hint: Optional[TypeDesc] = None):
        if isinstance(v, Local):
            try:
                return st.top.locals[v.name]
            except KeyError:
                raise EngineError(f"undefined local %{v.name}") from None
        if isinstance(v, GlobalRef):
            return Ptr(self.globals[v.name], ())
        if isinstance(v, NullConst):
            return NULL
        if isinstance(v, Const):
            if isinstance(hint, PtrType):
                return NULL
            w = hint.width if isinstance(hint, IntType) else 64
            return E.const(v.value, w)
        raise EngineError(f"unsupported operand {v}")

    # ------------------------------------------------------------------ initial state
    def initial_state(self) -> SymState:
        st = SymState([], {}, (), "0")
        self.globals = {}
        for g in self.m.globals:
            oid = self.alloc(st, f"@{g.name}", g.type)
            self.globals[g.name] = oid
            o = st.objects[oid]
            cells = scalar_cells(g.type, self.structs)
            if isinstance(g.init, SymbolicInit):
                for path, t, _ in cells:
                    if isinstance(t, PtrType):
                        o.cells[path] = Ptr(self.alloc(st, f"@{g.name}{_pstr(path)}*", t.pointee, lazy=True,
                                                       addr=E.sym(global_symbol(g.name, path), 64)), ())
                    else:
                        w = g.init.width or t.width
                        o.cells[path] = E.resize(E.sym(global_symbol(g.name, path), w), t.width)
            elif isinstance(g.init, int):
                path, t, _ = cells[0]
                o.cells[path] = E.const(g.init, t.width) if isinstance(t, IntType) else NULL
            elif isinstance(g.init, tuple):
                for (path, t, _), v in zip(cells, g.init):
                    o.cells[path] = E.const(v, t.width) if isinstance(t, IntType) else NULL
        for r in self.m.regions:
            base = E.sym(f"base({r.name})", 64) if isinstance(r.base, SymbolicInit) else E.const(r.base, 64)
            size = E.sym(f"size({r.name})", 64) if isinstance(r.size, SymbolicInit) else E.const(r.size, 64)
            self.regions[r.name] = (base, size)
            if not (base.is_const and size.is_const):
                st.pc = st.pc + (E.ule(base, E.add(base, size)),)
        f = self.funcs[self.entry]
        locals_ = {}
        for pname, pt in f.params:
            if isinstance(pt, PtrType):
                locals_[pname] = Ptr(self.alloc(st, f"param:{f.name}:%{pname}", pt.pointee, lazy=True), ())
            else:
                locals_[pname] = E.const(0, pt.width)
        st.frames.append(Frame(f, f.entry.label, 0, locals_))
        self._enter_block(st, f.entry.label, None)
        return st

    # ------------------------------------------------------------------ exploration
    def explore(self) -> ExplorationResult:
        if self.target is None:
            raise EngineError("segment holds no assertion")
        stack = [self.initial_state()]
        while stack:
            st = stack.pop()
            self.paths += 1
            if self.paths > self.opts.max_paths:
                self.result.exhausted = True
                break
            try:
                children = self.run(st)
            except _Done:
                continue
            except EngineError as exc:
                if "ceiling" in str(exc):
                    self.result.exhausted = True
                    break
                raise
            for child in reversed(children):
                stack.append(child)
        self.result.stats = {
            "paths": self.paths, "steps": self.steps, "pruned": self.pruned,
            "bound_cut": self.bound_cut, "queries": self.solver.queries,
            "violations": len(self.result.violations), "covered": len(self.result.covered),
            "faults": len(self.result.faults), "unknown": len(self.result.unknown),
        }
        self.result.smtlib = list(self.solver.smtlib_scripts)
        return self.result

    def run(self, st: SymState) -> list:
        """Execute until the path forks (returns children) or terminates (raises _Done)."""
        while True:
            self.steps += 1
            if self.steps > self.opts.max_steps:
                raise EngineError("resource ceiling reached (max steps)")
            fr = st.top
            b = fr.func.block(fr.block)
            i = b.instructions[fr.index]
            fr.index += 1
            out = self.step(st, i)
            if out is not None:
                return out

    def _enter_block(self, st: SymState, label: str, prev: Optional[str]) -> bool:
        fr = st.top
        loops = self.loops.get(fr.func.name, {})
        if label in loops:
            if prev is not None and prev in loops[label]:
                fr.loops[label] = fr.loops.get(label, 1) + 1
            else:
                fr.loops[label] = 1
            blk = fr.func.block(label)
            bound = blk.bound if blk.bound is not None else self.opts.loop_bound
            if fr.loops[label] > bound + 1:
                self.bound_cut += 1
                return False
        fr.prev, fr.block, fr.index = prev, label, 0
        # phis read the predecessor's values all at once
        phis = []
        for i in fr.func.block(label).instructions:
            if i.opcode != "phi":
                break
            k = i.labels.index(prev) if prev in i.labels else None
            if k is None:
                raise EngineError(f"phi {i.id} has no entry for {prev}")
            phis.append((i.result, self.value(st, i.operands[k], i.type)))
            fr.index += 1
        for name, v in phis:
            fr.locals[name] = v
        return True

    def goto(self, st: SymState, label: str) -> None:
        if not self._enter_block(st, label, st.top.block):
            raise _Done
        if not self._is_live(st):
            self.pruned += 1
            raise _Done

    # ------------------------------------------------------------------ instructions
    def step(self, st: SymState, i: Instruction):
        op = i.opcode
        fr = st.top
        L = fr.locals
        if op == "alloca":
            oid = self.alloc(st, f"alloca:{i.id}", i.type)
            fr.allocas.append(oid)
            L[i.result] = Ptr(oid, ())
        elif op == "load":
            p = self.value(st, i.operands[0])
            o = self.deref(st, p, i.id)
            L[i.result] = self.read_cell(st, o, p.path, i.type, i.id)
        elif op == "store":
            v = self.value(st, i.operands[0], i.type)
            p = self.value(st, i.operands[1])
            o = self.deref(st, p, i.id)
            self.write_cell(o, p.path, i.type, v, i.id)
        elif op == "gep":
            return self.gep(st, i)
        elif op in ("add", "sub", "mul"):
            a, b = (self.value(st, x, i.type) for x in i.operands)
            L[i.result] = E.binop(op, a, b)
        elif op in ("udiv", "sdiv"):
            a, b = (self.value(st, x, i.type) for x in i.operands)
            if not self.fork_fault(st, E.eq(b, E.const(0, b.width)), "division by zero", i.id):
                raise _Done
            L[i.result] = E.binop(op, a, b)
        elif op == "icmp":
            a, b = (self.value(st, x, i.type) for x in i.operands)
            if isinstance(a, Ptr) or isinstance(b, Ptr):
                a = self.addr_of(st, a) if isinstance(a, Ptr) else a
                b = self.addr_of(st, b) if isinstance(b, Ptr) else b
            L[i.result] = E.icmp(i.pred, a, b)
        elif op == "zext":
            L[i.result] = E.zext(self.value(st, i.operands[0], IntType(int(i.pred[1:]))), i.type.width)
        elif op == "trunc":
            L[i.result] = E.trunc(self.value(st, i.operands[0], IntType(int(i.pred[1:]))), i.type.width)
        elif op == "phi":
            raise EngineError(f"phi {i.id} after non-phi instruction")
        elif op == "br":
            self.goto(st, i.labels[0])
        elif op == "condbr":
            return self.branch(st, i)
        elif op == "call":
            return self.call(st, i)
        elif op == "ret":
            return self.ret(st, i)
        elif op == "free":
            p = self.value(st, i.operands[0])
            if isinstance(p, Ptr) and p.obj is not None:
                o = self.deref(st, p, i.id)
                o.freed = True
        elif op == "memcpy":
            self.memcpy(st, i)
        elif op == "symbolic_intrinsic":
            L[i.result] = self.fresh_value(st, i.sym_name, i.type, f"sym:{i.id}")
        elif op == "assert_intrinsic":
            self.assertion(st, i)
        else:  # pragma: no cover
            raise EngineError(f"unknown opcode {op}")
        return None

    def branch(self, st: SymState, i: Instruction):
        c = self.value(st, i.operands[0], IntType(1))
        t_lbl, f_lbl = i.labels
        if c.is_const:
            self.goto(st, t_lbl if c.val else f_lbl)
            return None
        children = []
        for k, (lbl, cond) in enumerate(((t_lbl, c), (f_lbl, E.not_(c)))):
            r = self.check(st, cond)
            if r.unsat:
                continue
            child = st.copy(str(k))
            child.pc = child.pc + (cond,)
            try:
                child_ok = self._enter_block(child, lbl, child.top.block)
            except _Done:
                continue
            if not child_ok:
                continue
            if not self._is_live(child):
                self.pruned += 1
                continue
            children.append(child)
        if not children:
            raise _Done
        return children

    def gep(self, st: SymState, i: Instruction):
        base = self.value(st, i.operands[0])
        if not isinstance(base, Ptr) or base.obj is None:
            self.result.faults.append(FaultRecord(st.fork_id, "null pointer arithmetic", i.id, st.pc))
            raise _Done
        o = st.objects.get(base.obj)
        if o is None:
            self.result.faults.append(FaultRecord(st.fork_id, "dangling pointer", i.id, st.pc))
            raise _Done
        states = [(st, base.path)]
        t0 = self.type_at(o, base.path)
        for sel in i.operands[1:]:
            nxt = []
            for s, path in states:
                t = path_type_offset(o.type, path, self.structs)[0]
                if isinstance(sel, Field):
                    if not isinstance(t, StructType):
                        raise UnmodeledAccess(f"{i.id}: field .{sel.name} of non-struct {t}")
                    nxt.append((s, path + (sel.name,)))
                    continue
                if not isinstance(t, ArrayType):
                    raise UnmodeledAccess(f"{i.id}: index into non-array {t}")
                idx = self.value(s, sel, IntType(64)) if not isinstance(sel, Local) else s.top.locals[sel.name]
                if idx.is_const:
                    k = E.to_signed(idx.val, idx.width)
                    if 0 <= k < t.length:
                        nxt.append((s, path + (k,)))
                    else:
                        self.result.faults.append(FaultRecord(s.fork_id, "index out of range", i.id, s.pc))
                    continue
                w = idx.width
                in_range = E.and_(E.sle(E.const(0, w), idx), E.slt(idx, E.const(t.length, w))) \
                    if t.length < (1 << (w - 1)) else E.sle(E.const(0, w), idx)
                oob = E.not_(in_range)
                r = self.check(s, oob)
                if not r.unsat:
                    self.result.faults.append(FaultRecord(s.fork_id + ".oob", "index out of range", i.id,
                                                          s.pc + (oob,)))
                for k in range(min(t.length, 1 << w)):
                    cond = E.eq(idx, E.const(k, w))
                    if self.check(s, cond).unsat:
                        continue
                    child = s.copy(f"i{k}")
                    child.pc = child.pc + (cond,)
                    nxt.append((child, path + (k,)))
            states = nxt
        del t0
        if not states:
            raise _Done
        out = []
        for s, path in states:
            s.top.locals[i.result] = Ptr(base.obj, path)
            out.append(s)
        if len(out) == 1 and out[0] is st:
            return None
        return out

    def call(self, st: SymState, i: Instruction):
        fr = st.top
        callee = self.funcs.get(i.callee)
        if i.callee in INTRINSICS and callee is None:
            v = self.intrinsic(st, i)
            if i.result:
                fr.locals[i.result] = v
            return None
        args = [self.value(st, a, pt) for a, (_, pt) in
                zip(i.operands, callee.params if callee else [(None, None)] * len(i.operands))]
        if callee is None or callee.is_external:
            if i.result:
                fr.locals[i.result] = self.fresh_value(st, f"ret:@{i.callee}", callee.ret_type,
                                                       f"stub:{i.id}")
            return None
        if len(st.frames) >= self.opts.call_depth:
            if i.result:
                fr.locals[i.result] = self.fresh_value(st, f"depth:@{i.callee}", callee.ret_type,
                                                       f"stub:{i.id}")
            return None
        st.frames.append(Frame(callee, callee.entry.label, 0,
                               {p: a for (p, _), a in zip(callee.params, args)}, ret_to=i.result))
        if not self._enter_block(st, callee.entry.label, None):
            raise _Done
        return None

    def ret(self, st: SymState, i: Instruction):
        fr = st.top
        v = self.value(st, i.operands[0], fr.func.ret_type) if i.operands else None
        st.frames.pop()
        for oid in fr.allocas:
            st.objects.pop(oid, None)
        if not st.frames:
            raise _Done
        if fr.ret_to:
            st.top.locals[fr.ret_to] = v
        if not self._is_live(st):
            self.pruned += 1
            raise _Done
        return None

    def intrinsic(self, st: SymState, i: Instruction):
        if i.callee == "SmmIsBufferOutsideSmmValid":
            p = self.value(st, i.operands[0])
            n = self.value(st, i.operands[1], IntType(64))
            env = {"stase.p": p, "stase.n": n}
            parts = [self.eval_expr(st, smram_condition(EVar("%", "stase.p"), EVar("%", "stase.n"), r.name),
                                    env) for r in self.m.regions]
            return E.and_(*parts)
        raise EngineError(f"unknown intrinsic @{i.callee}")

    def memcpy(self, st: SymState, i: Instruction):
        dp = self.value(st, i.operands[0])
        sp = self.value(st, i.operands[1])
        n = self.value(st, i.operands[2], IntType(64))
        n = E.resize(n, 64)
        do = self.deref(st, dp, i.id)
        so = self.deref(st, sp, i.id)
        _, doff = path_type_offset(do.type, dp.path, self.structs)
        _, soff = path_type_offset(so.type, sp.path, self.structs)
        dsize = type_size(do.type, self.structs) - doff
        ssize = type_size(so.type, self.structs) - soff
        limit = min(dsize, ssize)
        if not self.fork_fault(st, E.ult(E.const(limit, 64), n), "memcpy out of bounds", i.id):
            raise _Done
        dcells = {off: (path, t) for path, t, off in scalar_cells(do.type, self.structs)}
        updates = []
        for path, t, off in scalar_cells(so.type, self.structs):
            rel = off - soff
            sz = type_size(t, self.structs)
            if rel < 0 or rel + sz > limit:
                continue
            target = dcells.get(doff + rel)
            if target is None or type_size(target[1], self.structs) != sz:
                raise UnmodeledAccess(f"{i.id}: memcpy between mismatched layouts")
            cond = E.ule(E.const(rel + sz, 64), n)
            sv = self.read_cell(st, so, path, t, i.id)
            if isinstance(target[1], PtrType) or isinstance(sv, Ptr):
                if not cond.is_const:
                    raise UnmodeledAccess(f"{i.id}: symbolic-length copy of a pointer cell")
                if cond.val:
                    updates.append((target[0], sv))
                continue
            dv = self.read_cell(st, do, target[0], target[1], i.id)
            if target[1] != t:
                sv = E.resize(sv, target[1].width)
            updates.append((target[0], E.ite(cond, sv, dv)))
        for path, v in updates:
            do.cells[path] = v

    # ------------------------------------------------------------------ assertions
    def assertion(self, st: SymState, i: Instruction):
        a = self.eval_expr(st, i.expr, {})
        if not isinstance(a, SymExpr) or a.width != 1:
            raise EngineError(f"assertion {i.id} is not boolean")
        neg = E.not_(a)
        rv = self.check(st, neg)
        rh = self.check(st, a)
        if rv.sat:
            self.result.violations.append(PathRecord(st.fork_id, st.pc, a, rv.model, True))
        elif rv.status == "unknown":
            self.result.unknown.append(PathRecord(st.fork_id, st.pc, a, {}, True))
        if rh.sat:
            self.result.covered.append(PathRecord(st.fork_id, st.pc, a, rh.model, False))
        raise _Done

    def eval_expr(self, st: SymState, e, env: dict):
        """Evaluate an assertion-language expression; bare integers stay untyped."""
        if isinstance(e, EConst):
            return e.value
        if isinstance(e, EBool):
            return E.boolean(e.value)
        if isinstance(e, EVar):
            if e.sigil == "%" and e.name in env:
                return env[e.name]
            return self.value(st, Local(e.name) if e.sigil == "%" else GlobalRef(e.name))
        if isinstance(e, ENot):
            return E.not_(_as_bool(self.eval_expr(st, e.arg, env)))
        if isinstance(e, ECall):
            return self.eval_call(st, e, env)
        if isinstance(e, EBin):
            a = self.eval_expr(st, e.left, env)
            b = self.eval_expr(st, e.right, env)
            return combine(e.op, a, b)
        if isinstance(e, EName):
            raise EngineError(f"bare name {e.name} in expression")
        raise EngineError(f"bad expression {e!r}")

    def eval_call(self, st: SymState, e: ECall, env: dict):
        fn = e.fn
        if fn in ("base", "size"):
            name = e.args[0].name if isinstance(e.args[0], EName) else None
            if name not in self.regions:
                raise EngineError(f"unknown region {name}")
            return self.regions[name][0 if fn == "base" else 1]
        p = self.eval_expr(st, e.args[0], env)
        if fn == "addr":
            if isinstance(p, Ptr):
                return self.addr_of(st, p)
            return E.resize(p, 64) if isinstance(p, SymExpr) else E.const(p, 64)
        if not isinstance(p, Ptr) or p.obj is None or p.obj not in st.objects:
            raise UnmodeledAccess(f"{fn}() of a non-object pointer")
        o = st.objects[p.obj]
        if fn == "freed":
            return E.boolean(o.freed)
        t, off = path_type_offset(o.type, p.path, self.structs)
        if fn == "offset":
            return E.const(off, 64)
        if fn == "objsize":
            return E.const(type_size(o.type, self.structs), 64)
        if fn == "lenof":
            if not isinstance(t, ArrayType):
                raise UnmodeledAccess("lenof() of a non-array")
            return t.length
        raise EngineError(f"unknown function {fn}")


def _pstr(path: tuple) -> str:
    from ..mir.ir import abstract_path, path_str

    return path_str(abstract_path(path))


def _as_bool(v) -> SymExpr:
    if isinstance(v, int):
        return E.boolean(v != 0)
    if v.width != 1:
        return E.ne(v, E.const(0, v.width))
    return v


def sext(x: SymExpr, w: int) -> SymExpr:
    if w == x.width:
        return x
    sb = E.const(1 << (x.width - 1), w)
    return E.sub(E.binop("xor", E.zext(x, w), sb), sb)


_SIGNED = ("<s", "<=s", ">s", ">=s")


def _fits(k: int, w: int, signed: bool) -> bool:
    if signed:
        return -(1 << (w - 1)) <= k < (1 << (w - 1))
    return 0 <= k < (1 << w)


def combine(op: str, a, b):
    """Apply an assertion-language operator; ints adopt the other side's width."""
    if op in ("&&", "||"):
        a, b = _as_bool(a), _as_bool(b)
        return E.and_(a, b) if op == "&&" else E.or_(a, b)
    if isinstance(a, int) and isinstance(b, int):
        return _fold_untyped(op, a, b)
    signed = op in _SIGNED
    if isinstance(a, int) or isinstance(b, int):
        typed = b if isinstance(a, int) else a
        k = a if isinstance(a, int) else b
        w = typed.width
        if not _fits(k, w, signed) and op in _CMP:
            typed = sext(typed, 64) if signed else E.zext(typed, 64)
            w = 64
        kk = E.const(k, w)
        a, b = (kk, typed) if isinstance(a, int) else (typed, kk)
    if a.width != b.width:
        w = max(a.width, b.width)
        a = sext(a, w) if signed else E.zext(a, w)
        b = sext(b, w) if signed else E.zext(b, w)
    return _CMP[op](a, b) if op in _CMP else _ARITH[op](a, b)


_CMP = {
    "==": E.eq, "!=": E.ne,
    "<": E.ult, "<=": E.ule, ">": lambda a, b: E.ult(b, a), ">=": lambda a, b: E.ule(b, a),
    "<s": E.slt, "<=s": E.sle, ">s": lambda a, b: E.slt(b, a), ">=s": lambda a, b: E.sle(b, a),
}
_ARITH = {"+": E.add, "-": E.sub, "*": E.mul, "/": lambda a, b: E.binop("udiv", a, b)}


def _fold_untyped(op: str, a: int, b: int):
    if op in _CMP:
        return E.boolean({"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b,
                          ">=": a >= b, "<s": a < b, "<=s": a <= b, ">s": a > b, ">=s": a >= b}[op])
    return {"+": a + b, "-": a - b, "*": a * b, "/": a // b if b else -1}[op]


def explore(theta: ModuleIR, entry: str, opts: Optional[ExploreOptions] = None,
            solver: Optional[Solver] = None) -> ExplorationResult:
    return Explorer(theta, entry, opts, solver).explore()


CONFIRMED = "confirmed"
DISMISSED = "dismissed"
UNCONFIRMED = "unconfirmed(budget)"


def explore_segment(seg, peh, solver_cfg: Optional[SolverConfig] = None, max_steps: int = 2_000_000,
                    max_paths: int = 20_000) -> ExplorationResult:
    """Explore an instrumented segment with the bounds recorded in its harness."""
    opts = ExploreOptions(call_depth=peh.call_depth, loop_bound=peh.default_loop_bound,
                          max_steps=max_steps, max_paths=max_paths,
                          solver=solver_cfg or SolverConfig.from_env())
    return explore(seg.module, seg.entry, opts)


def classify(result: ExplorationResult) -> str:
    if result.violations:
        return CONFIRMED
    if result.unknown or result.exhausted:
        return UNCONFIRMED
    if not result.reached and result.stats.get("bound_cut", 0):
        return UNCONFIRMED
    return DISMISSED
