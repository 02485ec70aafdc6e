"""Field-sensitive, flow- and context-insensitive Andersen points-to analysis.

Abstract cells are ``(site, path)`` pairs where ``path`` is a tuple of field names
with every array index collapsed to ``"[]"``. Besides the classic points-to
sets, the solver tracks *provenance*: the cells whose contents may flow into a
scalar value. The exported ``subset.var_points_to`` relation is the union of
both, so the taint rule ``var_points_to(_, ?a, _, ?src), var_points_to(_, ?a, _, ?sink)``
also connects integer sinks loaded from attacker memory.

Allocation sites:

* ``alloca:<instr>``  stack objects
* ``@<global>``       globals
* ``sym:<instr>``     objects behind pointer-typed ``symbolic_intrinsic`` values
* ``stub:<instr>``    objects returned by calls to external functions
* ``param:<func>:%<name>``  the unknown object behind a formal parameter
* ``<site><path>*``   the unknown object behind a pointer cell of an unknown object
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .facts import value_id
from .mir.ir import (
    ARITH,
    ArrayType,
    Const,
    Field,
    FunctionDef,
    GlobalRef,
    Instruction,
    IntType,
    Local,
    ModuleIR,
    PtrType,
    StructType,
    TypeDesc,
    is_scalar,
    path_str,
)

CONTEXT = "*"
Cell = tuple[str, tuple]


def param_site(func: str, name: str) -> str:
    return f"param:{func}:%{name}"


def deref_site(site: str, path: tuple) -> str:
    return f"{site}{path_str(path)}*"


def _unknown_origin(site: str) -> bool:
    return site.startswith(("param:", "sym:", "stub:")) or site.endswith("*")


@dataclass
class PointsToResult:
    module: str
    pts: dict[str, set[Cell]] = field(default_factory=lambda: defaultdict(set))
    prov: dict[str, set[Cell]] = field(default_factory=lambda: defaultdict(set))
    heap: dict[Cell, set[Cell]] = field(default_factory=lambda: defaultdict(set))
    hprov: dict[Cell, set[Cell]] = field(default_factory=lambda: defaultdict(set))
    site_types: dict[str, TypeDesc] = field(default_factory=dict)

    def points_to(self, var: str) -> set[Cell]:
        return set(self.pts.get(var, ()))

    def influences(self, var: str) -> set[Cell]:
        """Cells whose address or contents may reach ``var``."""
        return set(self.pts.get(var, ())) | set(self.prov.get(var, ()))

    def var_points_to(self) -> set[tuple]:
        out = set()
        for table in (self.pts, self.prov):
            for var, cells in table.items():
                for site, path in cells:
                    out.add((CONTEXT, site, path_str(path), var))
        return out

    def may_alias(self, a: str, b: str) -> bool:
        return bool(self.pts.get(a, set()) & self.pts.get(b, set()))

    def sites(self) -> set[str]:
        return {s for cells in self.pts.values() for s, _ in cells}


class _Solver:
    def __init__(self, m: ModuleIR):
        self.m = m
        self.structs = {s.name: s for s in m.structs}
        self.r = PointsToResult(m.name)
        self.changed = False
        self.ext_stub_calls: dict[str, str] = {}

    # -- helpers
    def vid(self, f: FunctionDef, v) -> str:
        return value_id(self.m, f.name, v)

    def add(self, table: dict, key, items) -> None:
        cur = table[key]
        before = len(cur)
        cur |= items
        if len(cur) != before:
            self.changed = True

    def cell_type(self, cell: Cell) -> Optional[TypeDesc]:
        site, path = cell
        t = self.r.site_types.get(site)
        for sel in path:
            if t is None:
                return None
            if sel == "[]":
                t = t.elem if isinstance(t, ArrayType) else None
            elif isinstance(t, StructType) and t.name in self.structs:
                t = self.structs[t.name].field_type(sel)
            else:
                return None
        return t

    def subcells(self, cell: Cell) -> list[tuple]:
        """Scalar suffixes below ``cell`` (abstract paths)."""
        t = self.cell_type(cell)
        if t is None or is_scalar(t):
            return [()]
        out: list[tuple] = []

        def walk(tt, suffix):
            if is_scalar(tt) or tt is None:
                out.append(suffix)
            elif isinstance(tt, ArrayType):
                walk(tt.elem, suffix + ("[]",))
            elif isinstance(tt, StructType) and tt.name in self.structs:
                for fname, ftype in self.structs[tt.name].fields:
                    walk(ftype, suffix + (fname,))
            else:
                out.append(suffix)

        walk(t, ())
        return out or [()]

    def contents(self, cell: Cell) -> set[Cell]:
        """Pointer targets stored in ``cell``, including the unknown initial target."""
        out = set(self.r.heap.get(cell, ()))
        site, path = cell
        if _unknown_origin(site):
            t = self.cell_type(cell)
            if isinstance(t, PtrType):
                d = deref_site(site, path)
                self.r.site_types.setdefault(d, t.pointee)
                out.add((d, ()))
        return out

    # -- driver
    def run(self) -> PointsToResult:
        m = self.m
        for g in m.globals:
            self.r.site_types[f"@{g.name}"] = g.type
            self.r.pts[f"@{g.name}"].add((f"@{g.name}", ()))
        for f in m.functions:
            for pname, ptype in f.params:
                s = param_site(f.name, pname)
                v = self.vid(f, Local(pname))
                if isinstance(ptype, PtrType):
                    self.r.site_types[s] = ptype.pointee
                    self.r.pts[v].add((s, ()))
                else:
                    self.r.site_types[s] = ptype
                    self.r.prov[v].add((s, ()))
            for i in f.instructions():
                if i.opcode == "alloca":
                    self.r.site_types[f"alloca:{i.id}"] = i.type
                elif i.opcode == "symbolic_intrinsic" and isinstance(i.type, PtrType):
                    self.r.site_types[f"sym:{i.id}"] = i.type.pointee
                elif i.opcode == "call" and self._is_external(i.callee) \
                        and isinstance(i.result_type, PtrType):
                    self.r.site_types[f"stub:{i.id}"] = i.result_type.pointee
        self.changed = True
        while self.changed:
            self.changed = False
            for f in m.functions:
                for i in f.instructions():
                    self.step(f, i)
        return self.r

    def _is_external(self, name: Optional[str]) -> bool:
        if name is None:
            return True
        for f in self.m.functions:
            if f.name == name:
                return f.is_external
        return True

    def src_sets(self, f: FunctionDef, v) -> tuple[set[Cell], set[Cell]]:
        if isinstance(v, (Local, GlobalRef)):
            k = self.vid(f, v)
            return self.r.pts.get(k, set()), self.r.prov.get(k, set())
        return set(), set()

    def step(self, f: FunctionDef, i: Instruction) -> None:
        op = i.opcode
        r = self.r
        res = self.vid(f, Local(i.result)) if i.result else None
        if op == "alloca":
            self.add(r.pts, res, {(f"alloca:{i.id}", ())})
        elif op == "symbolic_intrinsic":
            if isinstance(i.type, PtrType):
                self.add(r.pts, res, {(f"sym:{i.id}", ())})
        elif op == "load":
            ptrs, _ = self.src_sets(f, i.operands[0])
            for c in list(ptrs):
                self.add(r.pts, res, self.contents(c))
                self.add(r.prov, res, {c} | r.hprov.get(c, set()))
        elif op == "store":
            vp, vprov = self.src_sets(f, i.operands[0])
            ptrs, _ = self.src_sets(f, i.operands[1])
            for c in list(ptrs):
                if vp:
                    self.add(r.heap, c, set(vp))
                if vprov:
                    self.add(r.hprov, c, set(vprov))
        elif op == "gep":
            ptrs, bprov = self.src_sets(f, i.operands[0])
            sels = tuple(s.name if isinstance(s, Field) else "[]" for s in i.operands[1:])
            self.add(r.pts, res, {(s, p + sels) for s, p in ptrs})
            if bprov:
                self.add(r.prov, res, set(bprov))
        elif op in ARITH or op in ("icmp", "zext", "trunc", "phi"):
            acc_p: set = set()
            acc_v: set = set()
            for v in i.operands:
                p, pv = self.src_sets(f, v)
                acc_p |= p
                acc_v |= pv
            if acc_p:
                self.add(r.pts, res, acc_p)
            if acc_v:
                self.add(r.prov, res, acc_v)
        elif op == "call":
            self.call(f, i, res)
        elif op == "memcpy":
            dst, _ = self.src_sets(f, i.operands[0])
            src, _ = self.src_sets(f, i.operands[1])
            for sc in list(src):
                for q in self.subcells(sc):
                    s_cell = (sc[0], sc[1] + q)
                    payload_p = self.contents(s_cell)
                    payload_v = {s_cell} | r.hprov.get(s_cell, set())
                    for dc in list(dst):
                        for d_cell in self._dst_cells(dc, q):
                            if payload_p:
                                self.add(r.heap, d_cell, set(payload_p))
                            self.add(r.hprov, d_cell, set(payload_v))

    def _dst_cells(self, dc: Cell, q: tuple) -> list[Cell]:
        target = (dc[0], dc[1] + q)
        if q == () or self.cell_type(target) is not None:
            return [target]
        # layouts disagree: smear over every scalar cell of the destination
        return [(dc[0], dc[1] + s) for s in self.subcells(dc)]

    def call(self, f: FunctionDef, i: Instruction, res: Optional[str]) -> None:
        r = self.r
        callee = None
        for g in self.m.functions:
            if g.name == i.callee:
                callee = g
        if callee is None or callee.is_external:
            if res and isinstance(i.result_type, PtrType):
                self.add(r.pts, res, {(f"stub:{i.id}", ())})
            if res:
                # result of an unknown function may depend on its arguments
                for a in i.operands:
                    _, pv = self.src_sets(f, a)
                    if pv:
                        self.add(r.prov, res, set(pv))
            return
        for (pname, _), a in zip(callee.params, i.operands):
            p, pv = self.src_sets(f, a)
            k = self.vid(callee, Local(pname))
            if p:
                self.add(r.pts, k, set(p))
            if pv:
                self.add(r.prov, k, set(pv))
        if res:
            for ri in callee.instructions():
                if ri.opcode == "ret" and ri.operands:
                    p, pv = self.src_sets(callee, ri.operands[0])
                    if p:
                        self.add(r.pts, res, set(p))
                    if pv:
                        self.add(r.prov, res, set(pv))


def run_pointer_analysis(m: ModuleIR, facts=None) -> PointsToResult:
    """Solve the subset constraints of ``m`` to their least fixed point.

    ``facts`` is accepted for interface symmetry; the solver reads the module directly.
    """
    return _Solver(m).run()


def write_points_to(path, result: PointsToResult) -> None:
    from .datalog.tsv import write_relation

    write_relation(path, result.var_points_to())
