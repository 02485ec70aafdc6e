"""System dependence graph with summary edges and two-pass backward slicing."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import networkx as nx

from ..facts import value_id
from ..mir.cfg import control_dependences, natural_loops, recursion_sccs
from ..mir.ir import FunctionDef, Instruction, Local, ModuleIR
from ..points_to import PointsToResult, run_pointer_analysis

CONTROL = "control"
DATA = "data"
MEMORY = "memory"
CALL = "call"
PARAM_IN = "param-in"
PARAM_OUT = "param-out"
SUMMARY = "summary"
FREE = "free"  # free -> later dereference of the same site


class MutualRecursionError(Exception):
    def __init__(self, scc: list[str]):
        self.scc = scc
        super().__init__("mutual recursion is not supported: " + ", ".join("@" + f for f in scc))


# node constructors; nodes are plain tuples so the graph stays hashable and sortable
def inode(iid: str) -> tuple:
    return ("i", iid)


def entry_node(func: str) -> tuple:
    return ("entry", func)


def fin_node(func: str, k: int) -> tuple:
    return ("fin", func, k)


def fout_node(func: str) -> tuple:
    return ("fout", func)


def ain_node(call_iid: str, k: int) -> tuple:
    return ("ain", call_iid, k)


@dataclass
class DependenceGraph:
    graph: nx.MultiDiGraph
    module: ModuleIR
    func_of: dict[tuple, str] = field(default_factory=dict)

    def edges_of_kind(self, kind: str) -> list[tuple]:
        return sorted((u, v) for u, v, k in self.graph.edges(keys=True) if k == kind)

    def in_edges(self, node, kinds: Optional[set] = None):
        for u, _, k in self.graph.in_edges(node, keys=True):
            if kinds is None or k in kinds:
                yield u, k


def _cells(pts: PointsToResult, var: str) -> set:
    return pts.pts.get(var, set())


def _overlap(a: tuple, b: tuple) -> bool:
    (sa, pa), (sb, pb) = a, b
    if sa != sb:
        return False
    n = min(len(pa), len(pb))
    return pa[:n] == pb[:n]


def build_sdg(m: ModuleIR, facts=None, pts: Optional[PointsToResult] = None) -> DependenceGraph:
    sccs = recursion_sccs(m)
    if sccs:
        raise MutualRecursionError(sccs[0])
    pts = pts or run_pointer_analysis(m)
    g = nx.MultiDiGraph()
    sdg = DependenceGraph(g, m)
    funcs = {f.name: f for f in m.functions if not f.is_external}

    def add(u, v, kind):
        if not g.has_edge(u, v, key=kind):
            g.add_edge(u, v, key=kind)

    writes: list[tuple[tuple, set]] = []
    reads: list[tuple[tuple, set]] = []
    frees: list[tuple[tuple, set]] = []
    derefs: list[tuple[tuple, set]] = []
    call_sites: dict[str, list[Instruction]] = defaultdict(list)

    for f in funcs.values():
        vid = lambda v, f=f: value_id(m, f.name, v)  # noqa: E731
        en = entry_node(f.name)
        g.add_node(en)
        sdg.func_of[en] = f.name
        fo = fout_node(f.name)
        g.add_node(fo)
        sdg.func_of[fo] = f.name
        add(en, fo, CONTROL)
        defs: dict[str, tuple] = {}
        for k, (pname, _) in enumerate(f.params):
            n = fin_node(f.name, k)
            sdg.func_of[n] = f.name
            add(en, n, CONTROL)
            defs[pname] = n
        for i in f.instructions():
            g.add_node(inode(i.id))
            sdg.func_of[inode(i.id)] = f.name
            if i.result:
                defs[i.result] = inode(i.id)
        cdeps = control_dependences(f)
        for b in f.blocks:
            ctrl = [inode(f.block(c).terminator.id) for c in sorted(cdeps.get(b.label, ()))
                    if f.block(c).terminator is not None]
            for i in b.instructions:
                n = inode(i.id)
                for c in ctrl or [en]:
                    add(c, n, CONTROL)
                if i.opcode == "call" and i.callee in funcs:
                    call_sites[i.callee].append(i)
                    for k, a in enumerate(i.operands):
                        an = ain_node(i.id, k)
                        sdg.func_of[an] = f.name
                        add(n, an, CONTROL)
                        if isinstance(a, Local) and a.name in defs:
                            add(defs[a.name], an, DATA)
                else:
                    for u in i.uses():
                        if u.name in defs:
                            add(defs[u.name], n, DATA)
                if i.opcode == "ret" and i.operands:
                    add(n, fo, DATA)
                ops = i.operands
                if i.opcode == "store":
                    writes.append((n, _cells(pts, vid(ops[1]))))
                    derefs.append((n, _cells(pts, vid(ops[1]))))
                elif i.opcode == "load":
                    reads.append((n, _cells(pts, vid(ops[0]))))
                    derefs.append((n, _cells(pts, vid(ops[0]))))
                elif i.opcode == "memcpy":
                    writes.append((n, _cells(pts, vid(ops[0]))))
                    reads.append((n, _cells(pts, vid(ops[1]))))
                    derefs.append((n, _cells(pts, vid(ops[0])) | _cells(pts, vid(ops[1]))))
                elif i.opcode == "free":
                    frees.append((n, {(s, ()) for s, _ in _cells(pts, vid(ops[0]))}))
                elif i.opcode == "call" and i.callee not in funcs and i.callee is not None:
                    # intrinsics and externs read their pointer arguments
                    for a in ops:
                        if isinstance(a, Local):
                            cells = _cells(pts, vid(a))
                            if cells:
                                reads.append((n, cells))
    # flow-insensitive memory dependences
    for w, wc in writes:
        for r, rc in reads:
            if w != r and any(_overlap(a, b) for a in wc for b in rc):
                add(w, r, MEMORY)
    for fr, fc in frees:
        sites = {s for s, _ in fc}
        for d, dc in derefs:
            if any(s in sites for s, _ in dc):
                add(fr, d, FREE)
    # interprocedural edges
    for callee, sites in call_sites.items():
        cf = funcs[callee]
        for i in sites:
            n = inode(i.id)
            add(n, entry_node(callee), CALL)
            for k in range(min(len(i.operands), len(cf.params))):
                add(ain_node(i.id, k), fin_node(callee, k), PARAM_IN)
            if i.result:
                add(fout_node(callee), n, PARAM_OUT)
    _summary_edges(sdg, funcs, call_sites)
    return sdg


def _summary_edges(sdg: DependenceGraph, funcs: dict[str, FunctionDef],
                   call_sites: dict[str, list[Instruction]]) -> None:
    """Add ``actual-in -> call`` summary edges until no callee grows a new one.

    A summary edge exists when the callee's formal-in reaches its formal-out along
    intraprocedural edges (plus summary edges at the callee's own call sites).
    """
    g = sdg.graph
    intra = {CONTROL, DATA, MEMORY, SUMMARY, FREE}
    changed = True
    while changed:
        changed = False
        for callee, sites in sorted(call_sites.items()):
            f = funcs[callee]
            reaching = _formals_reaching_out(sdg, f, intra)
            for i in sites:
                if not i.result:
                    continue
                for k in sorted(reaching):
                    if k < len(i.operands) and not g.has_edge(ain_node(i.id, k), inode(i.id), key=SUMMARY):
                        g.add_edge(ain_node(i.id, k), inode(i.id), key=SUMMARY)
                        changed = True


def _formals_reaching_out(sdg: DependenceGraph, f: FunctionDef, kinds: set) -> set[int]:
    g = sdg.graph
    start = fout_node(f.name)
    seen = {start}
    work = [start]
    while work:
        n = work.pop()
        for u, _, k in g.in_edges(n, keys=True):
            if k in kinds and u not in seen and sdg.func_of.get(u) == f.name:
                seen.add(u)
                work.append(u)
    return {n[2] for n in seen if n[0] == "fin"}


# --------------------------------------------------------------------------- slicing


@dataclass
class Slice:
    criterion: tuple
    nodes: frozenset
    instructions: frozenset

    def retained_lines(self, m: ModuleIR) -> set[tuple[str, int]]:
        out = set()
        for iid in self.instructions:
            loc = m.instruction(iid).loc
            out.add((loc.file, loc.line))
        return out


def _walk(sdg: DependenceGraph, seeds: Iterable, excluded: set) -> set:
    seen = set(seeds)
    work = list(seen)
    while work:
        n = work.pop()
        for u, _, k in sdg.graph.in_edges(n, keys=True):
            if k not in excluded and u not in seen:
                seen.add(u)
                work.append(u)
    return seen


def two_pass_slice(sdg: DependenceGraph, criterion, variables: Optional[Iterable[str]] = None,
                   extra_kinds: Iterable[str] = ()) -> Slice:
    """Backward interprocedural slice.

    ``criterion`` is an instruction id. When ``variables`` is given, only the
    dependences of the criterion on those locals (plus its control dependences
    and any ``extra_kinds`` edges) seed the slice; otherwise every incoming edge does.
    """
    k_node = inode(criterion) if isinstance(criterion, str) else criterion
    if k_node not in sdg.graph:
        raise KeyError(f"criterion {criterion} is not in the dependence graph")
    seeds = {k_node}
    if variables is not None:
        wanted = set(variables)
        m = sdg.module
        func = sdg.func_of[k_node]
        f = m.function(func)
        defs = {}
        for k, (pname, _) in enumerate(f.params):
            defs[pname] = fin_node(func, k)
        for i in f.instructions():
            if i.result:
                defs[i.result] = inode(i.id)
        seeds |= {defs[v] for v in wanted if v in defs}
        seeds |= {u for u, _ in sdg.in_edges(k_node, {CONTROL, *extra_kinds})}
    if variables is not None:
        # only the chosen dependences of K itself are followed
        seeds.discard(k_node)
    pass1 = _walk(sdg, seeds, {PARAM_OUT})
    pass2 = _walk(sdg, pass1, {CALL, PARAM_IN}) | {k_node}
    instrs = frozenset(n[1] for n in pass2 if n[0] == "i")
    return Slice(k_node, frozenset(pass2), instrs)
