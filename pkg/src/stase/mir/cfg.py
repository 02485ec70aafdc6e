"""Control-flow graph utilities over :class:`FunctionDef`."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import networkx as nx

from .ir import FunctionDef, ModuleIR

_EXIT = "<exit>"


class IrreducibleCFG(Exception):
    pass


def cfg_graph(f: FunctionDef) -> nx.DiGraph:
    g = nx.DiGraph()
    labels = {b.label for b in f.blocks}
    for b in f.blocks:
        g.add_node(b.label)
        for s in b.successors():
            if s in labels:
                g.add_edge(b.label, s)
    return g


def reachable_blocks(f: FunctionDef) -> set[str]:
    g = cfg_graph(f)
    return {f.entry.label} | nx.descendants(g, f.entry.label)


def dominators(f: FunctionDef) -> dict[str, set[str]]:
    """Full dominator sets for blocks reachable from the entry."""
    g = cfg_graph(f)
    idom = nx.immediate_dominators(g, f.entry.label)
    dom: dict[str, set[str]] = {}
    for n in idom:
        chain = {n}
        x = n
        while idom[x] != x:
            x = idom[x]
            chain.add(x)
        dom[n] = chain
    return dom


def postdom_tree(f: FunctionDef) -> tuple[nx.DiGraph, dict[str, str]]:
    """Reverse CFG with a virtual exit, plus immediate post-dominators."""
    g = cfg_graph(f).reverse(copy=True)
    g.add_node(_EXIT)
    for b in f.blocks:
        term = b.terminator
        if term is None or term.opcode == "ret":
            g.add_edge(_EXIT, b.label)
    # blocks that cannot reach an exit (infinite loops) hang off the virtual exit
    reach = nx.descendants(g, _EXIT) | {_EXIT}
    for b in f.blocks:
        if b.label not in reach:
            g.add_edge(_EXIT, b.label)
            reach |= nx.descendants(g, b.label) | {b.label}
    ipdom = nx.immediate_dominators(g, _EXIT)
    return g, ipdom


def control_dependences(f: FunctionDef) -> dict[str, set[str]]:
    """Map each block to the set of branch blocks it is control dependent on.

    Computed from the post-dominance frontier (Ferrante/Ottenstein/Warren).
    """
    g, ipdom = postdom_tree(f)
    frontier = nx.dominance_frontiers(g, _EXIT)
    out: dict[str, set[str]] = {b.label: set() for b in f.blocks}
    for b, fr in frontier.items():
        if b == _EXIT:
            continue
        out.setdefault(b, set()).update(x for x in fr if x != _EXIT)
    return out


@dataclass(frozen=True)
class Loop:
    header: str
    body: frozenset[str]
    latches: tuple[str, ...]


def natural_loops(f: FunctionDef) -> list[Loop]:
    """Natural loops keyed by header, merged over back edges sharing a header.

    Raises :class:`IrreducibleCFG` when a retreating edge is not a back edge.
    """
    g = cfg_graph(f)
    entry = f.entry.label
    dom = dominators(f)
    # DFS retreating edges
    order: dict[str, int] = {}
    on_stack: set[str] = set()
    retreating: list[tuple[str, str]] = []
    stack = [(entry, iter(sorted(g.successors(entry), key=_block_index(f))))]
    order[entry] = 0
    on_stack.add(entry)
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            on_stack.discard(node)
            continue
        if nxt in on_stack:
            retreating.append((node, nxt))
        elif nxt not in order:
            order[nxt] = len(order)
            on_stack.add(nxt)
            stack.append((nxt, iter(sorted(g.successors(nxt), key=_block_index(f)))))
    loops: dict[str, tuple[set[str], list[str]]] = {}
    for src, hdr in retreating:
        if hdr not in dom.get(src, set()):
            raise IrreducibleCFG(f"irreducible control flow in @{f.name}: edge {src} -> {hdr}")
        body, latches = loops.setdefault(hdr, ({hdr}, []))
        latches.append(src)
        work = [src]
        while work:
            n = work.pop()
            if n in body:
                continue
            body.add(n)
            work.extend(g.predecessors(n))
    idx = _block_index(f)
    return [Loop(h, frozenset(b), tuple(sorted(l, key=idx)))
            for h, (b, l) in sorted(loops.items(), key=lambda kv: idx(kv[0]))]


def _block_index(f: FunctionDef):
    pos = {b.label: k for k, b in enumerate(f.blocks)}
    return lambda lbl: pos.get(lbl, len(pos))


def call_graph(m: ModuleIR) -> nx.DiGraph:
    g = nx.DiGraph()
    for f in m.functions:
        g.add_node(f.name)
        for i in f.instructions():
            if i.opcode == "call" and i.callee is not None:
                g.add_edge(f.name, i.callee)
    return g


def recursion_sccs(m: ModuleIR) -> list[list[str]]:
    """Call-graph SCCs of mutual recursion (size > 1). Self-loops are allowed."""
    g = call_graph(m)
    return [sorted(c) for c in nx.strongly_connected_components(g) if len(c) > 1]
