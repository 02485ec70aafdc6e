"""Stratification and bottom-up evaluation (semi-naive, plus a naive reference)."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Optional

import networkx as nx

from .syntax import (
    WILD,
    Atom,
    Constraint,
    DatalogError,
    Program,
    Rule,
    StratificationError,
    Substr,
    Var,
    Wildcard,
)

DEFAULT_CEILING = 10_000_000

Facts = dict[str, set[tuple]]


class DatalogOverflow(DatalogError):
    pass


class UnknownRelation(DatalogError):
    pass


def stratify(program: Program) -> Program:
    """Compute strata in dependency order; reject negation inside a recursive cycle."""
    heads = {r.head.relation for r in program.rules if r.body}
    for name, rel in program.relations.items():
        rel.kind = "intensional" if name in heads else "extensional"
    g = nx.DiGraph()
    g.add_nodes_from(program.relations)
    negative: set[tuple[str, str]] = set()
    for r in program.rules:
        for lit in r.body:
            if isinstance(lit, Atom):
                g.add_edge(lit.relation, r.head.relation)
                if lit.negated:
                    negative.add((lit.relation, r.head.relation))
    cond = nx.condensation(g)
    members = cond.graph["mapping"]
    for src, dst in negative:
        if members[src] == members[dst]:
            raise StratificationError(
                f"negation of {src} inside a recursive cycle through {dst}: not stratifiable")
    # deterministic topological order: tie-break on the smallest relation name
    order = list(nx.lexicographical_topological_sort(
        cond, key=lambda n: min(cond.nodes[n]["members"])))
    program.strata = []
    program.stratum_relations = []
    for comp in order:
        rels = sorted(cond.nodes[comp]["members"])
        rules = [r for r in program.rules if r.head.relation in rels]
        if not rules:
            continue
        program.strata.append(rules)
        program.stratum_relations.append(rels)
    return program


# --------------------------------------------------------------------------- joins


def _value(t, binding):
    if isinstance(t, Var):
        return binding[t.name]
    if isinstance(t, Substr):
        s = _value(t.arg, binding)
        s = str(s)
        return s[t.start:t.start + t.length]
    return t


def _compare(op, a, b) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if type(a) is not type(b):
        # strings and numbers never order against each other
        return False
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


class _Index:
    """Lazily built hash indexes over one snapshot of the relations."""

    def __init__(self, data: Facts):
        self.data = data
        self.cache: dict[tuple[int, tuple[int, ...]], dict] = {}

    def lookup(self, rel: str, positions: tuple[int, ...], key: tuple, delta: Optional[set] = None):
        src = delta if delta is not None else self.data.get(rel, ())
        if not positions:
            return src
        cache_key = (id(src), positions)
        idx = self.cache.get(cache_key)
        if idx is None:
            idx = defaultdict(list)
            for tup in src:
                idx[tuple(tup[p] for p in positions)].append(tup)
            self.cache[cache_key] = idx
        return idx.get(key, ())


def _plan(rule: Rule) -> list:
    """Order body literals: positive atoms in source order, filters as early as bound."""
    atoms = [l for l in rule.body if isinstance(l, Atom) and not l.negated]
    filters = [l for l in rule.body if not (isinstance(l, Atom) and not l.negated)]
    plan: list = []
    bound: set[str] = set()
    pending = list(filters)
    for a in atoms:
        plan.append(a)
        bound |= a.vars()
        ready = [f for f in pending if f.vars() <= bound]
        plan.extend(ready)
        pending = [f for f in pending if f not in ready]
    plan.extend(pending)
    return plan


def _eval_rule(rule: Rule, index: _Index, delta_at: Optional[int] = None,
               delta: Optional[set] = None) -> set[tuple]:
    """All head tuples derivable by ``rule``.

    When ``delta_at`` is given, the ``delta_at``-th positive atom of the plan ranges
    over ``delta`` instead of the full relation.
    """
    plan = _plan(rule)
    out: set[tuple] = set()
    head = rule.head

    def rec(k: int, binding: dict, pos_count: int):
        if k == len(plan):
            out.add(tuple(_value(t, binding) for t in head.terms))
            return
        lit = plan[k]
        if isinstance(lit, Constraint):
            if _compare(lit.op, _value(lit.left, binding), _value(lit.right, binding)):
                rec(k + 1, binding, pos_count)
            return
        if lit.negated:
            positions, key = _bound_key(lit, binding)
            full = index.lookup(lit.relation, positions, key)
            if not any(_match(lit, tup, binding) is not None for tup in full):
                rec(k + 1, binding, pos_count)
            return
        positions, key = _bound_key(lit, binding)
        use_delta = delta if delta_at == pos_count else None
        for tup in index.lookup(lit.relation, positions, key, use_delta):
            nb = _match(lit, tup, binding)
            if nb is not None:
                rec(k + 1, nb, pos_count + 1)

    rec(0, {}, 0)
    return out


def _bound_key(atom: Atom, binding: dict) -> tuple[tuple[int, ...], tuple]:
    positions, key = [], []
    for p, t in enumerate(atom.terms):
        if isinstance(t, Var):
            if t.name in binding:
                positions.append(p)
                key.append(binding[t.name])
        elif not isinstance(t, (Wildcard, Substr)):
            positions.append(p)
            key.append(t)
    return tuple(positions), tuple(key)


def _match(atom: Atom, tup: tuple, binding: dict) -> Optional[dict]:
    nb = binding
    for t, v in zip(atom.terms, tup):
        if isinstance(t, Var):
            cur = nb.get(t.name, _MISSING)
            if cur is _MISSING:
                if nb is binding:
                    nb = dict(binding)
                nb[t.name] = v
            elif cur != v:
                return None
        elif isinstance(t, Wildcard):
            continue
        elif isinstance(t, Substr):
            continue
        elif t != v:
            return None
    return nb


_MISSING = object()


# --------------------------------------------------------------------------- evaluation


def _init(program: Program, facts: dict[str, Iterable[tuple]]) -> Facts:
    data: Facts = {name: set() for name in program.relations}
    for name, tuples in facts.items():
        rel = program.relations.get(name)
        if rel is None:
            # facts for relations no rule mentions are carried through untouched
            data[name] = {tuple(t) for t in tuples}
            continue
        if rel.kind == "intensional" and not tuples:
            continue
        for t in tuples:
            t = tuple(t)
            if len(t) != rel.arity:
                raise DatalogError(f"fact {t!r} has arity {len(t)}, {name} expects {rel.arity}")
            data[name].add(t)
    for r in program.rules:
        if not r.body:
            data[r.head.relation].add(tuple(r.head.terms))
    return data


def _count(data: Facts) -> int:
    return sum(len(v) for v in data.values())


def _check_ceiling(data: Facts, ceiling: int):
    if _count(data) > ceiling:
        raise DatalogOverflow(f"tuple count exceeded ceiling of {ceiling}")


def evaluate_fixpoint(program: Program, facts: dict[str, Iterable[tuple]],
                      ceiling: int = DEFAULT_CEILING) -> Facts:
    """Semi-naive bottom-up evaluation, stratum by stratum."""
    if not program.strata and program.rules:
        stratify(program)
    data = _init(program, facts)
    for rules, rels in zip(program.strata, program.stratum_relations):
        rels_set = set(rels)
        body_rules = [r for r in rules if r.body]
        recursive = [r for r in body_rules
                     if any(a.relation in rels_set for a in r.positive_atoms())]
        # first round: every rule against the full relations
        index = _Index(data)
        delta: dict[str, set] = defaultdict(set)
        for r in body_rules:
            for t in _eval_rule(r, index):
                if t not in data[r.head.relation]:
                    delta[r.head.relation].add(t)
        for rel, ts in delta.items():
            data[rel] |= ts
        _check_ceiling(data, ceiling)
        while any(delta.values()):
            index = _Index(data)
            new: dict[str, set] = defaultdict(set)
            for r in recursive:
                pos = [a for a in _plan(r) if isinstance(a, Atom) and not a.negated]
                for k, a in enumerate(pos):
                    if a.relation not in rels_set or not delta.get(a.relation):
                        continue
                    for t in _eval_rule(r, index, k, delta[a.relation]):
                        if t not in data[r.head.relation]:
                            new[r.head.relation].add(t)
            for rel, ts in new.items():
                data[rel] |= ts
            _check_ceiling(data, ceiling)
            delta = new
    return data


def evaluate_naive(program: Program, facts: dict[str, Iterable[tuple]],
                   ceiling: int = DEFAULT_CEILING) -> Facts:
    """Reference evaluator: re-derive everything until nothing changes."""
    if not program.strata and program.rules:
        stratify(program)
    data = _init(program, facts)
    for rules in program.strata:
        body_rules = [r for r in rules if r.body]
        changed = True
        while changed:
            changed = False
            index = _Index(data)
            derived = [(r.head.relation, _eval_rule(r, index)) for r in body_rules]
            for rel, ts in derived:
                if not ts <= data[rel]:
                    data[rel] |= ts
                    changed = True
            _check_ceiling(data, ceiling)
    return data


def _sort_key(t: tuple):
    return tuple((0, v, "") if isinstance(v, int) else (1, 0, v) for v in t)


def query(results: Facts, relation: str, pattern: Optional[tuple] = None) -> list[tuple]:
    """Tuples of ``relation`` matching ``pattern`` (``None`` or ``"_"`` are wildcards),
    sorted deterministically."""
    if relation not in results:
        raise UnknownRelation(f"unknown relation {relation!r}")
    rows = results[relation]
    if pattern is not None:
        pat = [None if (p is None or p == "_" or p is WILD) else p for p in pattern]
        rows = [t for t in rows
                if len(t) == len(pat) and all(p is None or p == v for p, v in zip(pat, t))]
    return sorted(rows, key=_sort_key)
