"""Built-in decision procedure for width-1 SymExpr constraints.

Pipeline: simplification and equality propagation, interval pruning, exhaustive
numpy enumeration when the free bits fit the budget, a propositional (DPLL)
check that proves unsatisfiability from the boolean skeleton, and a boundary/random
candidate search for models. Beyond that the query is written as SMT-LIB2 and
handed to an external solver when one is configured, else reported unknown.
"""

from __future__ import annotations

import itertools
import os
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as E
from .expr import SymExpr, mask

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"
DEFAULT_BITS = 24
_CHUNK = 1 << 20


class SolverInvariantError(AssertionError):
    """A model returned as SAT failed to re-evaluate to true."""


@dataclass
class SolveResult:
    status: str
    model: dict = field(default_factory=dict)
    method: str = ""
    smtlib: Optional[str] = None

    @property
    def sat(self) -> bool:
        return self.status == SAT

    @property
    def unsat(self) -> bool:
        return self.status == UNSAT


@dataclass
class SolverConfig:
    bits: int = DEFAULT_BITS
    external: Optional[str] = None
    seed: int = 0
    candidate_limit: int = 1 << 18
    smtlib_dir: Optional[str] = None

    @classmethod
    def from_env(cls, **kw) -> "SolverConfig":
        cfg = cls(**kw)
        if cfg.external is None:
            cfg.external = os.environ.get("STASE_EXTERNAL_SOLVER") or None
        return cfg


class Solver:
    def __init__(self, cfg: Optional[SolverConfig] = None):
        self.cfg = cfg or SolverConfig()
        self.cache: dict[int, SolveResult] = {}
        self.queries = 0
        self.smtlib_scripts: list[str] = []

    def check(self, *parts: SymExpr) -> SolveResult:
        return self.solve(E.and_(*parts))

    def solve(self, c: SymExpr) -> SolveResult:
        if c.width != 1:
            raise ValueError("constraint must be width 1")
        hit = self.cache.get(id(c))
        if hit is not None and hit is not _PENDING:
            return hit
        self.queries += 1
        res = self._solve(c)
        if res.sat:
            full = {n: res.model.get(n, 0) & mask(w) for n, w in c.free_symbols().items()}
            if E.evaluate(c, full) != 1:
                raise SolverInvariantError(f"model does not satisfy constraint ({res.method})")
            res.model = full
        elif res.status == UNKNOWN and res.smtlib:
            self.smtlib_scripts.append(res.smtlib)
        self.cache[id(c)] = res
        return res

    # ------------------------------------------------------------------ pipeline
    def _solve(self, c: SymExpr) -> SolveResult:
        c, fixed = propagate(c)
        if c is None:
            return SolveResult(UNSAT, method="propagation")
        if c.is_const:
            if c.val:
                return SolveResult(SAT, _close(fixed, {}), "simplification")
            return SolveResult(UNSAT, method="simplification")
        free = c.free_symbols()
        bounds = intervals(c)
        if bounds is None:
            return SolveResult(UNSAT, method="intervals")
        space = _space_bits(free, bounds)
        if space <= self.cfg.bits:
            model = enumerate_models(c, free, bounds)
            if model is None:
                return SolveResult(UNSAT, method="enumeration")
            return SolveResult(SAT, _close(fixed, model), "enumeration")
        if not propositionally_sat(c):
            return SolveResult(UNSAT, method="dpll")
        model = candidate_search(c, free, bounds, self.cfg)
        if model is not None:
            return SolveResult(SAT, _close(fixed, model), "candidates")
        script = to_smtlib(c)
        if self.cfg.external:
            from .smtlib import run_external

            status, model = run_external(self.cfg.external, script, free)
            if status == SAT and E.evaluate(c, {**{n: 0 for n in free}, **model}) == 1:
                return SolveResult(SAT, _close(fixed, model), "external")
            if status == UNSAT:
                return SolveResult(UNSAT, method="external")
        return SolveResult(UNKNOWN, method="budget", smtlib=script)


_PENDING = object()


def _close(fixed: dict[str, SymExpr], model: dict[str, int]) -> dict[str, int]:
    """Extend ``model`` with values of symbols eliminated by propagation."""
    out = dict(model)
    # eliminated symbols may depend on each other; resolve in elimination order
    for name, value in fixed.items():
        out[name] = E.evaluate(value, out, default=0)
    return out


# --------------------------------------------------------------------------- simplification


def propagate(c: SymExpr) -> tuple[Optional[SymExpr], dict[str, SymExpr]]:
    """Equality propagation over top-level conjuncts ``x == e`` (``x`` not in ``e``).

    Returns the residual constraint (``None`` when found contradictory) and the
    eliminated symbols in elimination order.
    """
    fixed: dict[str, SymExpr] = {}
    for _ in range(64):
        if c.is_const:
            break
        chosen = None
        for part in E.conjuncts(c):
            cand = _definition(part)
            if cand is not None:
                chosen = cand
                break
        if chosen is None:
            break
        name, value = chosen
        fixed[name] = value
        c = E.substitute(c, {name: value})
    if c.is_false:
        return None, fixed
    # later definitions may mention earlier-eliminated names only through substitution,
    # so resolve in reverse when closing the model
    return c, dict(reversed(list(fixed.items())))


def _definition(part: SymExpr):
    if part.op == "sym" and part.width == 1:
        return part.val, E.TRUE
    if part.op == "not" and part.args[0].op == "sym" and part.width == 1:
        return part.args[0].val, E.FALSE
    if part.op != "eq":
        return None
    a, b = part.args
    for x, v in ((a, b), (b, a)):
        if x.op == "sym" and x.val not in v.free_symbols():
            return x.val, v
    return None


def intervals(c: SymExpr) -> Optional[dict[str, tuple[int, int]]]:
    """Unsigned [lo, hi] bounds implied by top-level comparisons against constants."""
    free = c.free_symbols()
    out = {n: (0, mask(w)) for n, w in free.items()}
    for part in E.conjuncts(c):
        if part.op not in ("ult", "ule"):
            continue
        a, b = part.args
        strict = part.op == "ult"
        if a.op == "sym" and b.is_const:
            lo, hi = out[a.val]
            out[a.val] = (lo, min(hi, b.val - 1 if strict else b.val))
        elif b.op == "sym" and a.is_const:
            lo, hi = out[b.val]
            out[b.val] = (max(lo, a.val + 1 if strict else a.val), hi)
    for lo, hi in out.values():
        if lo > hi:
            return None
    return out


def _space_bits(free: dict[str, int], bounds) -> int:
    total = 0
    for n in free:
        lo, hi = bounds[n]
        total += max(0, (hi - lo).bit_length())
    return total


# --------------------------------------------------------------------------- enumeration


def enumerate_models(c: SymExpr, free: dict[str, int], bounds) -> Optional[dict[str, int]]:
    """Smallest (in mixed-radix order) satisfying assignment, or ``None``."""
    names = list(free)
    spans = [bounds[n][1] - bounds[n][0] + 1 for n in names]
    total = 1
    for s in spans:
        total *= s
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.uint64)
        env = {}
        rest = idx
        for n, s in zip(names, spans):
            env[n] = rest % np.uint64(s) + np.uint64(bounds[n][0])
            rest = rest // np.uint64(s)
        ok = E.evaluate_np(c, env, len(idx))
        hits = np.nonzero(ok)[0]
        if len(hits):
            k = int(hits[0])
            return {n: int(env[n][k]) for n in names}
    return None


def all_models(c: SymExpr, names_widths: dict[str, int]) -> set[tuple]:
    """Every satisfying assignment over ``names_widths`` (order given), as value tuples."""
    names = list(names_widths)
    total = 1 << sum(names_widths.values())
    out: set[tuple] = set()
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.uint64)
        env = {}
        shift = 0
        for n in names:
            w = names_widths[n]
            env[n] = (idx >> np.uint64(shift)) & np.uint64(mask(w))
            shift += w
        ok = E.evaluate_np(c, env, len(idx))
        for k in np.nonzero(ok)[0]:
            out.add(tuple(int(env[n][k]) for n in names))
    return out


# --------------------------------------------------------------------------- DPLL


def _tseitin(c: SymExpr):
    """CNF clauses (lists of signed ints) for the boolean skeleton of ``c``."""
    ids: dict[int, int] = {}
    clauses: list[list[int]] = []

    def var(n: SymExpr) -> int:
        if id(n) not in ids:
            ids[id(n)] = len(ids) + 1
        return ids[id(n)]

    for n in E.postorder(c):
        if n.width != 1:
            continue
        v = var(n)
        if n.op == "const":
            clauses.append([v] if n.val else [-v])
        elif n.op == "not" :
            a = var(n.args[0])
            clauses += [[-v, -a], [v, a]]
        elif n.op == "and":
            a, b = var(n.args[0]), var(n.args[1])
            clauses += [[-v, a], [-v, b], [v, -a, -b]]
        elif n.op == "or":
            a, b = var(n.args[0]), var(n.args[1])
            clauses += [[v, -a], [v, -b], [-v, a, b]]
        elif n.op == "xor":
            a, b = var(n.args[0]), var(n.args[1])
            clauses += [[-v, a, b], [-v, -a, -b], [v, -a, b], [v, a, -b]]
        elif n.op == "ite":
            s, a, b = (var(x) for x in n.args)
            clauses += [[-v, -s, a], [-v, s, b], [v, -s, -a], [v, s, -b]]
        elif n.op == "eq" and n.args[0].width == 1:
            a, b = var(n.args[0]), var(n.args[1])
            clauses += [[-v, -a, b], [-v, a, -b], [v, a, b], [v, -a, -b]]
    clauses.append([var(c)])
    return clauses


def dpll(clauses: list[list[int]]) -> bool:
    """Plain DPLL with unit propagation (iterative, chronological backtracking)."""
    watch: dict[int, list[int]] = {}
    for k, cl in enumerate(clauses):
        for lit in cl:
            watch.setdefault(abs(lit), []).append(k)
    variables = sorted(watch)
    assign: dict[int, bool] = {}

    def value(lit):
        v = assign.get(abs(lit))
        return None if v is None else (v if lit > 0 else not v)

    def propagate(trail):
        changed = True
        while changed:
            changed = False
            for cl in clauses:
                unassigned, sat = [], False
                for lit in cl:
                    val = value(lit)
                    if val is True:
                        sat = True
                        break
                    if val is None:
                        unassigned.append(lit)
                if sat:
                    continue
                if not unassigned:
                    return False
                if len(unassigned) == 1:
                    lit = unassigned[0]
                    assign[abs(lit)] = lit > 0
                    trail.append(abs(lit))
                    changed = True
        return True

    stack: list[tuple[int, bool, list[int]]] = []
    trail: list[int] = []
    if not propagate(trail):
        return False
    while True:
        free = next((v for v in variables if v not in assign), None)
        if free is None:
            return True
        trail = [free]
        assign[free] = True
        stack.append((free, True, trail))
        while not propagate(trail):
            # backtrack to the most recent decision with an untried polarity
            while stack:
                v, first, tr = stack.pop()
                for x in tr:
                    assign.pop(x, None)
                if first:
                    trail = [v]
                    assign[v] = False
                    stack.append((v, False, trail))
                    break
            else:
                return False


def propositionally_sat(c: SymExpr) -> bool:
    return dpll(_tseitin(c))


# --------------------------------------------------------------------------- candidate search


def _constants(c: SymExpr) -> set[int]:
    return {n.val for n in E.postorder(c) if n.op == "const" and n.width > 1}


def _candidates(w: int, lo: int, hi: int, consts: set[int]) -> list[int]:
    m = mask(w)
    base = {0, 1, 2, m, m - 1, 1 << (w - 1), (1 << (w - 1)) - 1, lo, hi, lo + 1, hi - 1}
    for k in consts:
        base |= {k, k + 1, k - 1, m - k, (m - k + 1), k * 2, k // 2}
    return sorted(v & m for v in base if lo <= (v & m) <= hi)


def candidate_search(c: SymExpr, free: dict[str, int], bounds, cfg: SolverConfig):
    consts = _constants(c)
    names = list(free)
    # narrow symbols are enumerated fully, the rest draw from boundary candidates
    pools: list[np.ndarray] = []
    budget = cfg.candidate_limit
    size = 1
    for n in sorted(names, key=lambda n: (bounds[n][1] - bounds[n][0], n)):
        lo, hi = bounds[n]
        span = hi - lo + 1
        if size * span <= budget and span <= 1 << 16:
            vals = np.arange(lo, hi + 1, dtype=np.uint64)
        else:
            vals = np.array(_candidates(free[n], lo, hi, consts), dtype=np.uint64)
        pools.append((n, vals))
        size *= len(vals)
    if size <= cfg.candidate_limit * 4:
        model = _search_product(c, pools)
        if model is not None:
            return model
    rng = random.Random(cfg.seed)
    for _ in range(8):
        k = 1 << 14
        env = {}
        for n, vals in pools:
            picks = [int(vals[rng.randrange(len(vals))]) if rng.random() < 0.7
                     else rng.randint(bounds[n][0], bounds[n][1]) for _ in range(k)]
            env[n] = np.array(picks, dtype=np.uint64)
        ok = E.evaluate_np(c, env, k)
        hits = np.nonzero(ok)[0]
        if len(hits):
            j = int(hits[0])
            return {n: int(env[n][j]) for n in names}
    return None


def _search_product(c: SymExpr, pools) -> Optional[dict[str, int]]:
    names = [n for n, _ in pools]
    arrays = [v for _, v in pools]
    spans = [len(v) for v in arrays]
    total = 1
    for s in spans:
        total *= s
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.uint64)
        env = {}
        rest = idx
        for n, vals, s in zip(names, arrays, spans):
            env[n] = vals[(rest % np.uint64(s)).astype(np.int64)]
            rest = rest // np.uint64(s)
        ok = E.evaluate_np(c, env, len(idx))
        hits = np.nonzero(ok)[0]
        if len(hits):
            k = int(hits[0])
            return {n: int(env[n][k]) for n in names}
    return None


# --------------------------------------------------------------------------- SMT-LIB2


def to_smtlib(c: SymExpr) -> str:
    from .smtlib import to_smtlib as _emit

    return _emit(c)


def brute_force_status(c: SymExpr) -> str:
    """Reference SAT status by enumerating every assignment of the free symbols."""
    free = c.free_symbols()
    if sum(free.values()) > 24:
        raise ValueError("too many bits for brute force")
    if not free:
        return SAT if E.evaluate(c, {}) else UNSAT
    for values in itertools.product(*(range(1 << w) for w in free.values())):
        if E.evaluate(c, dict(zip(free, values))):
            return SAT
    return UNSAT
