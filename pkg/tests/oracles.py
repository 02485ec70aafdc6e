"""Independent test oracles.

Nothing here reuses the evaluation code under test: expressions are evaluated by
a separate bit-vector interpreter, Datalog by brute-force substitution over the
active domain, and program verdicts by the concrete interpreter.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace

import numpy as np

from stase.harness import build_ech, instrument
from stase.symexec import expr as E
from stase.symexec import explore_segment, interpret_concrete

# --------------------------------------------------------------------------- bit-vectors


def _m(v: int, w: int) -> int:
    return v & ((1 << w) - 1)


def _s(v: int, w: int) -> int:
    v = _m(v, w)
    return v - (1 << w) if v >> (w - 1) else v


def bv_eval(n, env: dict) -> int:
    """Reference semantics of a SymExpr tree (SMT-LIB division conventions)."""
    op, w = n.op, n.width
    if op == "const":
        return n.val
    if op == "sym":
        return _m(env[n.val], w)
    a = [bv_eval(x, env) for x in n.args]
    if op == "not":
        return _m(~a[0], w)
    if op == "ite":
        return a[1] if a[0] else a[2]
    if op == "zext":
        return a[0]
    if op == "trunc":
        return _m(a[0], w)
    x, y = a
    aw = n.args[0].width
    if op == "add":
        return _m(x + y, w)
    if op == "sub":
        return _m(x - y, w)
    if op == "mul":
        return _m(x * y, w)
    if op == "udiv":
        return _m(-1, w) if y == 0 else x // y
    if op == "sdiv":
        sx, sy = _s(x, aw), _s(y, aw)
        if sy == 0:
            return 1 if sx < 0 else _m(-1, w)
        q = abs(sx) // abs(sy)
        return _m(-q if (sx < 0) != (sy < 0) else q, w)
    if op == "and":
        return x & y
    if op == "or":
        return x | y
    if op == "xor":
        return x ^ y
    if op == "eq":
        return int(x == y)
    if op == "ult":
        return int(x < y)
    if op == "ule":
        return int(x <= y)
    if op == "slt":
        return int(_s(x, aw) < _s(y, aw))
    if op == "sle":
        return int(_s(x, aw) <= _s(y, aw))
    raise ValueError(op)


_ARITH = ("add", "sub", "mul", "udiv", "sdiv", "and", "or", "xor")
_CMPS = ("eq", "ult", "ule", "slt", "sle")


def random_term(rng: random.Random, syms: list, w: int, depth: int, simplify: bool):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.6:
            cands = [s for s in syms if s.width == w]
            if cands:
                return rng.choice(cands)
        return E.const(rng.choice([0, 1, 2, 3, _m(-1, w), rng.getrandbits(w)]), w)
    r = rng.random()
    if r < 0.7:
        op = rng.choice(_ARITH)
        return E.mk(op, random_term(rng, syms, w, depth - 1, simplify),
                    random_term(rng, syms, w, depth - 1, simplify), simplify=simplify)
    if r < 0.8:
        return E.mk("not", random_term(rng, syms, w, depth - 1, simplify), simplify=simplify)
    if r < 0.9 and w > 1:
        narrow = rng.choice([x for x in (1, 4, 8) if x < w] or [1])
        inner = random_term(rng, syms, narrow, depth - 1, simplify)
        return E.mk("zext", inner, width=w, simplify=simplify)
    c = random_bool(rng, syms, depth - 1, simplify)
    return E.mk("ite", c, random_term(rng, syms, w, depth - 1, simplify),
                random_term(rng, syms, w, depth - 1, simplify), simplify=simplify)


def random_bool(rng: random.Random, syms: list, depth: int, simplify: bool):
    if depth <= 0 or rng.random() < 0.5:
        w = rng.choice(sorted({s.width for s in syms}))
        return E.mk(rng.choice(_CMPS), random_term(rng, syms, w, max(depth, 1), simplify),
                    random_term(rng, syms, w, max(depth, 1), simplify), simplify=simplify)
    op = rng.choice(("and", "or", "not"))
    if op == "not":
        return E.mk("not", random_bool(rng, syms, depth - 1, simplify), simplify=simplify)
    return E.mk(op, random_bool(rng, syms, depth - 1, simplify),
                random_bool(rng, syms, depth - 1, simplify), simplify=simplify)


def random_symbols(rng: random.Random, max_bits: int = 16) -> list:
    syms, bits = [], 0
    for k in range(rng.randint(1, 3)):
        w = rng.choice([1, 4, 8])
        if bits + w > max_bits:
            break
        syms.append(E.sym(f"v{k}", w))
        bits += w
    return syms


def assignments(widths: dict):
    names = sorted(widths)
    for vals in itertools.product(*(range(1 << widths[n]) for n in names)):
        yield dict(zip(names, vals))


def bv_eval_vec(n, env: dict, memo: dict) -> np.ndarray:
    """Vectorized twin of ``bv_eval`` for widths ≤ 32 (object-free uint64 lanes)."""
    if id(n) in memo:
        return memo[id(n)]
    op, w = n.op, n.width
    mw = np.uint64((1 << w) - 1)
    size = len(next(iter(env.values())))
    if op == "const":
        r = np.full(size, n.val, dtype=np.uint64)
    elif op == "sym":
        r = env[n.val] & mw
    else:
        a = [bv_eval_vec(x, env, memo) for x in n.args]
        aw = n.args[0].width
        if op == "not":
            r = ~a[0] & mw
        elif op == "ite":
            r = np.where(a[0] != 0, a[1], a[2])
        elif op == "zext":
            r = a[0]
        elif op == "trunc":
            r = a[0] & mw
        else:
            x, y = a
            sx = x.astype(np.int64) - ((x >> np.uint64(aw - 1)) & np.uint64(1)).astype(np.int64) * (1 << aw)
            sy = y.astype(np.int64) - ((y >> np.uint64(aw - 1)) & np.uint64(1)).astype(np.int64) * (1 << aw)
            if op == "add":
                r = (x + y) & mw
            elif op == "sub":
                r = (x - y) & mw
            elif op == "mul":
                r = (x * y) & mw
            elif op == "udiv":
                r = np.where(y == 0, mw, x // np.where(y == 0, np.uint64(1), y))
            elif op == "sdiv":
                safe = np.where(sy == 0, 1, sy)
                q = np.abs(sx) // np.abs(safe)
                q = np.where((sx < 0) != (sy < 0), -q, q)
                q = np.where(sy == 0, np.where(sx < 0, 1, int(mw)), q)
                r = q.astype(np.uint64) & mw
            elif op in ("and", "or", "xor"):
                r = {"and": x & y, "or": x | y, "xor": x ^ y}[op]
            else:
                r = {"eq": x == y, "ult": x < y, "ule": x <= y, "slt": sx < sy, "sle": sx <= sy}[op]
                r = r.astype(np.uint64)
    memo[id(n)] = r
    return r


def satisfying_set(c, widths: dict) -> set:
    """Assignments (sorted-name tuples) satisfying ``c`` by the reference semantics."""
    names = sorted(widths)
    grids = np.meshgrid(*(np.arange(1 << widths[n], dtype=np.uint64) for n in names), indexing="ij")
    env = {n: g.ravel() for n, g in zip(names, grids)}
    hits = np.nonzero(bv_eval_vec(c, env, {}))[0]
    return {tuple(int(env[n][k]) for n in names) for k in hits}


# --------------------------------------------------------------------------- Datalog


@dataclass
class RAtom:
    rel: str
    args: tuple  # ("?x" | constant | "_")
    neg: bool = False


@dataclass
class RRule:
    head: RAtom
    body: list
    cmps: list = field(default_factory=list)  # (op, lhs, rhs)


def _text_term(t) -> str:
    if isinstance(t, int):
        return str(t)
    if t.startswith("?") or t == "_":
        return t
    return f'"{t}"'


def rules_to_text(decls: dict, rules: list) -> str:
    lines = [f".decl {r}({', '.join(f'a{k}:symbol' for k in range(n))})" for r, n in sorted(decls.items())]
    for r in rules:
        body = [("!" if a.neg else "") + f"{a.rel}({', '.join(_text_term(t) for t in a.args)})" for a in r.body]
        body += [f"{_text_term(x)} {op} {_text_term(y)}" for op, x, y in r.cmps]
        lines.append(f"{r.head.rel}({', '.join(_text_term(t) for t in r.head.args)}) :- {', '.join(body)}.")
    return "\n".join(lines) + "\n"


def _match(args, tup, binding):
    b = dict(binding)
    for t, v in zip(args, tup):
        if t == "_":
            continue
        if isinstance(t, str) and t.startswith("?"):
            if t in b and b[t] != v:
                return None
            b[t] = v
        elif t != v:
            return None
    return b


def _val(t, b):
    return b[t] if isinstance(t, str) and t.startswith("?") else t


_CMP_FN = {"=": lambda x, y: x == y, "!=": lambda x, y: x != y, "<": lambda x, y: x < y,
           "<=": lambda x, y: x <= y}


def naive_datalog(rules: list, levels: dict, facts: dict) -> dict:
    """Evaluate level by level; each level iterates all rules to a fixpoint by plain substitution."""
    data = {k: set(v) for k, v in facts.items()}
    for r in rules:
        data.setdefault(r.head.rel, set())
        for a in r.body:
            data.setdefault(a.rel, set())
    for lvl in sorted(set(levels.values())):
        mine = [r for r in rules if levels[r.head.rel] == lvl]
        changed = True
        while changed:
            changed = False
            for r in mine:
                bindings = [{}]
                for a in (x for x in r.body if not x.neg):
                    bindings = [nb for b in bindings for t in data[a.rel]
                                if (nb := _match(a.args, t, b)) is not None]
                out = set()
                for b in bindings:
                    if any(_match(a.args, t, b) is not None for a in r.body if a.neg for t in data[a.rel]):
                        continue
                    if not all(_CMP_FN[op](_val(x, b), _val(y, b)) for op, x, y in r.cmps):
                        continue
                    out.add(tuple(_val(t, b) for t in r.head.args))
                if not out <= data[r.head.rel]:
                    data[r.head.rel] |= out
                    changed = True
    return data


def random_datalog(rng: random.Random):
    """Random stratified program: (decls, rules, levels, facts). ≤ 12 constants, ≤ 5 rules."""
    consts = [f"c{k}" for k in range(rng.randint(2, 12))]
    edb = {f"e{k}": rng.randint(1, 2) for k in range(rng.randint(1, 3))}
    idb_names = [f"p{k}" for k in range(rng.randint(1, 3))]
    idb = {n: rng.randint(1, 2) for n in idb_names}
    levels = {n: 0 for n in edb}
    for k, n in enumerate(idb_names):
        levels[n] = 1 + (k if rng.random() < 0.5 else 0)
    decls = {**edb, **idb}
    facts = {r: {tuple(rng.choice(consts) for _ in range(n)) for _ in range(rng.randint(0, 10))}
             for r, n in edb.items()}
    rules = []
    for _ in range(rng.randint(1, 5)):
        head = rng.choice(idb_names)
        lvl = levels[head]
        pos_rels = [r for r in decls if levels[r] <= lvl]
        neg_rels = [r for r in decls if levels[r] < lvl]
        vars_ = [f"?x{k}" for k in range(3)]
        body, bound = [], []
        for _ in range(rng.randint(1, 3)):
            r = rng.choice(pos_rels)
            args = []
            for _ in range(decls[r]):
                c = rng.random()
                if c < 0.7:
                    v = rng.choice(vars_)
                    args.append(v)
                    bound.append(v)
                elif c < 0.85:
                    args.append(rng.choice(consts))
                else:
                    args.append("_")
            body.append(RAtom(r, tuple(args)))
        bound = sorted(set(bound))
        if not bound:
            body.append(RAtom(pos_rels[0], tuple("?x0" for _ in range(decls[pos_rels[0]]))))
            bound = ["?x0"]
        if neg_rels and rng.random() < 0.4:
            r = rng.choice(neg_rels)
            body.append(RAtom(r, tuple(rng.choice(bound + consts) for _ in range(decls[r])), neg=True))
        cmps = []
        if rng.random() < 0.3:
            cmps.append((rng.choice(["=", "!=", "<", "<="]), rng.choice(bound), rng.choice(bound + consts)))
        head_args = tuple(rng.choice(bound) for _ in range(idb[head]))
        rules.append(RRule(RAtom(head, head_args), body, cmps))
    return decls, rules, levels, facts


# --------------------------------------------------------------------------- corpus sweeps


@dataclass
class HarnessCase:
    program: str
    m_ech: object  # module after ECH
    cfg: object
    peh: object
    seg: object
    result: object
    sig: object


def relevant_widths(result) -> dict:
    """Symbols constraining any recorded path; all other inputs cannot change a verdict."""
    widths: dict = {}
    for rec in list(result.violations) + list(result.covered) + list(result.faults):
        for c in rec.constraints:
            widths.update(c.free_symbols())
        a = getattr(rec, "assertion", None)
        if a is not None:
            widths.update(a.free_symbols())
    return dict(sorted(widths.items()))


def declared_inputs(seg) -> dict:
    """Every symbolic_intrinsic name in Θ with its width (pointers as 64)."""
    out = {}
    for f in seg.module.functions:
        for b in f.blocks:
            for i in b.instructions:
                if i.opcode == "symbolic_intrinsic":
                    out[i.sym_name] = getattr(i.type, "width", 64)
    return out


def run_concrete(seg, peh, inputs: dict):
    return interpret_concrete(seg.module, seg.entry, inputs, loop_bound=peh.default_loop_bound,
                              call_depth=peh.call_depth)


def fill_irrelevant(rng: random.Random, seg, relevant: dict, env: dict) -> dict:
    full = dict(env)
    for name, w in declared_inputs(seg).items():
        if name not in relevant:
            full[name] = rng.getrandbits(w)
    return full


def interesting_values(rng: random.Random, w: int) -> int:
    r = rng.random()
    if r < 0.15:
        return 0
    if r < 0.25:
        return (1 << w) - 1
    if r < 0.4:
        return rng.randint(0, 32)
    return rng.getrandbits(w)


def unstubbed(case: HarnessCase):
    return instrument(case.m_ech, replace(case.peh, stubs=()))


def np_satisfying(c, widths: dict) -> set:
    """Assignments (sorted-name tuples) satisfying ``c``, via the vectorized evaluator."""
    names = sorted(widths)
    total = sum(widths.values())
    size = 1 << total
    idx = np.arange(size, dtype=np.uint64)
    env, shift = {}, 0
    for n in names:
        env[n] = (idx >> np.uint64(shift)) & np.uint64((1 << widths[n]) - 1)
        shift += widths[n]
    hits = np.nonzero(E.evaluate_np(c, env, size))[0] if total else (np.array([0]) if E.evaluate(c, {}) else [])
    return {tuple(int(env[n][k]) for n in names) for k in hits}


def explore_case(seg, peh):
    return explore_segment(seg, peh)


def build_ech_module(m, ech):
    return build_ech(m, ech) if ech is not None else m
