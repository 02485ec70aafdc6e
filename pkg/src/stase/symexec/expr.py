"""Hash-consed bitvector expressions with construction-time simplification.

Booleans are width-1 bitvectors. ``ne``/``uge``/``ugt`` (and signed variants)
are normalized into ``not``/``ule``/``ult`` with swapped operands so that
syntactically different but equivalent comparisons share one node.

Division by zero follows the SMT-LIB convention so that expressions are total:
``x udiv 0 = all-ones``; ``x sdiv 0 = 1`` if ``x`` is negative, else all-ones.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Optional

import numpy as np

BINARY = ("add", "sub", "mul", "udiv", "sdiv", "and", "or", "xor")
COMPARE = ("eq", "ult", "ule", "slt", "sle")
COMMUTATIVE = ("add", "mul", "and", "or", "xor", "eq")


def mask(w: int) -> int:
    return (1 << w) - 1


def to_signed(v: int, w: int) -> int:
    return v - (1 << w) if v >> (w - 1) & 1 else v


class SymExpr:
    __slots__ = ("op", "args", "width", "val", "h", "_free", "__weakref__")

    def __init__(self, op: str, args: tuple, width: int, val):
        self.op = op
        self.args = args
        self.width = width
        self.val = val
        digest = hashlib.blake2b(digest_size=8)
        digest.update(f"{op}|{width}|{val}|".encode())
        for a in args:
            digest.update(a.h.to_bytes(8, "little"))
        self.h = int.from_bytes(digest.digest(), "little")
        self._free = None

    def __repr__(self) -> str:
        return f"SymExpr({to_text(self)})"

    def __lt__(self, other: "SymExpr") -> bool:
        return self.h < other.h

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def is_true(self) -> bool:
        return self.op == "const" and self.width == 1 and self.val == 1

    @property
    def is_false(self) -> bool:
        return self.op == "const" and self.width == 1 and self.val == 0

    def free_symbols(self) -> dict[str, int]:
        if self._free is None:
            out: dict[str, int] = {}
            for n in postorder(self):
                if n.op == "sym":
                    out[n.val] = n.width
            self._free = dict(sorted(out.items()))
        return self._free


_TABLE: dict[tuple, SymExpr] = {}


def _intern(op: str, args: tuple, width: int, val=None) -> SymExpr:
    key = (op, width, val, tuple(id(a) for a in args))
    n = _TABLE.get(key)
    if n is None:
        n = SymExpr(op, args, width, val)
        _TABLE[key] = n
    return n


def postorder(root: SymExpr) -> list[SymExpr]:
    """Children-first order of the distinct nodes below ``root`` (iterative)."""
    out, seen, stack = [], set(), [(root, False)]
    while stack:
        n, done = stack.pop()
        if done:
            out.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        for a in reversed(n.args):
            if id(a) not in seen:
                stack.append((a, False))
    return out


# --------------------------------------------------------------------------- constructors


def const(v: int, w: int) -> SymExpr:
    return _intern("const", (), w, v & mask(w))


def sym(name: str, w: int) -> SymExpr:
    return _intern("sym", (), w, name)


TRUE = const(1, 1)
FALSE = const(0, 1)


def boolean(b: bool) -> SymExpr:
    return TRUE if b else FALSE


def _fold(op: str, a: int, b: int, w: int) -> int:
    m = mask(w)
    if op == "add":
        return (a + b) & m
    if op == "sub":
        return (a - b) & m
    if op == "mul":
        return (a * b) & m
    if op == "udiv":
        return m if b == 0 else a // b
    if op == "sdiv":
        sa, sb = to_signed(a, w), to_signed(b, w)
        if sb == 0:
            return 1 if sa < 0 else m
        q = abs(sa) // abs(sb)
        return (-q if (sa < 0) != (sb < 0) else q) & m
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "eq":
        return int(a == b)
    if op == "ult":
        return int(a < b)
    if op == "ule":
        return int(a <= b)
    if op == "slt":
        return int(to_signed(a, w) < to_signed(b, w))
    if op == "sle":
        return int(to_signed(a, w) <= to_signed(b, w))
    raise ValueError(op)


def _order(a: SymExpr, b: SymExpr) -> tuple[SymExpr, SymExpr]:
    # constants last, otherwise by stable structural hash
    if a.is_const and not b.is_const:
        return b, a
    if b.is_const and not a.is_const:
        return a, b
    return (a, b) if a.h <= b.h else (b, a)


def mk(op: str, *args, width: Optional[int] = None, simplify: bool = True) -> SymExpr:
    """Generic constructor; ``simplify=False`` builds the raw node (used by tests)."""
    if op == "const":
        return const(args[0], width)
    if op == "sym":
        return sym(args[0], width)
    if not simplify:
        w = _result_width(op, args, width)
        return _intern(op, tuple(args), w, width if op in ("zext", "trunc") else None)
    return {
        "not": lambda: not_(args[0]),
        "ite": lambda: ite(*args),
        "zext": lambda: zext(args[0], width),
        "trunc": lambda: trunc(args[0], width),
    }.get(op, lambda: binop(op, args[0], args[1]))()


def _result_width(op, args, width) -> int:
    if op in COMPARE:
        return 1
    if op in ("zext", "trunc"):
        return width
    if op == "ite":
        return args[1].width
    return args[0].width


def binop(op: str, a: SymExpr, b: SymExpr) -> SymExpr:
    if a.width != b.width:
        raise ValueError(f"width mismatch in {op}: {a.width} vs {b.width}")
    w = a.width
    if a.is_const and b.is_const:
        r = _fold(op, a.val, b.val, w)
        return const(r, 1 if op in COMPARE else w)
    if op in COMMUTATIVE:
        a, b = _order(a, b)
    m = mask(w)
    if op == "add":
        if b.is_const and b.val == 0:
            return a
        if b.is_const and a.op == "add" and a.args[1].is_const:
            return binop("add", a.args[0], const(a.args[1].val + b.val, w))
    elif op == "sub":
        if b.is_const:
            return a if b.val == 0 else binop("add", a, const(-b.val, w))
        if a is b:
            return const(0, w)
    elif op == "mul":
        if b.is_const and b.val == 0:
            return b
        if b.is_const and b.val == 1:
            return a
    elif op == "udiv":
        if b.is_const and b.val == 1:
            return a
    elif op == "and":
        if b.is_const:
            if b.val == 0:
                return b
            if b.val == m:
                return a
        if a is b:
            return a
        if w == 1 and (a is not_(b) or b is not_(a)):
            return FALSE
    elif op == "or":
        if b.is_const:
            if b.val == 0:
                return a
            if b.val == m:
                return b
        if a is b:
            return a
        if w == 1 and (a is not_(b) or b is not_(a)):
            return TRUE
    elif op == "xor":
        if b.is_const and b.val == 0:
            return a
        if a is b:
            return const(0, w)
    elif op == "eq":
        if a is b:
            return TRUE
        if w == 1 and b.is_const:
            return a if b.val == 1 else not_(a)
        if b.is_const and a.op == "add" and a.args[1].is_const:
            return binop("eq", a.args[0], const(b.val - a.args[1].val, w))
        if b.is_const and a.op == "zext":
            inner = a.args[0]
            if b.val > mask(inner.width):
                return FALSE
            return binop("eq", inner, const(b.val, inner.width))
    elif op == "ult":
        if a is b or (b.is_const and b.val == 0):
            return FALSE
        if a.is_const and a.val == m:
            return FALSE
    elif op == "ule":
        if a is b or (a.is_const and a.val == 0) or (b.is_const and b.val == m):
            return TRUE
    elif op == "slt":
        if a is b:
            return FALSE
    elif op == "sle":
        if a is b:
            return TRUE
    return _intern(op, (a, b), 1 if op in COMPARE else w)


def not_(a: SymExpr) -> SymExpr:
    if a.is_const:
        return const(~a.val, a.width)
    if a.op == "not":
        return a.args[0]
    if a.width == 1:
        swap = {"ult": "ule", "ule": "ult", "slt": "sle", "sle": "slt"}
        if a.op in swap:
            return binop(swap[a.op], a.args[1], a.args[0])
    return _intern("not", (a,), a.width)


def ite(c: SymExpr, a: SymExpr, b: SymExpr) -> SymExpr:
    if c.width != 1 or a.width != b.width:
        raise ValueError("ite width mismatch")
    if c.is_const:
        return a if c.val else b
    if a is b:
        return a
    if a.width == 1 and a.is_const and b.is_const:
        return c if a.val else not_(c)
    return _intern("ite", (c, a, b), a.width)


def zext(a: SymExpr, w: int) -> SymExpr:
    if w == a.width:
        return a
    if w < a.width:
        raise ValueError("zext to narrower width")
    if a.is_const:
        return const(a.val, w)
    return _intern("zext", (a,), w, w)


def trunc(a: SymExpr, w: int) -> SymExpr:
    if w == a.width:
        return a
    if w > a.width:
        raise ValueError("trunc to wider width")
    if a.is_const:
        return const(a.val, w)
    if a.op == "zext":
        inner = a.args[0]
        if inner.width == w:
            return inner
        if inner.width < w:
            return zext(inner, w)
    return _intern("trunc", (a,), w, w)


def resize(a: SymExpr, w: int) -> SymExpr:
    return zext(a, w) if w >= a.width else trunc(a, w)


# convenience wrappers
def add(a, b): return binop("add", a, b)          # noqa: E704
def sub(a, b): return binop("sub", a, b)          # noqa: E704
def mul(a, b): return binop("mul", a, b)          # noqa: E704
def eq(a, b): return binop("eq", a, b)            # noqa: E704
def ne(a, b): return not_(binop("eq", a, b))      # noqa: E704
def ult(a, b): return binop("ult", a, b)          # noqa: E704
def ule(a, b): return binop("ule", a, b)          # noqa: E704
def slt(a, b): return binop("slt", a, b)          # noqa: E704
def sle(a, b): return binop("sle", a, b)          # noqa: E704


def and_(*xs: SymExpr) -> SymExpr:
    out = TRUE
    for x in xs:
        out = binop("and", out, x)
    return out


def or_(*xs: SymExpr) -> SymExpr:
    out = FALSE
    for x in xs:
        out = binop("or", out, x)
    return out


def icmp(pred: str, a: SymExpr, b: SymExpr) -> SymExpr:
    return {
        "eq": lambda: eq(a, b), "ne": lambda: ne(a, b),
        "ult": lambda: ult(a, b), "ule": lambda: ule(a, b),
        "ugt": lambda: ult(b, a), "uge": lambda: ule(b, a),
        "slt": lambda: slt(a, b), "sle": lambda: sle(a, b),
        "sgt": lambda: slt(b, a), "sge": lambda: sle(b, a),
    }[pred]()


def conjuncts(e: SymExpr) -> list[SymExpr]:
    """Flatten a top-level conjunction."""
    if e.width == 1 and e.op == "and":
        return conjuncts(e.args[0]) + conjuncts(e.args[1])
    return [e]


# --------------------------------------------------------------------------- rewriting


def substitute(e: SymExpr, binding: dict[str, SymExpr]) -> SymExpr:
    """Replace symbols by expressions, re-simplifying bottom-up."""
    if not binding or not (set(e.free_symbols()) & set(binding)):
        return e
    memo: dict[int, SymExpr] = {}
    for n in postorder(e):
        if n.op == "sym":
            memo[id(n)] = binding.get(n.val, n)
        elif n.op == "const":
            memo[id(n)] = n
        else:
            args = [memo[id(a)] for a in n.args]
            memo[id(n)] = rebuild(n, args)
    return memo[id(e)]


def rebuild(n: SymExpr, args: list[SymExpr]) -> SymExpr:
    if n.op == "not":
        return not_(args[0])
    if n.op == "ite":
        return ite(*args)
    if n.op == "zext":
        return zext(args[0], n.width)
    if n.op == "trunc":
        return trunc(args[0], n.width)
    return binop(n.op, args[0], args[1])


def simplify(e: SymExpr) -> SymExpr:
    """Rebuild through the simplifying constructors (no-op for nodes built by them)."""
    memo: dict[int, SymExpr] = {}
    for n in postorder(e):
        if n.op in ("sym", "const"):
            memo[id(n)] = n
        else:
            memo[id(n)] = rebuild(n, [memo[id(a)] for a in n.args])
    return memo[id(e)]


# --------------------------------------------------------------------------- evaluation


def evaluate(e: SymExpr, env: dict[str, int], default: Optional[int] = None) -> int:
    """Concrete value of ``e`` under ``env`` (pure Python reference evaluator)."""
    vals: dict[int, int] = {}
    for n in postorder(e):
        if n.op == "const":
            v = n.val
        elif n.op == "sym":
            if n.val in env:
                v = env[n.val] & mask(n.width)
            elif default is not None:
                v = default
            else:
                raise KeyError(f"no value for symbol {n.val!r}")
        elif n.op == "not":
            v = ~vals[id(n.args[0])] & mask(n.width)
        elif n.op == "ite":
            c, a, b = (vals[id(x)] for x in n.args)
            v = a if c else b
        elif n.op == "zext":
            v = vals[id(n.args[0])]
        elif n.op == "trunc":
            v = vals[id(n.args[0])] & mask(n.width)
        else:
            v = _fold(n.op, vals[id(n.args[0])], vals[id(n.args[1])], n.args[0].width)
        vals[id(n)] = v
    return vals[id(e)]


def _np_mask(w: int):
    return np.uint64(mask(w))


def evaluate_np(e: SymExpr, env: dict[str, np.ndarray], size: int) -> np.ndarray:
    """Vectorized evaluation: ``env`` maps symbols to uint64 arrays of length ``size``."""
    vals: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        for n in postorder(e):
            w = n.width
            m = _np_mask(w)
            if n.op == "const":
                v = np.full(size, n.val, dtype=np.uint64)
            elif n.op == "sym":
                v = env.get(n.val)
                v = np.zeros(size, dtype=np.uint64) if v is None else v.astype(np.uint64) & m
            elif n.op == "not":
                v = ~vals[id(n.args[0])] & m
            elif n.op == "ite":
                c, a, b = (vals[id(x)] for x in n.args)
                v = np.where(c != 0, a, b)
            elif n.op == "zext":
                v = vals[id(n.args[0])]
            elif n.op == "trunc":
                v = vals[id(n.args[0])] & m
            else:
                a, b = vals[id(n.args[0])], vals[id(n.args[1])]
                aw = n.args[0].width
                am = _np_mask(aw)
                op = n.op
                if op == "add":
                    v = (a + b) & am
                elif op == "sub":
                    v = (a - b) & am
                elif op == "mul":
                    v = (a * b) & am
                elif op == "udiv":
                    zero = b == 0
                    v = np.where(zero, am, a // np.where(zero, np.uint64(1), b))
                elif op == "sdiv":
                    v = _np_sdiv(a, b, aw)
                elif op == "and":
                    v = a & b
                elif op == "or":
                    v = a | b
                elif op == "xor":
                    v = a ^ b
                elif op == "eq":
                    v = (a == b).astype(np.uint64)
                elif op == "ult":
                    v = (a < b).astype(np.uint64)
                elif op == "ule":
                    v = (a <= b).astype(np.uint64)
                elif op in ("slt", "sle"):
                    sb = np.uint64(1 << (aw - 1))
                    sa, sbb = a ^ sb, b ^ sb
                    v = ((sa < sbb) if op == "slt" else (sa <= sbb)).astype(np.uint64)
                else:  # pragma: no cover
                    raise ValueError(op)
            vals[id(n)] = v
    return vals[id(e)]


def _np_sdiv(a: np.ndarray, b: np.ndarray, w: int) -> np.ndarray:
    m = _np_mask(w)
    sbit = np.uint64(1 << (w - 1))
    neg_a = (a & sbit) != 0
    neg_b = (b & sbit) != 0
    abs_a = np.where(neg_a, (~a + np.uint64(1)) & m, a)
    abs_b = np.where(neg_b, (~b + np.uint64(1)) & m, b)
    zero = b == 0
    q = abs_a // np.where(zero, np.uint64(1), abs_b)
    q = np.where(neg_a != neg_b, (~q + np.uint64(1)) & m, q)
    return np.where(zero, np.where(neg_a, np.uint64(1), m), q)


# --------------------------------------------------------------------------- rendering

_INFIX = {"add": "+", "sub": "-", "mul": "*", "udiv": "/", "sdiv": "/s", "and": "&", "or": "|",
          "xor": "^", "eq": "==", "ult": "<", "ule": "<=", "slt": "<s", "sle": "<=s"}
_BOOL_INFIX = {"and": "&&", "or": "||"}


def to_text(e: SymExpr) -> str:
    """Readable infix rendering; symbols appear by name."""
    memo: dict[int, str] = {}
    for n in postorder(e):
        if n.op == "const":
            s = str(n.val) if n.width > 1 else ("true" if n.val else "false")
        elif n.op == "sym":
            s = n.val
        elif n.op == "not":
            a = n.args[0]
            if n.width == 1 and a.op == "eq":
                s = f"({memo[id(a.args[0])]} != {memo[id(a.args[1])]})"
            else:
                s = ("!" if n.width == 1 else "~") + memo[id(a)]
        elif n.op == "ite":
            s = f"({memo[id(n.args[0])]} ? {memo[id(n.args[1])]} : {memo[id(n.args[2])]})"
        elif n.op == "zext":
            s = memo[id(n.args[0])]
        elif n.op == "trunc":
            s = f"trunc{n.width}({memo[id(n.args[0])]})"
        else:
            op = _BOOL_INFIX.get(n.op, _INFIX[n.op]) if n.width == 1 else _INFIX[n.op]
            s = f"({memo[id(n.args[0])]} {op} {memo[id(n.args[1])]})"
        memo[id(n)] = s
    out = memo[id(e)]
    return out[1:-1] if out.startswith("(") and _balanced(out[1:-1]) else out


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


def to_json(e: SymExpr):
    memo: dict[int, object] = {}
    for n in postorder(e):
        if n.op == "const":
            memo[id(n)] = {"const": n.val, "width": n.width}
        elif n.op == "sym":
            memo[id(n)] = {"sym": n.val, "width": n.width}
        else:
            memo[id(n)] = {"op": n.op, "width": n.width, "args": [memo[id(a)] for a in n.args]}
    return memo[id(e)]


def from_json(d) -> SymExpr:
    if "const" in d:
        return const(d["const"], d["width"])
    if "sym" in d:
        return sym(d["sym"], d["width"])
    args = [from_json(a) for a in d["args"]]
    op = d["op"]
    if op == "not":
        return not_(args[0])
    if op == "ite":
        return ite(*args)
    if op in ("zext", "trunc"):
        return mk(op, args[0], width=d["width"])
    return binop(op, args[0], args[1])


def total_bits(exprs: Iterable[SymExpr]) -> int:
    syms: dict[str, int] = {}
    for e in exprs:
        syms.update(e.free_symbols())
    return sum(syms.values())
