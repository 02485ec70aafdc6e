"""Assertion expressions: the small boolean/arithmetic language carried by
``assert_intrinsic`` and by the assertion field of vulnerability descriptions.

Syntax (C-like)::

    expr  := or
    or    := and ('||' and)*
    and   := unary ('&&' unary)*
    unary := '!' unary | cmp
    cmp   := sum (CMP sum)?          CMP: == != < <= > >= <s <=s >s >=s
    sum   := prod (('+' | '-') prod)*
    prod  := atom (('*' | '/') atom)*
    atom  := INT | %name | @name | true | false | '(' expr ')' | NAME '(' args ')'

Unsuffixed orderings are unsigned; the ``s`` suffix makes them signed. Calls:
``addr(p)``, ``freed(p)``, ``lenof(p)``, ``objsize(p)``, ``offset(p)``,
``base(REGION)``, ``size(REGION)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class ExprSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class EConst:
    value: int


@dataclass(frozen=True)
class EBool:
    value: bool


@dataclass(frozen=True)
class EVar:
    sigil: str  # '%' or '@'
    name: str


@dataclass(frozen=True)
class EName:
    name: str


@dataclass(frozen=True)
class EBin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ENot:
    arg: "Expr"


@dataclass(frozen=True)
class ECall:
    fn: str
    args: tuple["Expr", ...]


Expr = Union[EConst, EBool, EVar, EName, EBin, ENot, ECall]

CALLS = ("addr", "freed", "lenof", "objsize", "offset", "base", "size")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=", "<s", "<=s", ">s", ">=s")
_TOKEN = re.compile(
    r"\s*(?:(?P<num>0x[0-9a-fA-F]+|-?\d+)|(?P<var>[%@][A-Za-z_.$][\w.$]*)"
    r"|(?P<op><=s|>=s|<s|>s|==|!=|<=|>=|&&|\|\||[<>+\-*/!(),])|(?P<name>[A-Za-z_]\w*))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ExprSyntaxError(f"expected {value or 'token'}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.or_()
        if self.i != len(self.toks):
            raise ExprSyntaxError(f"trailing input at token {self.peek()[1]!r}")
        return e

    def or_(self):
        e = self.and_()
        while self.peek()[1] == "||":
            self.take()
            e = EBin("||", e, self.and_())
        return e

    def and_(self):
        e = self.unary()
        while self.peek()[1] == "&&":
            self.take()
            e = EBin("&&", e, self.unary())
        return e

    def unary(self):
        if self.peek()[1] == "!":
            self.take()
            return ENot(self.unary())
        return self.cmp()

    def cmp(self):
        e = self.sum()
        if self.peek()[1] in CMP_OPS:
            op = self.take()[1]
            e = EBin(op, e, self.sum())
        return e

    def sum(self):
        e = self.prod()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            e = EBin(op, e, self.prod())
        return e

    def prod(self):
        e = self.atom()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            e = EBin(op, e, self.atom())
        return e

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return EConst(int(val, 0))
        if kind == "var":
            self.take()
            return EVar(val[0], val[1:])
        if val == "(":
            self.take()
            e = self.or_()
            self.take(")")
            return e
        if kind == "name":
            self.take()
            if val in ("true", "false"):
                return EBool(val == "true")
            if self.peek()[1] == "(":
                if val not in CALLS:
                    raise ExprSyntaxError(f"unknown function {val!r}")
                self.take("(")
                args = [self.or_()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.or_())
                self.take(")")
                return ECall(val, tuple(args))
            return EName(val)
        raise ExprSyntaxError(f"unexpected token {val!r}")


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


_PREC = {"||": 1, "&&": 2, **{op: 3 for op in CMP_OPS}, "+": 4, "-": 4, "*": 5, "/": 5}


def format_expr(e: Expr, parent: int = 0) -> str:
    """Canonical IR text; ``parse_expr(format_expr(e)) == e``."""
    if isinstance(e, EConst):
        return str(e.value)
    if isinstance(e, EBool):
        return "true" if e.value else "false"
    if isinstance(e, EVar):
        return f"{e.sigil}{e.name}"
    if isinstance(e, EName):
        return e.name
    if isinstance(e, ENot):
        return "!" + format_expr(e.arg, 6)
    if isinstance(e, ECall):
        return f"{e.fn}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    prec = _PREC[e.op]
    # left-assoc: right operand of equal precedence needs parens
    text = f"{format_expr(e.left, prec)} {e.op} {format_expr(e.right, prec + 1)}"
    if e.op in CMP_OPS:
        text = f"{format_expr(e.left, prec + 1)} {e.op} {format_expr(e.right, prec + 1)}"
    return f"({text})" if prec < parent else text


_DISPLAY_OPS = {"!=": "≠", "<s": "<", "<=s": "<=", ">s": ">", ">=s": ">="}


def display_expr(e: Expr, parent: int = 0) -> str:
    """Human-oriented rendering: sigils dropped, ``≠`` for inequality."""
    if isinstance(e, EVar):
        return e.name
    if isinstance(e, ENot):
        return "!(" + display_expr(e.arg) + ")"
    if isinstance(e, ECall):
        args = ", ".join(display_expr(a) for a in e.args)
        name = {"lenof": "Sizeof"}.get(e.fn, e.fn)
        return f"{name}({args})"
    if isinstance(e, EBin):
        prec = _PREC[e.op]
        op = _DISPLAY_OPS.get(e.op, e.op)
        inner = prec + 1 if e.op in CMP_OPS else prec
        text = f"{display_expr(e.left, inner)} {op} {display_expr(e.right, prec + 1)}"
        return f"({text})" if prec < parent else text
    return format_expr(e, parent)


def expr_locals(e: Expr) -> list[str]:
    out: list[str] = []

    def walk(x):
        if isinstance(x, EVar) and x.sigil == "%":
            if x.name not in out:
                out.append(x.name)
        elif isinstance(x, EBin):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, ENot):
            walk(x.arg)
        elif isinstance(x, ECall):
            for a in x.args:
                walk(a)

    walk(e)
    return out


def substitute(e: Expr, binding: dict[str, Expr]) -> Expr:
    """Replace ``%name`` placeholders according to ``binding``."""
    if isinstance(e, EVar) and e.sigil == "%" and e.name in binding:
        return binding[e.name]
    if isinstance(e, EBin):
        return EBin(e.op, substitute(e.left, binding), substitute(e.right, binding))
    if isinstance(e, ENot):
        return ENot(substitute(e.arg, binding))
    if isinstance(e, ECall):
        return ECall(e.fn, tuple(substitute(a, binding) for a in e.args))
    return e


def conj(parts: list[Expr]) -> Expr:
    if not parts:
        return EBool(True)
    out = parts[0]
    for p in parts[1:]:
        out = EBin("&&", out, p)
    return out
