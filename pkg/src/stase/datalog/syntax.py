"""Rule DSL: a Soufflé-flavored subset.

    .decl edge(src:symbol, dst:symbol)
    path(?x, ?y) :- edge(?x, ?y).
    path(?x, ?z) :- path(?x, ?y), edge(?y, ?z).
    lonely(?x)   :- node(?x), !edge(?x, _).
    short(?n)    :- name(?n), substr(?n, 0, 4) = "Copy".

Relations used without a ``.decl`` are declared implicitly from their first use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union


class DatalogError(Exception):
    pass


class DatalogSyntaxError(DatalogError):
    pass


class UnsafeRuleError(DatalogError):
    pass


class StratificationError(DatalogError):
    pass


class ArityError(DatalogError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return f"?{self.name}"


@dataclass(frozen=True)
class Wildcard:
    def __str__(self):
        return "_"


@dataclass(frozen=True)
class Substr:
    arg: "Term"
    start: int
    length: int

    def __str__(self):
        return f"substr({self.arg}, {self.start}, {self.length})"


Const = Union[str, int]
Term = Union[Var, Wildcard, Substr, str, int]
WILD = Wildcard()


def term_str(t) -> str:
    if isinstance(t, str):
        return '"' + t + '"'
    return str(t)


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple
    negated: bool = False

    def vars(self) -> set[str]:
        return {t.name for t in self.terms if isinstance(t, Var)}

    def __str__(self):
        neg = "!" if self.negated else ""
        return f"{neg}{self.relation}(" + ", ".join(term_str(t) for t in self.terms) + ")"


@dataclass(frozen=True)
class Constraint:
    op: str
    left: Term
    right: Term

    def vars(self) -> set[str]:
        out = set()
        for t in (self.left, self.right):
            if isinstance(t, Var):
                out.add(t.name)
            elif isinstance(t, Substr) and isinstance(t.arg, Var):
                out.add(t.arg.name)
        return out

    def __str__(self):
        return f"{term_str(self.left)} {self.op} {term_str(self.right)}"


Literal = Union[Atom, Constraint]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- " + ", ".join(str(l) for l in self.body) + "."

    def positive_atoms(self) -> list[Atom]:
        return [l for l in self.body if isinstance(l, Atom) and not l.negated]


@dataclass
class Relation:
    name: str
    arity: int
    attribute_names: tuple[str, ...]
    attribute_types: tuple[str, ...]
    kind: str = "extensional"  # or "intensional"


@dataclass
class Program:
    relations: dict[str, Relation] = field(default_factory=dict)
    rules: list[Rule] = field(default_factory=list)
    strata: list[list[Rule]] = field(default_factory=list)
    stratum_relations: list[list[str]] = field(default_factory=list)

    def intensional(self) -> list[str]:
        return sorted(r.name for r in self.relations.values() if r.kind == "intensional")

    def extensional(self) -> list[str]:
        return sorted(r.name for r in self.relations.values() if r.kind == "extensional")


_TOK = re.compile(
    r"""\s*(?:
      (?P<comment>//[^\n]*|/\*.*?\*/)
    | (?P<decl>\.[a-z]+)
    | (?P<string>"[^"]*")
    | (?P<var>\?[A-Za-z_]\w*)
    | (?P<num>-?\d+)
    | (?P<op>:-|!=|<=|>=|[(),.:=<>!_])
    | (?P<ident>[A-Za-z_][\w.]*[\w]|[A-Za-z_])
    )""",
    re.VERBOSE | re.DOTALL,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            line = text.count("\n", 0, pos) + 1
            raise DatalogSyntaxError(f"line {line}: unexpected input {text[pos:pos + 15]!r}")
        kind = m.lastgroup
        if kind != "comment":
            line = text.count("\n", 0, m.start(kind)) + 1
            toks.append((kind, m.group(kind), line))
        pos = m.end()
    toks.append(("eof", "", text.count("\n") + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.program = Program()
        self.head_rels: set[str] = set()

    @property
    def tok(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.next()
        if t[1] != text:
            raise DatalogSyntaxError(f"line {t[2]}: expected {text!r}, got {t[1]!r}")
        return t

    def parse(self) -> Program:
        while self.tok[0] != "eof":
            if self.tok[0] == "decl":
                self.parse_directive()
            else:
                self.parse_clause()
        return self.program

    def parse_directive(self):
        kind, text, line = self.next()
        if text == ".decl":
            name = self.next()[1]
            self.expect("(")
            names, types = [], []
            while self.tok[1] != ")":
                names.append(self.next()[1])
                if self.tok[1] == ":":
                    self.next()
                    types.append(self.next()[1])
                else:
                    types.append("symbol")
                if self.tok[1] == ",":
                    self.next()
            self.expect(")")
            if name in self.program.relations:
                raise DatalogSyntaxError(f"line {line}: relation {name} declared twice")
            self.program.relations[name] = Relation(name, len(names), tuple(names), tuple(types))
        elif text in (".input", ".output", ".printsize"):
            self.next()
        elif text == ".type":
            # .type Name <: symbol  -- accepted, ignored
            while self.tok[0] != "eof" and self.tok[0] != "decl" and not self._at_clause_start():
                self.next()
        else:
            raise DatalogSyntaxError(f"line {line}: unknown directive {text}")

    def _at_clause_start(self) -> bool:
        return self.tok[0] == "ident" and self.toks[self.i + 1][1] == "("

    def parse_term(self):
        kind, text, line = self.next()
        if kind == "var":
            return Var(text[1:])
        if text == "_":
            return WILD
        if kind == "string":
            return text[1:-1]
        if kind == "num":
            return int(text)
        if kind == "ident" and text == "substr":
            self.expect("(")
            arg = self.parse_term()
            self.expect(",")
            start = int(self.next()[1])
            self.expect(",")
            length = int(self.next()[1])
            self.expect(")")
            return Substr(arg, start, length)
        raise DatalogSyntaxError(f"line {line}: expected term, got {text!r}")

    def parse_atom(self, negated=False) -> Atom:
        kind, name, line = self.next()
        if kind != "ident":
            raise DatalogSyntaxError(f"line {line}: expected relation name, got {name!r}")
        self.expect("(")
        terms = []
        while self.tok[1] != ")":
            terms.append(self.parse_term())
            if self.tok[1] == ",":
                self.next()
            elif self.tok[1] != ")":
                raise DatalogSyntaxError(f"line {self.tok[2]}: expected ',' or ')'")
        self.expect(")")
        atom = Atom(name, tuple(terms), negated)
        self.register(atom, line)
        return atom

    def register(self, atom: Atom, line: int):
        rel = self.program.relations.get(atom.relation)
        if rel is None:
            n = len(atom.terms)
            self.program.relations[atom.relation] = Relation(
                atom.relation, n, tuple(f"a{k}" for k in range(n)), ("symbol",) * n)
        elif rel.arity != len(atom.terms):
            raise ArityError(
                f"line {line}: {atom.relation} used with {len(atom.terms)} argument(s), "
                f"declared with {rel.arity}")

    def parse_literal(self):
        if self.tok[1] == "!" and self.toks[self.i + 1][0] == "ident" \
                and self.toks[self.i + 2][1] == "(" and self.toks[self.i + 1][1] != "substr":
            self.next()
            return self.parse_atom(negated=True)
        if self.tok[0] == "ident" and self.tok[1] != "substr" and self.toks[self.i + 1][1] == "(":
            return self.parse_atom()
        left = self.parse_term()
        kind, op, line = self.next()
        if op not in ("=", "!=", "<", "<=", ">", ">="):
            raise DatalogSyntaxError(f"line {line}: expected comparison operator, got {op!r}")
        right = self.parse_term()
        return Constraint(op, left, right)

    def parse_clause(self):
        line = self.tok[2]
        head = self.parse_atom()
        body = []
        if self.tok[1] == ":-":
            self.next()
            body.append(self.parse_literal())
            while self.tok[1] == ",":
                self.next()
                body.append(self.parse_literal())
        self.expect(".")
        rule = Rule(head, tuple(body))
        _check_safety(rule, line)
        self.program.rules.append(rule)


def _check_safety(rule: Rule, line: int):
    bound: set[str] = set()
    for a in rule.positive_atoms():
        bound |= a.vars()
    for t in rule.head.terms:
        if isinstance(t, Wildcard):
            raise UnsafeRuleError(f"line {line}: wildcard in head of {rule.head.relation}")
    missing = rule.head.vars() - bound
    if missing:
        names = ", ".join("?" + v for v in sorted(missing))
        raise UnsafeRuleError(f"line {line}: unsafe rule: head variable(s) {names} unbound in {rule}")
    for lit in rule.body:
        if isinstance(lit, Atom) and lit.negated:
            free = lit.vars() - bound
            if free:
                raise UnsafeRuleError(
                    f"line {line}: unsafe negation: ?{sorted(free)[0]} only occurs negated in {rule}")
        elif isinstance(lit, Constraint):
            free = lit.vars() - bound
            if free:
                raise UnsafeRuleError(
                    f"line {line}: unsafe constraint: ?{sorted(free)[0]} unbound in {rule}")


def parse_rules(text: str, stratify: bool = True) -> Program:
    """Parse rule text into a :class:`Program` with computed strata."""
    program = _Parser(text).parse()
    if stratify:
        from .engine import stratify as _stratify

        _stratify(program)
    return program
