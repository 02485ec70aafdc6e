"""Parser for the line-oriented ``.mir`` text format.

Instructions end at a newline or at the closing ``}`` of their function, so
``fn @f(%a: i32) { e: ret %a }`` is a complete module. ``;`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional

from . import expr as mexpr
from .ir import (
    ARITH,
    ICMP_PREDICATES,
    NULL,
    OPCODES,
    ArrayType,
    BasicBlock,
    Const,
    Field,
    FunctionDef,
    GlobalDecl,
    GlobalRef,
    Instruction,
    IntType,
    Local,
    ModuleIR,
    PtrType,
    RegionDecl,
    SourceLoc,
    StructDef,
    StructType,
    SymbolicInit,
    TypeDesc,
    VOID,
    instr_id,
)


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    col: int
    message: str
    severity: str = "error"
    instr: Optional[str] = None

    def __str__(self) -> str:
        tag = f" [{self.instr}]" if self.instr else ""
        return f"{self.file}:{self.line}:{self.col}: {self.severity}: {self.message}{tag}"


class MirError(Exception):
    """Raised when a module fails to parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>;[^\n]*)
  | (?P<nl>\n)
  | (?P<string>"[^"\n]*")
  | (?P<local>%[A-Za-z_.$0-9][\w.$]*)
  | (?P<global>@[A-Za-z_.$][\w.$]*)
  | (?P<meta>![A-Za-z_]\w*)
  | (?P<num>-?0x[0-9a-fA-F]+|-?\d+)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_.$][\w.$]*)
  | (?P<punct>[{}()\[\],:=*<>])
  """,
    re.VERBOSE,
)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, file: str) -> list[Tok]:
    toks: list[Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise MirError([Diagnostic(file, line, pos - line_start,
                                       f"syntax error: unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        if kind == "ident" and m.group() == "assert_intrinsic":
            toks.append(Tok(kind, m.group(), line, pos - line_start))
            end = text.find("\n", m.end())
            end = len(text) if end < 0 else end
            raw = text[m.end():end]
            cut = len(raw)
            for marker in ("!loc", "}", ";"):
                k = raw.find(marker)
                if k >= 0:
                    cut = min(cut, k)
            toks.append(Tok("exprtext", raw[:cut].strip(), line, m.end() - line_start))
            pos = m.end() + cut
            continue
        if kind == "nl":
            toks.append(Tok("nl", "\n", line, pos - line_start))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, m.group(), line, pos - line_start))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start))
    return toks


class _Parser:
    def __init__(self, text: str, file: str, name: Optional[str]):
        self.file = file
        self.toks = tokenize(text, file)
        self.i = 0
        if name is None:
            for k, t in enumerate(self.toks[:-1]):
                if t.kind == "ident" and t.text == "module" and (k == 0 or self.toks[k - 1].kind == "nl"):
                    name = self.toks[k + 1].text
                    break
        if name is None and not file.startswith("<"):
            from pathlib import Path

            name = Path(file).stem
        self.module_name = name
        self.source_file: Optional[str] = None
        self.structs: list[StructDef] = []
        self.globals: list[GlobalDecl] = []
        self.regions: list[RegionDecl] = []
        self.functions: list[FunctionDef] = []

    # ---------------------------------------------------------------- helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Tok] = None):
        t = tok or self.tok
        raise MirError([Diagnostic(self.file, t.line, t.col, f"syntax error: {msg}")])

    def next(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Tok:
        if self.tok.text != text:
            self.error(f"expected {text!r}, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Tok:
        if self.tok.kind != kind:
            self.error(f"expected {what}, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def skip_nl(self):
        while self.tok.kind == "nl":
            self.i += 1

    def at_line_end(self) -> bool:
        return self.tok.kind in ("nl", "eof") or self.tok.text == "}" or self.tok.kind == "meta"

    # ---------------------------------------------------------------- types
    def parse_type(self) -> TypeDesc:
        t = self.tok
        if t.text == "[":
            self.next()
            n = int(self.expect_kind("num", "array length").text, 0)
            if self.tok.text != "x":
                self.error("expected 'x' in array type")
            self.next()
            elem = self.parse_type()
            self.expect("]")
            ty: TypeDesc = ArrayType(elem, n)
        elif t.kind == "ident" and re.fullmatch(r"i\d+", t.text):
            self.next()
            ty = IntType(int(t.text[1:]))
        elif t.kind == "ident" and t.text == "void":
            self.next()
            ty = VOID
        elif t.kind == "ident":
            self.next()
            ty = StructType(t.text)
        else:
            self.error(f"expected type, got {t.text!r}")
        while self.tok.text == "*":
            self.next()
            ty = PtrType(ty)
        return ty

    def parse_value(self):
        t = self.tok
        if t.kind == "local":
            self.next()
            return Local(t.text[1:])
        if t.kind == "global":
            self.next()
            return GlobalRef(t.text[1:])
        if t.kind == "num":
            self.next()
            return Const(int(t.text, 0))
        if t.kind == "ident" and t.text == "null":
            self.next()
            return NULL
        if t.kind == "ident" and t.text in ("true", "false"):
            self.next()
            return Const(1 if t.text == "true" else 0)
        self.error(f"expected value, got {t.text or 'end of line'!r}")

    def parse_loc_suffix(self, default: SourceLoc) -> SourceLoc:
        if self.tok.kind == "meta" and self.tok.text == "!loc":
            self.next()
            self.expect("(")
            args = []
            while self.tok.text != ")":
                args.append(self.next())
                if self.tok.text == ",":
                    self.next()
            self.expect(")")
            if len(args) == 3:
                return SourceLoc(args[0].text.strip('"'), int(args[1].text), int(args[2].text))
            if len(args) == 2:
                return SourceLoc(args[0].text.strip('"'), int(args[1].text), 0)
            if len(args) == 1:
                return SourceLoc(default.file, int(args[0].text), 0)
            self.error("malformed !loc")
        return default

    # ---------------------------------------------------------------- module
    def parse(self) -> dict:
        self.skip_nl()
        while self.tok.kind != "eof":
            t = self.tok
            if t.text == "module":
                self.next()
                name = self.next().text
                self.module_name = self.module_name or name
            elif t.text == "source":
                self.next()
                self.source_file = self.expect_kind("string", "source file name").text.strip('"')
            elif t.text == "struct":
                self.parse_struct()
            elif t.text == "global":
                self.parse_global()
            elif t.text == "region":
                self.parse_region()
            elif t.text == "extern":
                self.parse_extern()
            elif t.text == "fn":
                self.parse_function()
            else:
                self.error(f"expected top-level declaration, got {t.text!r}")
            self.skip_nl()
        return {}

    @property
    def src(self) -> str:
        if self.source_file is None:
            self.source_file = f"{self.module_name or 'module'}.c"
        return self.source_file

    def here(self, t: Tok) -> SourceLoc:
        return SourceLoc(self.src, t.line, t.col)

    def parse_struct(self):
        self.expect("struct")
        name = self.expect_kind("ident", "struct name").text
        self.expect("{")
        fields = []
        self.skip_nl()
        while self.tok.text != "}":
            fname = self.expect_kind("ident", "field name").text
            self.expect(":")
            fields.append((fname, self.parse_type()))
            if self.tok.text == ",":
                self.next()
            self.skip_nl()
        self.expect("}")
        self.structs.append(StructDef(name, tuple(fields)))

    def parse_init(self):
        t = self.tok
        if t.text == "symbolic":
            self.next()
            if self.tok.text == "(":
                self.next()
                w = self.parse_type()
                self.expect(")")
                return SymbolicInit(w.width if isinstance(w, IntType) else None)
            return SymbolicInit()
        if t.text == "{":
            self.next()
            vals = []
            while self.tok.text != "}":
                vals.append(int(self.expect_kind("num", "integer").text, 0))
                if self.tok.text == ",":
                    self.next()
            self.next()
            return tuple(vals)
        if t.text == "zeroinit":
            self.next()
            return None
        return int(self.expect_kind("num", "initializer").text, 0)

    def parse_global(self):
        start = self.expect("global")
        name = self.expect_kind("global", "global name").text[1:]
        self.expect(":")
        ty = self.parse_type()
        init = None
        if self.tok.text == "=":
            self.next()
            init = self.parse_init()
        loc = self.parse_loc_suffix(self.here(start))
        self.globals.append(GlobalDecl(name, ty, init, loc))

    def parse_region(self):
        start = self.expect("region")
        name = self.expect_kind("ident", "region name").text
        vals = {}
        for _ in range(2):
            key = self.expect_kind("ident", "base= or size=").text
            self.expect("=")
            vals[key] = self.parse_init()
        if set(vals) != {"base", "size"}:
            self.error("region needs base= and size=", start)
        loc = self.parse_loc_suffix(self.here(start))
        self.regions.append(RegionDecl(name, vals["base"], vals["size"], loc))

    def parse_extern(self):
        start = self.expect("extern")
        name = self.expect_kind("global", "function name").text[1:]
        self.expect("(")
        params = []
        while self.tok.text != ")":
            params.append((f"arg{len(params)}", self.parse_type()))
            if self.tok.text == ",":
                self.next()
        self.expect(")")
        ret = VOID
        if self.tok.kind == "arrow":
            self.next()
            ret = self.parse_type()
        loc = self.parse_loc_suffix(self.here(start))
        self.functions.append(FunctionDef(name, tuple(params), ret, (), True, loc))

    def parse_function(self):
        start = self.expect("fn")
        name = self.expect_kind("global", "function name").text[1:]
        self.expect("(")
        params = []
        while self.tok.text != ")":
            pname = self.expect_kind("local", "parameter").text[1:]
            self.expect(":")
            params.append((pname, self.parse_type()))
            if self.tok.text == ",":
                self.next()
        self.expect(")")
        ret: Optional[TypeDesc] = None
        if self.tok.kind == "arrow":
            self.next()
            ret = self.parse_type()
        loc = self.parse_loc_suffix(self.here(start))
        self.skip_nl()
        self.expect("{")
        blocks: list[tuple[str, Optional[int], list]] = []
        ordinal = 0
        self.skip_nl()
        while self.tok.text != "}":
            if self.tok.kind == "eof":
                self.error("unterminated function body")
            if self.tok.kind == "ident" and self.toks[self.i + 1].text == ":":
                label = self.next().text
                self.next()
                bound = None
                if self.tok.kind == "meta" and self.tok.text == "!bound":
                    self.next()
                    self.expect("(")
                    bound = int(self.expect_kind("num", "loop bound").text, 0)
                    self.expect(")")
                blocks.append((label, bound, []))
            else:
                if not blocks:
                    self.error("instruction before first block label")
                iid = instr_id(self.module_name or "module", name, ordinal)
                blocks[-1][2].append(self.parse_instruction(iid))
                ordinal += 1
            self.skip_nl()
        self.expect("}")
        bbs = tuple(BasicBlock(lbl, tuple(ins), bnd) for lbl, bnd, ins in blocks)
        self.functions.append(FunctionDef(name, tuple(params), ret, bbs, False, loc))

    # ---------------------------------------------------------------- instructions
    def parse_instruction(self, iid: str) -> Instruction:
        start = self.tok
        result = None
        if self.tok.kind == "local" and self.toks[self.i + 1].text == "=":
            result = self.next().text[1:]
            self.next()
        op_tok = self.expect_kind("ident", "opcode")
        op = op_tok.text
        if op not in OPCODES:
            self.error(f"unknown opcode {op!r}", op_tok)
        kw: dict = {}
        ops: list = []
        ty: TypeDesc = VOID
        if op == "alloca":
            ty = self.parse_type()
        elif op == "load":
            ty = self.parse_type()
            self.expect(",")
            ops = [self.parse_value()]
        elif op == "store":
            ty = self.parse_type()
            ops = [self.parse_value()]
            self.expect(",")
            ops.append(self.parse_value())
        elif op == "gep":
            ops = [self.parse_value()]
            while self.tok.text == ",":
                self.next()
                if self.tok.kind == "ident" and self.tok.text.startswith("."):
                    ops.append(Field(self.next().text[1:]))
                else:
                    ops.append(self.parse_value())
        elif op in ARITH:
            ty = self.parse_type()
            ops = [self.parse_value()]
            self.expect(",")
            ops.append(self.parse_value())
        elif op == "icmp":
            pred = self.expect_kind("ident", "predicate").text
            if pred not in ICMP_PREDICATES:
                self.error(f"unknown icmp predicate {pred!r}")
            kw["pred"] = pred
            ty = self.parse_type()
            ops = [self.parse_value()]
            self.expect(",")
            ops.append(self.parse_value())
        elif op in ("zext", "trunc"):
            src_ty = self.parse_type()
            ops = [self.parse_value()]
            if self.tok.text != "to":
                self.error("expected 'to'")
            self.next()
            ty = self.parse_type()
            kw["pred"] = str(src_ty)
        elif op == "phi":
            ty = self.parse_type()
            labels = []
            while True:
                self.expect("[")
                ops.append(self.parse_value())
                self.expect(",")
                labels.append(self.expect_kind("ident", "label").text)
                self.expect("]")
                if self.tok.text != ",":
                    break
                self.next()
            kw["labels"] = tuple(labels)
        elif op == "br":
            kw["labels"] = (self.expect_kind("ident", "label").text,)
        elif op == "condbr":
            ops = [self.parse_value()]
            self.expect(",")
            a = self.expect_kind("ident", "label").text
            self.expect(",")
            b = self.expect_kind("ident", "label").text
            kw["labels"] = (a, b)
        elif op == "call":
            kw["callee"] = self.expect_kind("global", "callee").text[1:]
            self.expect("(")
            while self.tok.text != ")":
                ops.append(self.parse_value())
                if self.tok.text == ",":
                    self.next()
            self.expect(")")
        elif op == "ret":
            if not self.at_line_end():
                if self.tok.kind == "ident" and not self.tok.text in ("null", "true", "false"):
                    ty = self.parse_type()
                ops = [self.parse_value()]
        elif op == "free":
            ops = [self.parse_value()]
        elif op == "memcpy":
            ops = [self.parse_value()]
            for _ in range(2):
                self.expect(",")
                ops.append(self.parse_value())
        elif op == "assert_intrinsic":
            text = self.expect_kind("exprtext", "assertion expression").text
            try:
                kw["expr"] = mexpr.parse_expr(text)
            except mexpr.ExprSyntaxError as exc:
                self.error(f"bad assertion expression: {exc}", start)
        elif op == "symbolic_intrinsic":
            ty = self.parse_type()
            kw["sym_name"] = self.expect_kind("string", "symbol name").text.strip('"')
        loc = self.parse_loc_suffix(self.here(start))
        if not self.at_line_end():
            self.error(f"unexpected {self.tok.text!r} after instruction")
        return Instruction(iid, op, tuple(ops), result, ty, loc, **kw)


def parse_module(text: str, file: str = "<input>", name: Optional[str] = None,
                 validate: bool = True) -> ModuleIR:
    """Parse ``.mir`` text into a typed, validated :class:`ModuleIR`.

    Raises :class:`MirError` carrying ``file:line:col`` diagnostics.
    """
    p = _Parser(text, file, name)
    p.parse()
    mod_name = p.module_name or "module"
    module = ModuleIR(
        name=mod_name,
        source_file=p.src,
        structs=tuple(p.structs),
        globals=tuple(p.globals),
        regions=tuple(p.regions),
        functions=tuple(p.functions),
    )
    from .validate import infer_types, validate_module

    module, diags = infer_types(module)
    if validate:
        diags = diags + [d for d in validate_module(module) if d not in diags]
        if diags:
            raise MirError(diags)
    return module


def parse_file(path) -> ModuleIR:
    from pathlib import Path

    path = Path(path)
    return parse_module(path.read_text(encoding="utf-8"), file=str(path), name=None)
