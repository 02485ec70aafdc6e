"""Core data types of the mini-IR: types, values, instructions, functions, modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

WIDTHS = (1, 8, 16, 32, 64)
POINTER_BYTES = 8


# --------------------------------------------------------------------------- types


@dataclass(frozen=True)
class IntType:
    width: int

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class PtrType:
    pointee: "TypeDesc"

    def __str__(self) -> str:
        return f"{self.pointee}*"


@dataclass(frozen=True)
class ArrayType:
    elem: "TypeDesc"
    length: int

    def __str__(self) -> str:
        return f"[{self.length} x {self.elem}]"


@dataclass(frozen=True)
class StructType:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class VoidType:
    def __str__(self) -> str:
        return "void"


TypeDesc = Union[IntType, PtrType, ArrayType, StructType, VoidType]

VOID = VoidType()
I1 = IntType(1)
I8 = IntType(8)
I64 = IntType(64)


@dataclass(frozen=True)
class StructDef:
    name: str
    fields: tuple[tuple[str, TypeDesc], ...]

    def field_type(self, name: str) -> Optional[TypeDesc]:
        for fname, ftype in self.fields:
            if fname == name:
                return ftype
        return None


def is_int(t: TypeDesc) -> bool:
    return isinstance(t, IntType)


def is_ptr(t: TypeDesc) -> bool:
    return isinstance(t, PtrType)


def is_scalar(t: TypeDesc) -> bool:
    return isinstance(t, (IntType, PtrType))


# --------------------------------------------------------------------------- values


@dataclass(frozen=True)
class Local:
    """A function-local SSA value or parameter, written ``%name``."""

    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class GlobalRef:
    """The address of a global variable, written ``@name``."""

    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class NullConst:
    def __str__(self) -> str:
        return "null"


@dataclass(frozen=True)
class Field:
    """A struct field selector inside a ``gep`` index list."""

    name: str

    def __str__(self) -> str:
        return f".{self.name}"


Value = Union[Local, GlobalRef, Const, NullConst]
Operand = Union[Local, GlobalRef, Const, NullConst, Field]
NULL = NullConst()


@dataclass(frozen=True)
class SourceLoc:
    file: str
    line: int
    col: int = 0

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


# --------------------------------------------------------------------------- instructions

ARITH = ("add", "sub", "mul", "udiv", "sdiv")
TERMINATORS = ("br", "condbr", "ret")
ICMP_PREDICATES = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")
OPCODES = (
    "alloca", "load", "store", "gep", "add", "sub", "mul", "udiv", "sdiv", "icmp",
    "zext", "trunc", "phi", "br", "condbr", "call", "ret", "free", "memcpy",
    "assert_intrinsic", "symbolic_intrinsic",
)

# Calls to these names need no definition; the execution engines give them meaning.
INTRINSICS: dict[str, tuple[tuple[TypeDesc, ...], TypeDesc]] = {
    "SmmIsBufferOutsideSmmValid": ((PtrType(I8), I64), I1),
}


@dataclass(frozen=True)
class Instruction:
    """One mini-IR instruction.

    ``type`` is the operation type written in the source (the loaded type for
    ``load``, the operand type for arithmetic and ``icmp``, the allocated type for
    ``alloca``...). ``result_type`` is filled in by the parser's type inference.
    """

    id: str
    opcode: str
    operands: tuple[Operand, ...] = ()
    result: Optional[str] = None
    type: TypeDesc = VOID
    loc: SourceLoc = SourceLoc("<unknown>", 1, 0)
    result_type: TypeDesc = VOID
    pred: Optional[str] = None
    labels: tuple[str, ...] = ()
    callee: Optional[str] = None
    expr: object = None
    sym_name: Optional[str] = None

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    def uses(self) -> list[Local]:
        out = [op for op in self.operands if isinstance(op, Local)]
        if self.expr is not None:
            from .expr import expr_locals

            out.extend(Local(n) for n in expr_locals(self.expr))
        return out


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]
    bound: Optional[int] = None

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    def successors(self) -> tuple[str, ...]:
        term = self.terminator
        return term.labels if term is not None else ()


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[tuple[str, TypeDesc], ...]
    ret_type: TypeDesc
    blocks: tuple[BasicBlock, ...] = ()
    is_external: bool = False
    loc: SourceLoc = SourceLoc("<unknown>", 1, 0)

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def instructions(self):
        for b in self.blocks:
            yield from b.instructions

    def param_type(self, name: str) -> Optional[TypeDesc]:
        for pname, ptype in self.params:
            if pname == name:
                return ptype
        return None


@dataclass(frozen=True)
class GlobalDecl:
    """A global variable.

    ``init`` is ``None`` (zero-initialized), an int, a tuple of ints (one per scalar
    cell, in layout order) or a :class:`SymbolicInit`.
    """

    name: str
    type: TypeDesc
    init: object = None
    loc: SourceLoc = SourceLoc("<unknown>", 1, 0)


@dataclass(frozen=True)
class SymbolicInit:
    """Initializer making every cell of a global a fresh symbol of ``width`` bits."""

    width: Optional[int] = None

    def __str__(self) -> str:
        return "symbolic" if self.width is None else f"symbolic(i{self.width})"


@dataclass(frozen=True)
class RegionDecl:
    """A protected memory region. ``base``/``size`` are ints or ``SymbolicInit``."""

    name: str
    base: object
    size: object
    loc: SourceLoc = SourceLoc("<unknown>", 1, 0)


@dataclass(frozen=True)
class ModuleIR:
    name: str
    source_file: str
    structs: tuple[StructDef, ...] = ()
    globals: tuple[GlobalDecl, ...] = ()
    regions: tuple[RegionDecl, ...] = ()
    functions: tuple[FunctionDef, ...] = ()

    # lookups are recomputed on demand; modules are small
    def function(self, name: str) -> FunctionDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def global_decl(self, name: str) -> GlobalDecl:
        for g in self.globals:
            if g.name == name:
                return g
        raise KeyError(name)

    def struct(self, name: str) -> StructDef:
        for s in self.structs:
            if s.name == name:
                return s
        raise KeyError(name)

    def region(self, name: str) -> RegionDecl:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def source_map(self) -> dict[str, SourceLoc]:
        return {i.id: i.loc for f in self.functions for i in f.instructions()}

    def instruction(self, iid: str) -> Instruction:
        for f in self.functions:
            for i in f.instructions():
                if i.id == iid:
                    return i
        raise KeyError(iid)

    def locate(self, iid: str) -> tuple[FunctionDef, BasicBlock, int]:
        for f in self.functions:
            for b in f.blocks:
                for k, i in enumerate(b.instructions):
                    if i.id == iid:
                        return f, b, k
        raise KeyError(iid)

    @property
    def bc_name(self) -> str:
        return f"<{self.name}.bc>"

    def func_id(self, fname: str) -> str:
        return f"{self.bc_name}:{fname}"


def instr_id(module_name: str, func: str, ordinal: int) -> str:
    return f"<{module_name}.bc>:{func}:{ordinal}"


# --------------------------------------------------------------------------- layout


def type_size(t: TypeDesc, structs: dict[str, StructDef]) -> int:
    """Byte size with packed layout (no padding)."""
    if isinstance(t, IntType):
        return max(1, t.width // 8)
    if isinstance(t, PtrType):
        return POINTER_BYTES
    if isinstance(t, ArrayType):
        return t.length * type_size(t.elem, structs)
    if isinstance(t, StructType):
        return sum(type_size(ft, structs) for _, ft in structs[t.name].fields)
    return 0


def scalar_cells(
    t: TypeDesc, structs: dict[str, StructDef], prefix: tuple = (), offset: int = 0
) -> list[tuple[tuple, TypeDesc, int]]:
    """All scalar cells of an object of type ``t`` as (path, type, byte offset).

    Paths contain field names (str) and array indices (int).
    """
    if is_scalar(t):
        return [(prefix, t, offset)]
    out: list[tuple[tuple, TypeDesc, int]] = []
    if isinstance(t, ArrayType):
        esz = type_size(t.elem, structs)
        for k in range(t.length):
            out.extend(scalar_cells(t.elem, structs, prefix + (k,), offset + k * esz))
    elif isinstance(t, StructType):
        off = offset
        for fname, ftype in structs[t.name].fields:
            out.extend(scalar_cells(ftype, structs, prefix + (fname,), off))
            off += type_size(ftype, structs)
    return out


def path_type_offset(
    t: TypeDesc, path: tuple, structs: dict[str, StructDef]
) -> tuple[TypeDesc, int]:
    """Type and byte offset reached by following ``path`` into an object of type ``t``."""
    off = 0
    for sel in path:
        if isinstance(sel, str):
            assert isinstance(t, StructType)
            for fname, ftype in structs[t.name].fields:
                if fname == sel:
                    t = ftype
                    break
                off += type_size(ftype, structs)
            else:
                raise KeyError(sel)
        else:
            assert isinstance(t, ArrayType)
            off += sel * type_size(t.elem, structs)
            t = t.elem
    return t, off


def abstract_path(path: tuple) -> tuple:
    """Collapse array indices to the single ``[]`` cell used by points-to."""
    return tuple("[]" if isinstance(p, int) else p for p in path)


def path_str(path: tuple) -> str:
    if not path:
        return "/"
    return "".join("/" + (p if isinstance(p, str) else f"[{p}]") for p in path)
