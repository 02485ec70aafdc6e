"""Mini-IR: an LLVM-flavored SSA subset with a textual parser, validator and printer."""

from .expr import display_expr, format_expr, parse_expr
from .ir import (
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
    NullConst,
    PtrType,
    RegionDecl,
    SourceLoc,
    StructDef,
    StructType,
    SymbolicInit,
    TypeDesc,
    VoidType,
)
from .parser import Diagnostic, MirError, parse_file, parse_module
from .printer import format_instruction, pretty_print
from .validate import validate_module

__all__ = [
    "ArrayType", "BasicBlock", "Const", "Diagnostic", "Field", "FunctionDef", "GlobalDecl",
    "GlobalRef", "Instruction", "IntType", "Local", "MirError", "ModuleIR", "NullConst",
    "PtrType", "RegionDecl", "SourceLoc", "StructDef", "StructType", "SymbolicInit",
    "TypeDesc", "VoidType", "display_expr", "format_expr", "format_instruction",
    "parse_expr", "parse_file", "parse_module", "pretty_print", "validate_module",
]
