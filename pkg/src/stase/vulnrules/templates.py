"""Assertion templates per vulnerability category and their instantiation at K."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..mir.expr import EBin, EBool, EConst, EName, EVar, Expr, ECall, conj, parse_expr, substitute
from ..mir.ir import Const, Field, GlobalRef, Instruction, Local, ModuleIR, NullConst, type_size
from .config import AnalysisConfig, VulnCategory


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class AssertionTemplate:
    category: VulnCategory
    template: str
    placeholder_roles: dict = field(default_factory=dict)

    def instantiate(self, binding: dict[str, Expr], region: str = "") -> Expr:
        text = self.template.replace("REGION", region)
        e = parse_expr(text)
        missing = set(self.placeholder_roles) - set(binding)
        if missing:
            raise TemplateError(f"{self.category}: unbound placeholder(s) {sorted(missing)}")
        return substitute(e, binding)


_SMRAM = ("%n <= base(REGION) + size(REGION) && addr(%p) <= base(REGION) + size(REGION)"
          " && (%n == 0 || addr(%p) + %n <= base(REGION) + size(REGION))")

TEMPLATES: dict[str, AssertionTemplate] = {
    "DivisionByZero": AssertionTemplate(VulnCategory.DivisionByZero, "%d != 0", {"d": "divisor"}),
    "IntegerUnderflow": AssertionTemplate(
        VulnCategory.IntegerUnderflow, "%a >= %b", {"a": "minuend", "b": "subtrahend"}),
    "IntegerOverflow.add": AssertionTemplate(
        VulnCategory.IntegerOverflow, "%a + %b >= %a", {"a": "lhs", "b": "rhs"}),
    "IntegerOverflow.mul": AssertionTemplate(
        VulnCategory.IntegerOverflow, "%b == 0 || (%a * %b) / %b == %a", {"a": "lhs", "b": "rhs"}),
    "OutOfBoundsAccess": AssertionTemplate(
        VulnCategory.OutOfBoundsAccess, "%i >=s 0 && %i <s lenof(%j)", {"i": "index", "j": "array"}),
    "UseAfterFree": AssertionTemplate(VulnCategory.UseAfterFree, "!freed(%p)", {"p": "pointer"}),
    "BufferOverflow": AssertionTemplate(
        VulnCategory.BufferOverflow,
        "offset(%d) + %n <= objsize(%d) && offset(%s) + %n <= objsize(%s)",
        {"d": "destination", "s": "source", "n": "length"}),
    "SmramRead": AssertionTemplate(VulnCategory.SmramRead, _SMRAM, {"p": "pointer", "n": "size"}),
    "SmramWrite": AssertionTemplate(VulnCategory.SmramWrite, _SMRAM, {"p": "pointer", "n": "size"}),
    "SmmCallout": AssertionTemplate(VulnCategory.SmmCallout, "false", {}),
}


def smram_condition(ptr: Expr, size: Expr, region: str) -> Expr:
    """The region-safety predicate shared by SMRAM assertions and the
    buffer-validation intrinsic."""
    return TEMPLATES["SmramWrite"].instantiate({"p": ptr, "n": size}, region)


def operand_expr(v) -> Expr:
    if isinstance(v, Local):
        return EVar("%", v.name)
    if isinstance(v, GlobalRef):
        return EVar("@", v.name)
    if isinstance(v, Const):
        return EConst(v.value)
    if isinstance(v, NullConst):
        return EConst(0)
    raise TemplateError(f"operand {v} cannot appear in an assertion")


@dataclass(frozen=True)
class Assertion:
    """An instantiated assertion plus helper ``gep`` values it needs in scope.

    ``helpers`` holds ``(name, operands)`` pairs; each becomes
    ``%name = gep operands...`` inserted just before the assertion.
    """

    expr: Expr
    helpers: tuple = ()


def instantiate_assertion(category, k: Instruction, m: ModuleIR, cfg: AnalysisConfig,
                          sink_positions: tuple[int, ...] = ()) -> Assertion:
    """Instantiate the template of ``category`` at instruction ``k``.

    ``sink_positions`` are operand positions of tainted gep indices (out-of-bounds only).
    """
    cat = VulnCategory(category)
    ops = k.operands
    structs = {s.name: s for s in m.structs}
    if cat == VulnCategory.DivisionByZero:
        _expect(k, ("udiv", "sdiv"), cat)
        return Assertion(TEMPLATES["DivisionByZero"].instantiate({"d": operand_expr(ops[1])}))
    if cat == VulnCategory.IntegerUnderflow:
        _expect(k, ("sub",), cat)
        return Assertion(TEMPLATES["IntegerUnderflow"].instantiate(
            {"a": operand_expr(ops[0]), "b": operand_expr(ops[1])}))
    if cat == VulnCategory.IntegerOverflow:
        _expect(k, ("add", "mul"), cat)
        return Assertion(TEMPLATES[f"IntegerOverflow.{k.opcode}"].instantiate(
            {"a": operand_expr(ops[0]), "b": operand_expr(ops[1])}))
    if cat == VulnCategory.OutOfBoundsAccess:
        _expect(k, ("gep",), cat)
        positions = sink_positions or tuple(
            p for p, o in enumerate(ops) if p > 0 and not isinstance(o, Field))
        parts, helpers = [], []
        for p in sorted(set(positions)):
            if p == 1:
                arr = operand_expr(ops[0])
            else:
                name = f"stase.arr.{p}"
                helpers.append((name, tuple(ops[:p])))
                arr = EVar("%", name)
            parts.append(TEMPLATES["OutOfBoundsAccess"].instantiate(
                {"i": operand_expr(ops[p]), "j": arr}))
        return Assertion(conj(parts), tuple(helpers))
    if cat == VulnCategory.UseAfterFree:
        _expect(k, ("load", "store"), cat)
        ptr = ops[0] if k.opcode == "load" else ops[1]
        return Assertion(TEMPLATES["UseAfterFree"].instantiate({"p": operand_expr(ptr)}))
    if cat == VulnCategory.BufferOverflow:
        _expect(k, ("memcpy",), cat)
        return Assertion(TEMPLATES["BufferOverflow"].instantiate(
            {"d": operand_expr(ops[0]), "s": operand_expr(ops[1]), "n": operand_expr(ops[2])}))
    if cat in (VulnCategory.SmramRead, VulnCategory.SmramWrite):
        if k.opcode == "load":
            ptr, size = ops[0], EConst(type_size(k.type, structs))
        elif k.opcode == "store":
            ptr, size = ops[1], EConst(type_size(k.type, structs))
        elif k.opcode == "memcpy":
            ptr = ops[1] if cat == VulnCategory.SmramRead else ops[0]
            size = operand_expr(ops[2])
        else:
            raise TemplateError(f"{cat} template does not apply to {k.opcode}")
        regions = list(cfg.regions) or [r.name for r in m.regions]
        if not regions:
            raise TemplateError(f"{cat} needs a declared region")
        return Assertion(conj([smram_condition(operand_expr(ptr), size, r) for r in regions]))
    if cat == VulnCategory.SmmCallout:
        _expect(k, ("call",), cat)
        return Assertion(EBool(False))
    raise TemplateError(f"no template for {cat}")  # pragma: no cover


def _expect(k: Instruction, opcodes, cat) -> None:
    if k.opcode not in opcodes:
        raise TemplateError(f"{cat} template does not apply to {k.opcode} ({k.id})")


__all__ = ["Assertion", "AssertionTemplate", "TEMPLATES", "TemplateError", "instantiate_assertion",
           "operand_expr", "smram_condition"]
