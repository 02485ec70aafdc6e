"""Fact extraction: walk a validated module and populate the extensional relations."""

from __future__ import annotations

from typing import Optional

from .mir.cfg import IrreducibleCFG, natural_loops
from .mir.ir import ARITH, Const, Field, FunctionDef, GlobalRef, Instruction, IntType, Local, ModuleIR, NullConst

# relation name -> column types ("symbol" or "number")
SCHEMA: dict[str, tuple[str, ...]] = {
    "instr_func": ("symbol", "symbol"),
    "instr_pos": ("symbol", "number", "number"),
    "instr_file": ("symbol", "symbol"),
    "instr_opcode": ("symbol", "symbol"),
    "instr_result": ("symbol", "symbol"),
    "func_name": ("symbol", "symbol"),
    "func_param": ("symbol", "symbol", "number"),
    "func_external": ("symbol",),
    **{f"{op}_instr": ("symbol",) for op in ARITH},
    **{f"{op}_instr_first_operand": ("symbol", "symbol") for op in ARITH},
    **{f"{op}_instr_second_operand": ("symbol", "symbol") for op in ARITH},
    "load_instr_address": ("symbol", "symbol"),
    "store_instr_value": ("symbol", "symbol"),
    "store_instr_address": ("symbol", "symbol"),
    "gep_instr_base": ("symbol", "symbol"),
    "gep_instr_index": ("symbol", "number", "symbol"),
    "alloca_instr": ("symbol", "symbol"),
    "call_instr_fn": ("symbol", "symbol"),
    "call_instr_arg": ("symbol", "number", "symbol"),
    "memcpy_instr": ("symbol", "symbol", "symbol", "symbol"),
    "free_instr": ("symbol", "symbol"),
    "global_var": ("symbol", "symbol"),
    "block_of": ("symbol", "symbol"),
    "branch_edge": ("symbol", "symbol"),
    "loop_header": ("symbol", "symbol"),
    "loop_bound_const": ("symbol", "number"),
}


def value_id(m: ModuleIR, func: str, v) -> str:
    """Module-unique constant naming an operand in fact tuples."""
    if isinstance(v, Local):
        return f"{m.func_id(func)}:%{v.name}"
    if isinstance(v, GlobalRef):
        return f"@{v.name}"
    if isinstance(v, Const):
        return f"const:{v.value}"
    if isinstance(v, NullConst):
        return "const:null"
    if isinstance(v, Field):
        return f".{v.name}"
    raise TypeError(v)


def block_id(m: ModuleIR, func: str, label: str) -> str:
    return f"{m.func_id(func)}#{label}"


def site_of_alloca(i: Instruction) -> str:
    return f"alloca:{i.id}"


def extract_facts(m: ModuleIR) -> dict[str, set[tuple]]:
    facts: dict[str, set[tuple]] = {name: set() for name in SCHEMA}
    add = lambda rel, *t: facts[rel].add(tuple(t))  # noqa: E731
    for g in m.globals:
        add("global_var", f"@{g.name}", g.name)
    for f in m.functions:
        fid = m.func_id(f.name)
        add("func_name", fid, f"@{f.name}")
        if f.is_external:
            add("func_external", fid)
        for k, (pname, _) in enumerate(f.params):
            add("func_param", fid, value_id(m, f.name, Local(pname)), k)
        for b in f.blocks:
            bid = block_id(m, f.name, b.label)
            for s in b.successors():
                add("branch_edge", bid, block_id(m, f.name, s))
            for i in b.instructions:
                _instruction_facts(m, f, i, bid, add)
    header, bound = detect_loops(m)
    facts["loop_header"] = header
    facts["loop_bound_const"] = bound
    return facts


def _instruction_facts(m: ModuleIR, f: FunctionDef, i: Instruction, bid: str, add) -> None:
    vid = lambda v: value_id(m, f.name, v)  # noqa: E731
    iid = i.id
    add("instr_func", iid, m.func_id(f.name))
    add("instr_pos", iid, i.loc.line, i.loc.col)
    add("instr_file", iid, i.loc.file)
    add("instr_opcode", iid, i.opcode)
    add("block_of", iid, bid)
    if i.result:
        add("instr_result", iid, vid(Local(i.result)))
    op = i.opcode
    ops = i.operands
    if op in ARITH:
        add(f"{op}_instr", iid)
        add(f"{op}_instr_first_operand", iid, vid(ops[0]))
        add(f"{op}_instr_second_operand", iid, vid(ops[1]))
    elif op == "load":
        add("load_instr_address", iid, vid(ops[0]))
    elif op == "store":
        add("store_instr_value", iid, vid(ops[0]))
        add("store_instr_address", iid, vid(ops[1]))
    elif op == "gep":
        add("gep_instr_base", iid, vid(ops[0]))
        for k, idx in enumerate(ops[1:]):
            add("gep_instr_index", iid, k, vid(idx))
    elif op == "alloca":
        add("alloca_instr", iid, site_of_alloca(i))
    elif op == "call":
        add("call_instr_fn", iid, m.func_id(i.callee))
        for k, a in enumerate(ops):
            add("call_instr_arg", iid, k, vid(a))
    elif op == "memcpy":
        add("memcpy_instr", iid, vid(ops[0]), vid(ops[1]), vid(ops[2]))
    elif op == "free":
        add("free_instr", iid, vid(ops[0]))


# --------------------------------------------------------------------------- loops


def detect_loops(m: ModuleIR) -> tuple[set[tuple], set[tuple]]:
    """``loop_header`` and ``loop_bound_const`` tuples. Raises ``IrreducibleCFG``."""
    headers: set[tuple] = set()
    bounds: set[tuple] = set()
    for f in m.functions:
        if f.is_external:
            continue
        for loop in natural_loops(f):
            hid = block_id(m, f.name, loop.header)
            headers.add((m.func_id(f.name), hid))
            n = constant_trip_count(f, loop)
            if n is not None:
                bounds.add((hid, n))
    return headers, bounds


_MAX_TRIPS = 1 << 16


def constant_trip_count(f: FunctionDef, loop) -> Optional[int]:
    """Iterations of ``loop`` when it is a counted loop ``i = c0; cond(i, N); i += step``.

    Recognizes an induction phi in the header whose back-edge value is
    ``add %i, C``, with a single exiting ``condbr`` testing ``icmp`` of the phi
    (in the header) or of the increment (in a latch) against a constant.
    Anything else is treated as unbounded.
    """
    header = f.block(loop.header)
    defs = {i.result: i for i in f.instructions() if i.result}
    exits = []
    for lbl in loop.body:
        term = f.block(lbl).terminator
        if term is None:
            continue
        if term.opcode == "condbr":
            inside = [t in loop.body for t in term.labels]
            if inside.count(True) == 1:
                exits.append((lbl, term, inside.index(True)))
        elif term.opcode == "ret":
            return None
    if len(exits) != 1:
        return None
    exit_block, br, stay_idx = exits[0]
    cond = br.operands[0]
    if not isinstance(cond, Local) or cond.name not in defs:
        return None
    cmp = defs[cond.name]
    if cmp.opcode != "icmp" or not isinstance(cmp.type, IntType):
        return None
    width = cmp.type.width
    for phi in header.instructions:
        if phi.opcode != "phi":
            continue
        init = step = None
        for v, lbl in zip(phi.operands, phi.labels):
            if lbl in loop.body:
                if not isinstance(v, Local) or v.name not in defs:
                    break
                inc = defs[v.name]
                if inc.opcode == "add" and inc.operands[0] == Local(phi.result) \
                        and isinstance(inc.operands[1], Const):
                    step = (inc, inc.operands[1].value)
                else:
                    break
            elif isinstance(v, Const):
                if init is not None and init != v.value:
                    break
                init = v.value
            else:
                break
        else:
            if init is None or step is None:
                continue
            inc, c = step
            a, b = cmp.operands
            if a == Local(phi.result) and exit_block == loop.header:
                tested, post = "phi", False
            elif a == Local(inc.result) and isinstance(b, Const):
                tested, post = "inc", True
            else:
                continue
            if not isinstance(b, Const):
                continue
            return _simulate(init, c, b.value, cmp.pred, width, post, stay_idx == 0)
    return None


def _simulate(init: int, step: int, limit: int, pred: str, width: int,
              test_after_increment: bool, stay_when_true: bool) -> Optional[int]:
    mask = (1 << width) - 1

    def holds(v: int) -> bool:
        ok = _icmp(pred, v & mask, limit & mask, width)
        return ok == stay_when_true

    v = init & mask
    trips = 0
    while trips <= _MAX_TRIPS:
        if not test_after_increment and not holds(v):
            return trips
        trips += 1
        v = (v + step) & mask
        if test_after_increment and not holds(v):
            return trips
    return None


def _signed(v: int, width: int) -> int:
    return v - (1 << width) if v >> (width - 1) & 1 else v


def _icmp(pred: str, a: int, b: int, width: int) -> bool:
    if pred.startswith("s"):
        a, b = _signed(a, width), _signed(b, width)
        pred = "u" + pred[1:]
    return {
        "eq": a == b, "ne": a != b, "ult": a < b, "ule": a <= b, "ugt": a > b, "uge": a >= b,
    }[pred]


__all__ = ["SCHEMA", "IrreducibleCFG", "block_id", "detect_loops", "extract_facts", "value_id"]
