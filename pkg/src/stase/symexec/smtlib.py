"""SMT-LIB2 (QF_BV) emission and the optional external-solver bridge."""

from __future__ import annotations

import re
import shlex
import subprocess
from typing import Optional

from . import expr as E
from .expr import SymExpr

_BV = {"add": "bvadd", "sub": "bvsub", "mul": "bvmul", "udiv": "bvudiv", "sdiv": "bvsdiv",
       "and": "bvand", "or": "bvor", "xor": "bvxor"}
_CMP = {"ult": "bvult", "ule": "bvule", "slt": "bvslt", "sle": "bvsle"}


def _lit(v: int, w: int) -> str:
    return f"#b{v:0{w}b}"


def _quote(name: str) -> str:
    return "|" + name.replace("|", "_").replace("\\", "_") + "|"


def to_smtlib(c: SymExpr) -> str:
    """One ``(set-logic QF_BV)`` script asserting ``c == #b1``; nodes become define-funs."""
    lines = ["(set-logic QF_BV)", "(set-option :produce-models true)"]
    for name, w in c.free_symbols().items():
        lines.append(f"(declare-fun {_quote(name)} () (_ BitVec {w}))")
    names: dict[int, str] = {}
    for k, n in enumerate(E.postorder(c)):
        if n.op == "const":
            names[id(n)] = _lit(n.val, n.width)
            continue
        if n.op == "sym":
            names[id(n)] = _quote(n.val)
            continue
        a = [names[id(x)] for x in n.args]
        if n.op in _BV:
            body = f"({_BV[n.op]} {a[0]} {a[1]})"
        elif n.op == "eq":
            body = f"(ite (= {a[0]} {a[1]}) #b1 #b0)"
        elif n.op in _CMP:
            body = f"(ite ({_CMP[n.op]} {a[0]} {a[1]}) #b1 #b0)"
        elif n.op == "not":
            body = f"(bvnot {a[0]})"
        elif n.op == "ite":
            body = f"(ite (= {a[0]} #b1) {a[1]} {a[2]})"
        elif n.op == "zext":
            body = f"((_ zero_extend {n.width - n.args[0].width}) {a[0]})"
        elif n.op == "trunc":
            body = f"((_ extract {n.width - 1} 0) {a[0]})"
        else:  # pragma: no cover
            raise ValueError(n.op)
        fn = f"n{k}"
        lines.append(f"(define-fun {fn} () (_ BitVec {n.width}) {body})")
        names[id(n)] = fn
    lines.append(f"(assert (= {names[id(c)]} #b1))")
    lines += ["(check-sat)", "(get-model)", ""]
    return "\n".join(lines)


_MODEL_RE = re.compile(
    r"\(define-fun\s+(\|[^|]*\||[^\s()]+)\s+\(\)\s+\(_\s+BitVec\s+(\d+)\)\s+(#b[01]+|#x[0-9a-fA-F]+|\(_\s+bv(\d+)\s+\d+\))")


def parse_model(text: str) -> dict[str, int]:
    out = {}
    for m in _MODEL_RE.finditer(text):
        name = m.group(1).strip("|")
        lit = m.group(3)
        if lit.startswith("#b"):
            v = int(lit[2:], 2)
        elif lit.startswith("#x"):
            v = int(lit[2:], 16)
        else:
            v = int(m.group(4))
        out[name] = v
    return out


def run_external(cmd: str, script: str, free: dict[str, int],
                 timeout: float = 60.0) -> tuple[str, dict[str, int]]:
    """Run ``cmd`` (reading the script on stdin); returns (status, model)."""
    try:
        proc = subprocess.run(shlex.split(cmd), input=script, capture_output=True, text=True,
                              timeout=timeout, check=False)
    except (OSError, subprocess.TimeoutExpired):
        return "unknown", {}
    out = proc.stdout.strip()
    first = out.splitlines()[0].strip() if out else ""
    if first == "unsat":
        return "unsat", {}
    if first == "sat":
        model = parse_model(out)
        return "sat", {k: v for k, v in model.items() if k in free}
    return "unknown", {}


def emitted_name(index: int) -> Optional[str]:
    return f"query_{index:04d}.smt2"
