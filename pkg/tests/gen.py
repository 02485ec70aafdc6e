"""Hypothesis strategies producing valid mini-IR text with an independent opcode tally."""

from __future__ import annotations

from collections import Counter

from hypothesis import strategies as st

ARITH = ("add", "sub", "mul", "udiv", "sdiv")
PREDS = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")


@st.composite
def modules(draw, max_funcs: int = 3):
    """(text, Counter of opcodes written) for a random well-formed module."""
    w = draw(st.sampled_from([8, 16, 32]))
    counts: Counter = Counter()
    lines = ["module gen", 'source "gen.c"', "", "struct Pair { a: i%d, b: i%d }" % (w, w),
             "global @g : i%d" % w, ""]
    nfun = draw(st.integers(1, max_funcs))
    arity: list = []
    for k in range(nfun):
        name = f"f{k}"
        nparams = draw(st.integers(1, 3))
        params = [f"%p{j}" for j in range(nparams)]
        lines.append(f"fn @{name}({', '.join(f'{p}: i{w}' for p in params)}, %s: Pair*) -> i{w} {{")
        lines.append("entry:")
        vals = list(params)
        n = draw(st.integers(0, 6))
        for j in range(n):
            kind = draw(st.sampled_from(["arith", "arith", "load", "store", "call"]))
            if kind == "arith":
                op = draw(st.sampled_from(ARITH))
                a = draw(st.sampled_from(vals))
                b = draw(st.one_of(st.sampled_from(vals), st.integers(0, 9).map(str)))
                lines.append(f"  %v{j} = {op} i{w} {a}, {b}")
                counts[op] += 1
                vals.append(f"%v{j}")
            elif kind == "load":
                fld = draw(st.sampled_from(["a", "b"]))
                lines.append(f"  %q{j} = gep %s, .{fld}")
                lines.append(f"  %v{j} = load i{w}, %q{j}")
                counts["gep"] += 1
                counts["load"] += 1
                vals.append(f"%v{j}")
            elif kind == "store":
                lines.append(f"  store i{w} {draw(st.sampled_from(vals))}, @g")
                counts["store"] += 1
            elif kind == "call" and k > 0:
                callee = draw(st.integers(0, k - 1))
                cparams = arity[callee]
                args = ", ".join(draw(st.sampled_from(vals)) for _ in range(cparams)) + ", %s"
                lines.append(f"  %v{j} = call @f{callee}({args})")
                counts["call"] += 1
                vals.append(f"%v{j}")
        if draw(st.booleans()):
            pred = draw(st.sampled_from(PREDS))
            lines.append(f"  %c = icmp {pred} i{w} {draw(st.sampled_from(vals))}, {draw(st.integers(0, 9))}")
            lines.append("  condbr %c, then, else")
            lines.append("then:")
            lines.append(f"  ret i{w} {draw(st.sampled_from(vals))}")
            lines.append("else:")
            lines.append(f"  ret i{w} {draw(st.sampled_from(vals))}")
            counts.update({"icmp": 1, "condbr": 1, "ret": 2})
        else:
            lines.append(f"  ret i{w} {draw(st.sampled_from(vals))}")
            counts["ret"] += 1
        lines.append("}")
        lines.append("")
        arity.append(nparams)
    return "\n".join(lines), counts
