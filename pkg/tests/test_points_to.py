from hypothesis import given, settings
from hypothesis import strategies as st

from stase import corpus
from stase.mir import parse_file, parse_module
from stase.points_to import CONTEXT, run_pointer_analysis

FIELDS = """
struct P { a: i8*, b: i8* }
fn @f(%q: P*) -> i8 {
entry:
  %s = alloca P
  %x = alloca i8
  %y = alloca i8
  %pa = gep %s, .a
  %pb = gep %s, .b
  store i8* %x, %pa
  store i8* %y, %pb
  %la = load i8*, %pa
  %lb = load i8*, %pb
  %qa = gep %q, .a
  %lq = load i8*, %qa
  %v = load i8, %la
  ret i8 %v
}
"""


def _v(m, name, func="f"):
    return f"{m.func_id(func)}:%{name}"


def test_field_sensitivity():
    m = parse_module(FIELDS)
    r = run_pointer_analysis(m)
    assert r.points_to(_v(m, "la")) == r.points_to(_v(m, "x"))
    assert r.points_to(_v(m, "lb")) == r.points_to(_v(m, "y"))
    assert not r.may_alias(_v(m, "la"), _v(m, "lb"))
    [(site, path)] = r.points_to(_v(m, "pa"))
    assert path == ("a",) and site.startswith("alloca:")


def test_parameters_get_unknown_objects():
    m = parse_module(FIELDS)
    r = run_pointer_analysis(m)
    assert r.points_to(_v(m, "q")) == {("param:f:%q", ())}
    assert r.points_to(_v(m, "qa")) == {("param:f:%q", ("a",))}
    [(site, _)] = r.points_to(_v(m, "lq"))
    assert site.startswith("param:f:%q") and site.endswith("*")


def test_interprocedural_return_and_argument():
    text = """
fn @id(%p: i8*) -> i8* {
entry:
  ret i8* %p
}
fn @main() -> i8 {
entry:
  %a = alloca i8
  %b = alloca i8
  %ra = call @id(%a)
  %rb = call @id(%b)
  %v = load i8, %ra
  ret i8 %v
}
"""
    m = parse_module(text)
    r = run_pointer_analysis(m)
    a = r.points_to(_v(m, "a", "main"))
    b = r.points_to(_v(m, "b", "main"))
    # context-insensitive: both results merge both objects, plus the unknown caller object
    unknown = {("param:id:%p", ())}
    assert r.points_to(_v(m, "ra", "main")) == a | b | unknown
    assert r.points_to(_v(m, "p", "id")) == a | b | unknown


def test_provenance_reaches_loaded_scalars():
    m = parse_file(corpus.path("div_tp"))
    r = run_pointer_analysis(m)
    count = _v(m, "count", "AverageHandler")
    assert r.points_to(count) == set()
    assert ("param:AverageHandler:%Req", ("Count",)) in r.influences(count)
    assert all(t[0] == CONTEXT for t in r.var_points_to())


@st.composite
def pointer_programs(draw):
    """Straight-line programs shuffling addresses between pointer slots."""
    n_slots = draw(st.integers(1, 4))
    n_obj = draw(st.integers(1, 4))
    lines = ["fn @f() {", "entry:"]
    lines += [f"  %s{k} = alloca i8*" for k in range(n_slots)]
    lines += [f"  %o{k} = alloca i8" for k in range(n_obj)]
    ops = []
    for j in range(draw(st.integers(1, 12))):
        if draw(st.booleans()):
            o, s = draw(st.integers(0, n_obj - 1)), draw(st.integers(0, n_slots - 1))
            lines.append(f"  store i8* %o{o}, %s{s}")
            ops.append(("addr", o, s))
        else:
            a, b = draw(st.integers(0, n_slots - 1)), draw(st.integers(0, n_slots - 1))
            lines.append(f"  %t{j} = load i8*, %s{a}")
            lines.append(f"  store i8* %t{j}, %s{b}")
            ops.append(("copy", a, b, j))
    lines += ["  ret", "}"]
    return "\n".join(lines), n_slots, ops


@settings(max_examples=150, deadline=None)
@given(pointer_programs())
def test_soundness_against_concrete_execution(prog):
    text, n_slots, ops = prog
    m = parse_module(text)
    r = run_pointer_analysis(m)
    obj_cells = {k: next(iter(r.points_to(_v(m, f"o{k}")))) for k in range(4) if _v(m, f"o{k}") in r.pts}
    slots: dict = {}
    for op in ops:
        if op[0] == "addr":
            _, o, s = op
            slots[s] = o
        else:
            _, a, b, j = op
            if a in slots:
                assert obj_cells[slots[a]] in r.points_to(_v(m, f"t{j}"))
                slots[b] = slots[a]
            else:
                slots.pop(b, None)
    for s, o in slots.items():
        [slot_cell] = r.points_to(_v(m, f"s{s}"))
        assert obj_cells[o] in r.heap[slot_cell]
