"""The 7-tuple vulnerability description ⟨P, E, I, A, K, L, U⟩ and its ``.vd`` file format."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import networkx as nx

from ..mir.cfg import call_graph
from ..mir.expr import display_expr, expr_locals, format_expr, parse_expr
from ..mir.ir import ArrayType, Local, ModuleIR, PtrType, StructType, TypeDesc, is_scalar
from ..points_to import PointsToResult, run_pointer_analysis
from ..vulnrules import AnalysisConfig, CandidateFinding, VulnCategory, assertion_for
from .sdg import FREE, DependenceGraph, Slice, build_sdg, two_pass_slice

log = logging.getLogger(__name__)


class NonExploitable(Exception):
    """The finding's entry point cannot reach the vulnerable instruction."""


@dataclass(frozen=True)
class InputRef:
    """One attacker-controlled input at field granularity.

    ``root`` is ``param`` or ``global``; ``hops`` lists the field path inside each
    object along a chain of pointer dereferences (``[()]`` is ``*p`` itself).
    ``kind`` is ``cell`` (memory behind a pointer or a global), ``int`` (an integer
    parameter) or ``addr`` (the address of the object behind a pointer parameter).
    """

    kind: str
    root: str
    base: str
    hops: tuple = ()
    type: str = "i64"

    @property
    def symbol(self) -> str:
        if self.kind == "addr":
            return f"&{self.base}"
        if self.kind == "int":
            return self.base
        s = self.base
        for j, h in enumerate(self.hops):
            if j == 0 and self.root == "global":
                s += "".join(_sel(x, dot=True) for x in h)
            elif h == ():
                s = "*" + s
            else:
                s += "->" + "".join(_sel(x, dot=k > 0) for k, x in enumerate(h))
        return s

    @property
    def label(self) -> str:
        """Display name; ``*p`` is shown as ``p``."""
        if self.kind == "cell" and self.root == "param" and self.hops == ((),):
            return self.base
        return self.symbol

    def to_json(self) -> dict:
        return {"kind": self.kind, "root": self.root, "base": self.base,
                "hops": [list(h) for h in self.hops], "type": self.type}

    @classmethod
    def from_json(cls, d: dict) -> "InputRef":
        return cls(d["kind"], d["root"], d["base"], tuple(tuple(h) for h in d["hops"]), d["type"])


def _sel(x: str, dot: bool) -> str:
    if x == "[]":
        return "[]"
    return ("." if dot else "") + x


@dataclass
class VulnerabilityDescription:
    id: str
    category: str
    P: str
    E: str
    I: tuple
    A: str
    K: str
    L: str
    U_functions: tuple = ()
    U_lines: tuple = ()
    assertion: str = ""
    helpers: tuple = ()
    sinks: tuple = ()
    module_path: str = ""
    source: str = ""
    slice_instructions: tuple = ()

    @property
    def U(self) -> tuple:
        return tuple(f"@{f}" for f in self.U_functions) + tuple(self.U_lines)

    @property
    def line(self) -> int:
        return int(self.L.rsplit(":", 1)[1])

    def assertion_expr(self):
        return parse_expr(self.assertion)

    def display(self) -> str:
        return (f"P = {self.P}, E = {self.E}, K = {self.K}, A = {self.A}, "
                f"I = {', '.join(i.label for i in self.I)}, L = {self.L}, "
                f"U = {{{', '.join(self.U)}}}")


def _attacker_sites(m: ModuleIR, cfg: AnalysisConfig, entry: str):
    inputs = cfg.resolve_entrypoints(m).get(entry)
    if inputs is None:
        return {}, {}
    f = m.function(entry)
    pointer_params, int_params = {}, {}
    for idx in inputs.params:
        pname, ptype = f.params[idx]
        if isinstance(ptype, PtrType):
            pointer_params[f"param:{entry}:%{pname}"] = ("param", pname)
        else:
            int_params[idx] = pname
    for gname in inputs.globals:
        pointer_params[f"@{gname}"] = ("global", gname)
    return pointer_params, int_params


def _split_site(site: str, roots: dict):
    """``param:E:%p/a/b*/c*`` -> (root descriptor, hops prefix) or ``None``."""
    for root_site, desc in roots.items():
        if site == root_site:
            return desc, []
        if site.startswith(root_site + "/") and site.endswith("*"):
            rest = site[len(root_site):]
            hops = []
            for seg in rest.split("*")[:-1]:
                seg = seg.strip("/")
                hops.append(tuple(seg.split("/")) if seg else ())
            return desc, hops
    return None


def _scalar_paths(t: Optional[TypeDesc], structs) -> list[tuple[tuple, TypeDesc]]:
    if t is None:
        return [((), None)]
    if is_scalar(t):
        return [((), t)]
    out = []
    if isinstance(t, ArrayType):
        for p, tt in _scalar_paths(t.elem, structs):
            out.append((("[]",) + p, tt))
    elif isinstance(t, StructType) and t.name in structs:
        for fname, ftype in structs[t.name].fields:
            for p, tt in _scalar_paths(ftype, structs):
                out.append(((fname,) + p, tt))
    return out


def _cell_type(pts: PointsToResult, site: str, path: tuple, structs) -> Optional[TypeDesc]:
    t = pts.site_types.get(site)
    for sel in path:
        if t is None:
            return None
        if sel == "[]":
            t = t.elem if isinstance(t, ArrayType) else None
        elif isinstance(t, StructType) and t.name in structs:
            t = structs[t.name].field_type(sel)
        else:
            return None
    return t


def compute_inputs(m: ModuleIR, cfg: AnalysisConfig, finding: CandidateFinding, sl: Slice,
                   pts: PointsToResult, sdg: DependenceGraph) -> tuple:
    from ..facts import value_id

    structs = {s.name: s for s in m.structs}
    roots, int_params = _attacker_sites(m, cfg, finding.entry)
    found: dict[str, InputRef] = {}

    def add_cell(site: str, path: tuple):
        hit = _split_site(site, roots)
        if hit is None:
            return
        (root, base), hops = hit
        t = _cell_type(pts, site, path, structs)
        for sub, st in _scalar_paths(t, structs):
            ref = InputRef("cell", root, base, tuple(hops) + (path + sub,), str(st) if st else "i64")
            found.setdefault(ref.symbol, ref)

    for iid in sorted(sl.instructions):
        func, _, _ = m.locate(iid)
        i = m.instruction(iid)
        vid = lambda v: value_id(m, func.name, v)  # noqa: E731
        if i.opcode == "load":
            for site, path in sorted(pts.pts.get(vid(i.operands[0]), ())):
                add_cell(site, path)
        elif i.opcode == "memcpy":
            for site, path in sorted(pts.pts.get(vid(i.operands[1]), ())):
                add_cell(site, path)
    for k, pname in int_params.items():
        if ("fin", finding.entry, k) in sl.nodes:
            f = m.function(finding.entry)
            ref = InputRef("int", "param", pname, (), str(f.params[k][1]))
            found.setdefault(ref.symbol, ref)
    if finding.category in (VulnCategory.SmramRead, VulnCategory.SmramWrite):
        k = m.instruction(finding.instr)
        ptr = {"load": 0, "store": 1}.get(k.opcode)
        if ptr is None:
            ptr = 1 if finding.category == VulnCategory.SmramRead else 0
        for site, _ in sorted(pts.pts.get(value_id(m, finding.func, k.operands[ptr]), ())):
            if site in roots and roots[site][0] == "param":
                ref = InputRef("addr", "param", roots[site][1], (), "i64")
                found.setdefault(ref.symbol, ref)
    return tuple(found[s] for s in sorted(found))


def _supergraph(m: ModuleIR) -> nx.DiGraph:
    """Instruction-level interprocedural CFG (returns go to every call site)."""
    g = nx.DiGraph()
    funcs = {f.name: f for f in m.functions if not f.is_external}
    ret_sites: dict[str, list[str]] = {n: [] for n in funcs}
    for f in funcs.values():
        for b in f.blocks:
            ins = b.instructions
            for a, c in zip(ins, ins[1:]):
                g.add_edge(a.id, c.id)
                if a.opcode == "call" and a.callee in funcs:
                    ret_sites[a.callee].append(c.id)
            for s in b.successors():
                g.add_edge(ins[-1].id, f.block(s).instructions[0].id)
            for i in ins:
                g.add_node(i.id)
                if i.opcode == "call" and i.callee in funcs:
                    g.add_edge(i.id, funcs[i.callee].entry.instructions[0].id)
    for f in funcs.values():
        for i in f.instructions():
            if i.opcode == "ret":
                for r in ret_sites[f.name]:
                    g.add_edge(i.id, r)
    return g


def emit_vuln_description(m: ModuleIR, cfg: AnalysisConfig, finding: CandidateFinding, sl: Slice,
                          pts: Optional[PointsToResult] = None, sdg: Optional[DependenceGraph] = None,
                          module_path: str = "") -> VulnerabilityDescription:
    cg = call_graph(m)
    if finding.entry not in cg or finding.func not in ({finding.entry} | nx.descendants(cg, finding.entry)):
        log.info("dropping %s: @%s cannot reach @%s", finding.id, finding.entry, finding.func)
        raise NonExploitable(f"entry point @{finding.entry} cannot reach {finding.instr}")
    pts = pts or run_pointer_analysis(m)
    sdg = sdg or build_sdg(m, None, pts)
    a = assertion_for(finding, m, cfg)
    inputs = compute_inputs(m, cfg, finding, sl, pts, sdg)
    reach = {finding.entry} | nx.descendants(cg, finding.entry)
    sliced_funcs = {m.locate(i)[0].name for i in sl.instructions}
    stub_funcs = tuple(sorted(
        f.name for f in m.functions
        if f.name in reach and not f.is_external and f.name != finding.entry
        and f.name not in sliced_funcs))
    sg = _supergraph(m)
    e_first = m.function(finding.entry).entry.instructions[0].id
    before = (nx.descendants(sg, e_first) | {e_first}) & nx.ancestors(sg, finding.instr)
    retained = sl.retained_lines(m)
    discarded = set()
    for iid in before:
        if iid in sl.instructions:
            continue
        f, _, _ = m.locate(iid)
        if f.name in stub_funcs:
            continue
        loc = m.instruction(iid).loc
        if (loc.file, loc.line) not in retained:
            discarded.add((loc.file, loc.line))
    k = m.instruction(finding.instr)
    return VulnerabilityDescription(
        id=finding.id,
        category=finding.category.value,
        P=m.name,
        E=finding.entry,
        I=inputs,
        A=f"assert({display_expr(a.expr)})",
        K=finding.instr,
        L=f"{k.loc.file}:{k.loc.line}",
        U_functions=stub_funcs,
        U_lines=tuple(f"{f}:{ln}" for f, ln in sorted(discarded)),
        assertion=format_expr(a.expr),
        helpers=tuple((n, tuple(str(o) for o in ops)) for n, ops in a.helpers),
        sinks=tuple(finding.taint_sinks),
        module_path=module_path,
        source=m.source_file,
        slice_instructions=tuple(sorted(sl.instructions, key=_iid_key)),
    )


def _iid_key(iid: str):
    head, ord_ = iid.rsplit(":", 1)
    return head, int(ord_)


def slice_for_finding(m: ModuleIR, cfg: AnalysisConfig, finding: CandidateFinding,
                      sdg: DependenceGraph) -> Slice:
    """Slice w.r.t. the values the instantiated assertion reads at K."""
    a = assertion_for(finding, m, cfg)
    names = set(expr_locals(a.expr))
    for name, ops in a.helpers:
        names.discard(name)
        names |= {o.name for o in ops if isinstance(o, Local)}
    extra = (FREE,) if finding.category == VulnCategory.UseAfterFree else ()
    return two_pass_slice(sdg, finding.instr, names, extra)


# --------------------------------------------------------------------------- .vd files

_ORDER = ("id", "category", "P", "E", "I", "A", "K", "L", "U", "assertion", "helpers", "inputs",
          "stubs", "discarded", "sinks", "slice", "module", "source")


def dumps_vd(vd: VulnerabilityDescription) -> str:
    fields = {
        "id": vd.id,
        "category": vd.category,
        "P": vd.P,
        "E": vd.E,
        "I": ", ".join(i.label for i in vd.I),
        "A": vd.A,
        "K": vd.K,
        "L": vd.L,
        "U": ", ".join(vd.U),
        "assertion": vd.assertion,
        "helpers": json.dumps([[n, list(ops)] for n, ops in vd.helpers]),
        "inputs": json.dumps([i.to_json() for i in vd.I], sort_keys=True),
        "stubs": json.dumps(list(vd.U_functions)),
        "discarded": json.dumps(list(vd.U_lines)),
        "sinks": json.dumps([list(s) for s in vd.sinks]),
        "slice": json.dumps(list(vd.slice_instructions)),
        "module": vd.module_path,
        "source": vd.source,
    }
    lines = ["# vulnerability description <P, E, I, A, K, L, U>"]
    lines += [f"{k}: {fields[k]}" for k in _ORDER]
    return "\n".join(lines) + "\n"


def loads_vd(text: str) -> VulnerabilityDescription:
    d = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition(": ")
        d[key.strip()] = value.rstrip("\n")
    missing = [k for k in ("id", "category", "P", "E", "A", "K", "L", "assertion") if k not in d]
    if missing:
        raise ValueError(f".vd file lacks field(s): {', '.join(missing)}")
    return VulnerabilityDescription(
        id=d["id"],
        category=d["category"],
        P=d["P"],
        E=d["E"],
        I=tuple(InputRef.from_json(x) for x in json.loads(d.get("inputs", "[]"))),
        A=d["A"],
        K=d["K"],
        L=d["L"],
        U_functions=tuple(json.loads(d.get("stubs", "[]"))),
        U_lines=tuple(json.loads(d.get("discarded", "[]"))),
        assertion=d["assertion"],
        helpers=tuple((n, tuple(ops)) for n, ops in json.loads(d.get("helpers", "[]"))),
        sinks=tuple(tuple(s) for s in json.loads(d.get("sinks", "[]"))),
        module_path=d.get("module", ""),
        source=d.get("source", ""),
        slice_instructions=tuple(json.loads(d.get("slice", "[]"))),
    )


def write_vd(path, vd: VulnerabilityDescription) -> None:
    Path(path).write_text(dumps_vd(vd), encoding="utf-8")


def read_vd(path) -> VulnerabilityDescription:
    return loads_vd(Path(path).read_text(encoding="utf-8"))
