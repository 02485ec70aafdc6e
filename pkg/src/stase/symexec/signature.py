"""Hoare-triple vulnerability signatures {Π} Θ {Ω}."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..harness.peh import InstrumentedSegment, PathExplorationHarness, artifact_stem
from ..mir.expr import display_expr
from . import expr as E
from .engine import ExplorationResult
from .expr import SymExpr


@dataclass
class Disjunct:
    """One violating path: its branch/guard atoms plus the violated assertion."""

    fork_id: str
    atoms: tuple  # path-constraint conjuncts
    violation: SymExpr  # ¬A evaluated on this path
    witness: dict

    @property
    def constraint(self) -> SymExpr:
        return E.and_(*self.atoms, self.violation)

    def text(self) -> str:
        parts = [E.to_text(a) for a in self.atoms] + [E.to_text(self.violation)]
        return " and ".join(parts)

    def to_json(self) -> dict:
        return {
            "fork_id": self.fork_id,
            "atoms": [{"tree": E.to_json(a), "text": E.to_text(a)} for a in self.atoms],
            "violation": {"tree": E.to_json(self.violation), "text": E.to_text(self.violation)},
            "text": self.text(),
            "witness": dict(sorted(self.witness.items())),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Disjunct":
        return cls(d["fork_id"], tuple(E.from_json(a["tree"]) for a in d["atoms"]),
                   E.from_json(d["violation"]["tree"]), dict(d["witness"]))


@dataclass
class VulnerabilitySignature:
    id: str
    category: str
    disjuncts: list
    segment: dict
    postcondition: str
    assertion: str
    location: str
    stats: dict = field(default_factory=dict)

    @property
    def precondition(self) -> SymExpr:
        return E.or_(*(d.constraint for d in self.disjuncts))

    def text(self) -> str:
        lines = ["1)Precondition:-"]
        for k, d in enumerate(self.disjuncts):
            lines.append(("(" if k == 0 else "or (") + d.text() + ")")
        seg = self.segment
        lines += [
            "2)Code Segment:-",
            f"  Entry point: {seg['entry_point']}",
            f"  Symbolic Argument: {', '.join(seg['symbolic_arguments']) or '-'}",
            f"  Assertion Location: {seg['assertion_location']}",
            "3)Postcondition:-",
            f"{self.postcondition} at the program location {seg['assertion_location']}",
        ]
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "id": self.id, "category": self.category,
            "precondition": [d.to_json() for d in self.disjuncts],
            "segment": self.segment,
            "postcondition": {"text": self.postcondition, "assertion": self.assertion,
                              "location": self.location},
            "stats": self.stats,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "VulnerabilitySignature":
        post = d["postcondition"]
        return cls(d["id"], d["category"], [Disjunct.from_json(x) for x in d["precondition"]],
                   d["segment"], post["text"], post["assertion"], post["location"], d.get("stats", {}))


def _located(seg: InstrumentedSegment, fname: str, line: Optional[int] = None) -> str:
    f = seg.module.function(fname)
    return f"{fname}@{f.loc.file}:{line if line is not None else f.loc.line}"


def build_signature(result: ExplorationResult, seg: InstrumentedSegment, peh: PathExplorationHarness,
                    category: str = "") -> Optional[VulnerabilitySignature]:
    """None iff no violating path was found."""
    if not result.violations:
        return None
    seen = set()
    disjuncts = []
    for rec in result.violations:
        d = Disjunct(rec.fork_id, tuple(rec.constraints), E.not_(rec.assertion), rec.model)
        key = id(d.constraint)
        if key in seen:
            continue
        seen.add(key)
        disjuncts.append(d)
    f, _, _ = seg.module.locate(seg.assertion)
    a = seg.module.instruction(seg.assertion)
    loc = a.loc
    assert_text = display_expr(a.expr)
    symbolic = []
    for v in peh.symbolic_vars:
        if v.symbol not in symbolic:
            symbolic.append(v.symbol)
    segment = {
        "theta": f"θ_{artifact_stem(peh.id)}.mir",
        "digest": seg.digest,
        "entry_point": _located(seg, seg.entry),
        "symbolic_arguments": symbolic,
        "assertion_location": f"{f.name}@{loc.file}:{loc.line}",
        "target": seg.target,
        "stubs": list(peh.stubs),
    }
    category = category or peh.id.split(".", 1)[0]  # finding ids lead with the category
    return VulnerabilitySignature(peh.id, category, disjuncts, segment, f"!({assert_text})", assert_text,
                                  f"{loc.file}:{loc.line}", dict(result.stats))


def write_signature(out_dir, sig: VulnerabilitySignature) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = artifact_stem(sig.id)
    js = out / f"sig_{stem}.json"
    txt = out / f"sig_{stem}.txt"
    js.write_text(sig.dumps(), encoding="utf-8")
    txt.write_text(sig.text(), encoding="utf-8")
    return js, txt


def read_signature(path) -> VulnerabilitySignature:
    return VulnerabilitySignature.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
