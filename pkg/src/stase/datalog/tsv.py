"""Tab-separated fact files: one relation per ``<name>.facts`` file."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Optional

_INT = re.compile(r"-?\d+\Z")


def _cell(v) -> str:
    s = str(v)
    if "\t" in s or "\n" in s:
        raise ValueError(f"value {s!r} cannot be stored in a TSV cell")
    return s


def write_relation(path: Path, tuples: Iterable[tuple]) -> None:
    from .engine import _sort_key

    rows = sorted(tuples, key=_sort_key)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in rows:
            fh.write("\t".join(_cell(v) for v in t) + "\n")


def read_relation(path: Path, types: Optional[tuple[str, ...]] = None) -> set[tuple]:
    """Read one relation. ``types`` holds ``number``/``symbol`` per column; without it,
    cells that look like integers are read as integers."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            row = []
            for k, c in enumerate(cells):
                kind = types[k] if types is not None and k < len(types) else None
                if kind == "number" or (kind is None and _INT.match(c)):
                    row.append(int(c))
                else:
                    row.append(c)
            out.add(tuple(row))
    return out


def write_facts(directory, facts: dict[str, Iterable[tuple]]) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(facts):
        p = d / f"{name}.facts"
        write_relation(p, facts[name])
        written.append(p)
    return written


def read_facts(directory, schema: Optional[dict[str, tuple[str, ...]]] = None) -> dict[str, set[tuple]]:
    d = Path(directory)
    out = {}
    for p in sorted(d.glob("*.facts")):
        name = p.name[: -len(".facts")]
        out[name] = read_relation(p, (schema or {}).get(name))
    return out
