"""Analysis configuration: entry points, attacker inputs, regions, forbidden callees.

Format (INI, keys are case sensitive)::

    [entrypoints]
    SmmProfileHandler = 2, 3, @mVariableBufferPayload

    [regions]
    names = SMRAM

    [forbidden]
    patterns = gBS_*, *BootServices*

    [categories]
    enabled = SmramWrite, DivisionByZero

    [options]
    loop_bound = 3
    call_depth = 8

Entry point keys may be ``fnmatch`` patterns; each value lists parameter indices
and ``@global`` names the attacker controls when entering through that function.
"""

from __future__ import annotations

import configparser
import fnmatch
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..mir.ir import ModuleIR


class VulnCategory(str, Enum):
    SmramRead = "SmramRead"
    SmramWrite = "SmramWrite"
    SmmCallout = "SmmCallout"
    IntegerUnderflow = "IntegerUnderflow"
    IntegerOverflow = "IntegerOverflow"
    DivisionByZero = "DivisionByZero"
    BufferOverflow = "BufferOverflow"
    OutOfBoundsAccess = "OutOfBoundsAccess"
    UseAfterFree = "UseAfterFree"

    def __str__(self) -> str:
        return self.value


ALL_CATEGORIES = tuple(VulnCategory)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EntryInputs:
    pattern: str
    params: tuple[int, ...] = ()
    globals: tuple[str, ...] = ()


@dataclass
class AnalysisConfig:
    entrypoints: list[EntryInputs] = field(default_factory=list)
    regions: list[str] = field(default_factory=list)
    forbidden_calls: list[str] = field(default_factory=list)
    enabled_categories: tuple[VulnCategory, ...] = ALL_CATEGORIES
    loop_bound: int = 3
    call_depth: int = 8

    def resolve_entrypoints(self, m: ModuleIR) -> dict[str, EntryInputs]:
        """Concrete entry function name -> its inputs (first matching pattern wins)."""
        out: dict[str, EntryInputs] = {}
        for e in self.entrypoints:
            for f in m.functions:
                if not f.is_external and fnmatch.fnmatchcase(f.name, e.pattern):
                    out.setdefault(f.name, e)
        return dict(sorted(out.items()))

    def validate(self, m: ModuleIR) -> None:
        names = {f.name: f for f in m.functions if not f.is_external}
        for e in self.entrypoints:
            matched = [n for n in names if fnmatch.fnmatchcase(n, e.pattern)]
            if not matched:
                raise ConfigError(f"unknown entrypoint {e.pattern!r}")
            for n in matched:
                nparams = len(names[n].params)
                for idx in e.params:
                    if not 0 <= idx < nparams:
                        raise ConfigError(
                            f"parameter index {idx} out of range for @{n} "
                            f"({nparams} parameter{'s' if nparams != 1 else ''})")
            for g in e.globals:
                if not any(gd.name == g for gd in m.globals):
                    raise ConfigError(f"unknown attacker global @{g}")
        for r in self.regions:
            if not any(rd.name == r for rd in m.regions):
                raise ConfigError(f"unknown region {r!r}")

    def with_categories(self, cats) -> "AnalysisConfig":
        from dataclasses import replace

        return replace(self, enabled_categories=tuple(VulnCategory(c) for c in cats))


def _split(value: str) -> list[str]:
    return [p.strip() for p in value.replace("\n", ",").split(",") if p.strip()]


def load_config(text: str, module: Optional[ModuleIR] = None) -> AnalysisConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep function names as written
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = AnalysisConfig()
    known = {"entrypoints", "regions", "forbidden", "categories", "options"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
    if cp.has_section("entrypoints"):
        for key, value in cp.items("entrypoints"):
            params, globs = [], []
            for item in _split(value):
                if item.startswith("@"):
                    globs.append(item[1:])
                else:
                    try:
                        params.append(int(item))
                    except ValueError:
                        raise ConfigError(f"bad attacker input {item!r} for {key}") from None
            cfg.entrypoints.append(EntryInputs(key.lstrip("@"), tuple(params), tuple(globs)))
    if cp.has_section("regions"):
        for key, value in cp.items("regions"):
            cfg.regions.extend(_split(value) if key == "names" else [key])
    if cp.has_section("forbidden"):
        for _, value in cp.items("forbidden"):
            cfg.forbidden_calls.extend(p.lstrip("@") for p in _split(value))
    if cp.has_section("categories") and cp.has_option("categories", "enabled"):
        try:
            cfg.enabled_categories = tuple(
                VulnCategory(c) for c in _split(cp.get("categories", "enabled")))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if cp.has_section("options"):
        cfg.loop_bound = cp.getint("options", "loop_bound", fallback=cfg.loop_bound)
        cfg.call_depth = cp.getint("options", "call_depth", fallback=cfg.call_depth)
        if cfg.loop_bound < 0 or cfg.call_depth < 1:
            raise ConfigError("loop_bound must be >= 0 and call_depth >= 1")
    if module is not None:
        cfg.validate(module)
    return cfg


def dump_config(cfg: AnalysisConfig) -> str:
    lines = ["[entrypoints]"]
    for e in cfg.entrypoints:
        items = [str(p) for p in e.params] + [f"@{g}" for g in e.globals]
        lines.append(f"{e.pattern} = {', '.join(items)}")
    lines += ["", "[regions]", f"names = {', '.join(cfg.regions)}"]
    lines += ["", "[forbidden]", f"patterns = {', '.join(cfg.forbidden_calls)}"]
    lines += ["", "[categories]", f"enabled = {', '.join(str(c) for c in cfg.enabled_categories)}"]
    lines += ["", "[options]", f"loop_bound = {cfg.loop_bound}", f"call_depth = {cfg.call_depth}", ""]
    return "\n".join(lines)
