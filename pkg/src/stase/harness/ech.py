"""Environment configuration harness: once-per-domain rewrites of a module.

``ech.cfg`` format::

    [symbolic_params]
    SMRAM = 64            ; a region: base and size become 64-bit symbols
    mMaxAddress = 64      ; a global: every cell becomes a symbol of that width

    [pcd]
    names = PcdReclaimVariableSpaceAtEndOfDxe

    [guids]
    gEfiSmmVariableProtocolGuid = 0xed32d533_99e6_4209_9cc0_2d72cdd998a7

    [table_stubs]
    GetVariableServices = @mSmmVariable   ; `%r = call @GetVariableServices(..)` -> uses of %r read @mSmmVariable
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from ..mir.ir import (ArrayType, GlobalDecl, GlobalRef, Instruction, IntType, Local, ModuleIR,
                      RegionDecl, SymbolicInit, scalar_cells, type_size)


class EchError(ValueError):
    pass


@dataclass
class EnvConfigHarness:
    symbolic_firmware_params: list[tuple[str, int]] = field(default_factory=list)
    pcd_symbolics: list[str] = field(default_factory=list)
    guid_defaults: dict[str, int] = field(default_factory=dict)
    global_table_stubs: dict[str, str] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not (self.symbolic_firmware_params or self.pcd_symbolics or self.guid_defaults
                    or self.global_table_stubs)


def _split(value: str) -> list[str]:
    return [p.strip() for p in value.replace("\n", ",").split(",") if p.strip()]


def load_ech(text: str) -> EnvConfigHarness:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise EchError(str(exc)) from exc
    ech = EnvConfigHarness()
    for sec in cp.sections():
        if sec not in ("symbolic_params", "pcd", "guids", "table_stubs"):
            raise EchError(f"unknown section [{sec}]")
    if cp.has_section("symbolic_params"):
        for name, width in cp.items("symbolic_params"):
            w = int(width, 0)
            if w not in (1, 8, 16, 32, 64):
                raise EchError(f"bad width {w} for {name}")
            ech.symbolic_firmware_params.append((name.lstrip("@"), w))
    if cp.has_section("pcd"):
        for _, value in cp.items("pcd"):
            ech.pcd_symbolics.extend(n.lstrip("@") for n in _split(value))
    if cp.has_section("guids"):
        for name, value in cp.items("guids"):
            v = int(value.replace("-", "_"), 0)
            if not 0 <= v < 1 << 128:
                raise EchError(f"GUID {name} is not a 128-bit constant")
            ech.guid_defaults[name.lstrip("@")] = v
    if cp.has_section("table_stubs"):
        for callee, target in cp.items("table_stubs"):
            ech.global_table_stubs[callee.lstrip("@")] = target.strip().lstrip("@")
    return ech


def dump_ech(ech: EnvConfigHarness) -> str:
    lines = ["[symbolic_params]"] + [f"{n} = {w}" for n, w in ech.symbolic_firmware_params]
    lines += ["", "[pcd]", f"names = {', '.join(ech.pcd_symbolics)}"]
    lines += ["", "[guids]"] + [f"{n} = {v:#034x}" for n, v in ech.guid_defaults.items()]
    lines += ["", "[table_stubs]"] + [f"{c} = @{g}" for c, g in ech.global_table_stubs.items()]
    return "\n".join(lines) + "\n"


def _guid_cells(g: GlobalDecl, value: int, structs) -> tuple:
    if type_size(g.type, structs) != 16:
        raise EchError(f"GUID global @{g.name} is not 128 bits wide")
    out = []
    for _, t, off in scalar_cells(g.type, structs):
        nbytes = type_size(t, structs)
        out.append((value >> (8 * off)) & ((1 << (8 * nbytes)) - 1))  # little-endian layout
    return tuple(out)


def build_ech(m: ModuleIR, ech: EnvConfigHarness) -> ModuleIR:
    """Apply the environment rewrites; applying the result again changes nothing."""
    if ech.empty:
        return m
    structs = {s.name: s for s in m.structs}
    globals_ = {g.name: g for g in m.globals}
    regions = {r.name: r for r in m.regions}
    new_globals = dict(globals_)
    new_regions = dict(regions)
    for name, width in ech.symbolic_firmware_params:
        if name in regions:
            r = regions[name]
            new_regions[name] = replace(r, base=SymbolicInit(64), size=SymbolicInit(64))
        elif name in globals_:
            new_globals[name] = replace(globals_[name], init=SymbolicInit(width))
        else:
            raise EchError(f"unresolved firmware parameter {name!r}")
    for name in ech.pcd_symbolics:
        if name not in globals_:
            raise EchError(f"unresolved PCD global {name!r}")
        new_globals[name] = replace(new_globals[name], init=SymbolicInit())
    for name, value in ech.guid_defaults.items():
        if name not in globals_:
            raise EchError(f"unresolved GUID global {name!r}")
        new_globals[name] = replace(new_globals[name], init=_guid_cells(globals_[name], value, structs))
    for callee, target in ech.global_table_stubs.items():
        if target not in globals_:
            raise EchError(f"unresolved table target @{target}")
        if not m.has_function(callee):
            raise EchError(f"unresolved table accessor @{callee}")
    functions = tuple(_rewrite_tables(f, ech.global_table_stubs) for f in m.functions)
    return replace(m, globals=tuple(new_globals[g.name] for g in m.globals),
                   regions=tuple(new_regions[r.name] for r in m.regions), functions=functions)


def _rewrite_tables(f, table: dict[str, str]):
    if f.is_external or not table:
        return f
    renames: dict[str, str] = {}
    blocks = []
    for b in f.blocks:
        kept = []
        for i in b.instructions:
            if i.opcode == "call" and i.callee in table:
                if i.result:
                    renames[i.result] = table[i.callee]
                continue
            kept.append(i)
        blocks.append((b, kept))
    if not renames and all(len(k) == len(b.instructions) for b, k in blocks):
        return f

    def sub(v):
        if isinstance(v, Local) and v.name in renames:
            return GlobalRef(renames[v.name])
        return v

    out = []
    for b, kept in blocks:
        out.append(replace(b, instructions=tuple(
            replace(i, operands=tuple(sub(o) for o in i.operands)) for i in kept)))
    return replace(f, blocks=tuple(out))
