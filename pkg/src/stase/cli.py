"""Command-line interface: each pipeline stage as a subcommand, plus the full pipeline and the corpus."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .harness import artifact_stem, build_ech, generate_peh, instrument, load_ech, read_harness, write_harness
from .mir import MirError, parse_file
from .pipeline import (PipelineOptions, StageError, fact_stage, findings_from_json, findings_json,
                       rule_stage_from_dir, run_pipeline, write_fact_dir)
from .slicer import NonExploitable, build_sdg, emit_vuln_description, read_vd, slice_for_finding, write_vd
from .symexec import CONFIRMED, build_signature, classify, explore_segment, write_signature
from .vulnrules import load_config

EXIT_OK, EXIT_ERROR, EXIT_CONFIRMED = 0, 1, 3


def _shared() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loop-bound", type=int, default=None)
    p.add_argument("--call-depth", type=int, default=None)
    p.add_argument("--solver-bits", type=int, default=24, help="enumeration limit in free bits")
    p.add_argument("--external-solver", default=None, metavar="CMD",
                   help="SMT-LIB2 solver command (default: $STASE_EXTERNAL_SOLVER)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--fail-on-confirmed", action="store_true",
                   help=f"exit {EXIT_CONFIRMED} when any finding is confirmed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _module_args(p: argparse.ArgumentParser, mir_positional: bool = True) -> None:
    if mir_positional:
        p.add_argument("mir", help="MIR module")
    else:
        p.add_argument("--mir", required=True, help="MIR module")
    p.add_argument("--config", required=True, help="analysis config (INI)")
    p.add_argument("--ech", default=None, help="environment configuration harness (INI)")


def build_parser() -> argparse.ArgumentParser:
    shared = _shared()
    ap = argparse.ArgumentParser(prog="stase", description="Static analysis with targeted symbolic execution.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("facts", parents=[shared], help="extract facts and points-to into a TSV directory")
    p.add_argument("mir")
    p.add_argument("--ech", default=None)

    p = sub.add_parser("rules", parents=[shared], help="evaluate vulnerability rules over a fact directory")
    p.add_argument("facts", help="directory written by 'stase facts'")
    _module_args(p, mir_positional=False)

    p = sub.add_parser("slice", parents=[shared], help="slice candidates and write vulnerability descriptions")
    p.add_argument("candidates", help="candidates.json written by 'stase rules'")
    _module_args(p, mir_positional=False)

    p = sub.add_parser("harness", parents=[shared], help="build path exploration harnesses from .vd files")
    p.add_argument("vd", nargs="+")
    _module_args(p, mir_positional=False)

    p = sub.add_parser("symexec", parents=[shared], help="explore harnesses and write signatures")
    p.add_argument("peh", nargs="+", help="peh_*.json manifests written by 'stase harness'")
    p.add_argument("--max-steps", type=int, default=2_000_000)
    p.add_argument("--max-paths", type=int, default=20_000)

    p = sub.add_parser("pipeline", parents=[shared], help="run every stage")
    _module_args(p)
    p.add_argument("--max-steps", type=int, default=2_000_000)
    p.add_argument("--max-paths", type=int, default=20_000)

    p = sub.add_parser("corpus", parents=[shared], help="list or run the bundled corpus")
    p.add_argument("names", nargs="*", help="programs to run (default: all)")
    p.add_argument("--list", action="store_true", help="list programs and their seeded bugs")
    return ap


def _options(a) -> PipelineOptions:
    return PipelineOptions(seed=a.seed, loop_bound=a.loop_bound, call_depth=a.call_depth,
                           solver_bits=a.solver_bits, external_solver=a.external_solver,
                           max_steps=getattr(a, "max_steps", 2_000_000), max_paths=getattr(a, "max_paths", 20_000))


def _load_module(path: str, ech_path):
    m = parse_file(path)
    if ech_path:
        m = build_ech(m, load_ech(Path(ech_path).read_text(encoding="utf-8")))
    return m


def _load(a):
    """Parse the module and config; the ECH is applied after validating the config."""
    raw = parse_file(a.mir)
    cfg = load_config(Path(a.config).read_text(encoding="utf-8"), raw)
    from .pipeline import effective_config
    cfg = effective_config(cfg, _options(a))
    cfg.validate(raw)
    m = build_ech(raw, load_ech(Path(a.ech).read_text(encoding="utf-8"))) if a.ech else raw
    return m, cfg


def _out(a) -> Path:
    out = Path(a.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_facts(a) -> int:
    m = _load_module(a.mir, a.ech)
    facts, pts = fact_stage(m)
    out = _out(a)
    write_fact_dir(out, facts, pts)
    print(f"wrote {len(facts) + 2} relations to {out}")
    return EXIT_OK


def cmd_rules(a) -> int:
    m, cfg = _load(a)
    findings = rule_stage_from_dir(m, a.facts, cfg)
    out = _out(a)
    (out / "candidates.json").write_text(findings_json(findings), encoding="utf-8")
    for f in findings:
        print(f"{f.id}\t{f.location}")
    return EXIT_OK


def cmd_slice(a) -> int:
    m, cfg = _load(a)
    findings = findings_from_json(Path(a.candidates).read_text(encoding="utf-8"))
    facts, pts = fact_stage(m)
    sdg = build_sdg(m, facts, pts)
    out = _out(a)
    for f in findings:
        try:
            vd = emit_vuln_description(m, cfg, f, slice_for_finding(m, cfg, f, sdg), pts, sdg, Path(a.mir).name)
        except NonExploitable as exc:
            print(f"{f.id}\tnon-exploitable: {exc}")
            continue
        path = out / f"{artifact_stem(vd.id)}.vd"
        write_vd(path, vd)
        print(f"{f.id}\t{path}")
    return EXIT_OK


def cmd_harness(a) -> int:
    m, cfg = _load(a)
    out = _out(a)
    for path in a.vd:
        vd = read_vd(path)
        peh = generate_peh(vd, m, cfg.loop_bound, cfg.call_depth)
        theta, manifest = write_harness(out, peh, instrument(m, peh))
        print(f"{vd.id}\t{theta}\t{manifest}")
    return EXIT_OK


def cmd_symexec(a) -> int:
    opts = _options(a)
    out = _out(a)
    confirmed = False
    for path in a.peh:
        peh, seg = read_harness(path)
        result = explore_segment(seg, peh, opts.solver_config(), opts.max_steps, opts.max_paths)
        status = classify(result)
        confirmed |= status == CONFIRMED
        sig = build_signature(result, seg, peh)
        if sig is not None:
            write_signature(out, sig)
        print(f"{peh.id}\t{status}\t{len(sig.disjuncts) if sig else 0} disjunct(s)")
    return EXIT_CONFIRMED if confirmed and a.fail_on_confirmed else EXIT_OK


def cmd_pipeline(a) -> int:
    raw = parse_file(a.mir)
    cfg = load_config(Path(a.config).read_text(encoding="utf-8"), raw)
    ech = load_ech(Path(a.ech).read_text(encoding="utf-8")) if a.ech else None
    rep = run_pipeline(raw, cfg, ech, _options(a), _out(a), module_path=Path(a.mir).name)
    print(rep.text(), end="")
    if rep.errors:
        return EXIT_ERROR
    if a.fail_on_confirmed and any(r.status == CONFIRMED for r in rep.rows):
        return EXIT_CONFIRMED
    return EXIT_OK


def cmd_corpus(a) -> int:
    programs = corpus.list_programs()
    if a.list:
        for p in programs:
            bugs = ", ".join(f"{s.category}@{s.function}:{s.line}" for s in p.seeded)
            extra = bugs if p.seeded else f"decoy ({p.decoy_category})"
            print(f"{p.name:22} {p.kind:14} {extra}")
        return EXIT_OK
    if a.names:
        programs = [corpus.get(n) for n in a.names]
    ev = corpus.evaluate(programs, _options(a), a.out)
    for name, rep in ev.reports.items():
        for r in rep.rows:
            print(f"{name:22} {r.id:64} {r.status}")
    print(ev.text(), end="")
    if a.out:
        summary = {"per_category": ev.per_category(), "f1": ev.f1, "decoys_dismissed": ev.decoys_dismissed}
        (Path(a.out) / "corpus.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    if any(rep.errors for rep in ev.reports.values()):
        return EXIT_ERROR
    if a.fail_on_confirmed and ev.confirmed:
        return EXIT_CONFIRMED
    return EXIT_OK


COMMANDS = {"facts": cmd_facts, "rules": cmd_rules, "slice": cmd_slice, "harness": cmd_harness,
            "symexec": cmd_symexec, "pipeline": cmd_pipeline, "corpus": cmd_corpus}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[a.cmd](a)
    except StageError as exc:
        print(f"stase: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MirError, OSError, ValueError, KeyError) as exc:
        print(f"stase {a.cmd}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
