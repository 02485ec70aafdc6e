"""Environment configuration and path exploration harnesses."""

from .ech import EchError, EnvConfigHarness, build_ech, dump_ech, load_ech
from .peh import (DEFAULT_CALL_DEPTH, DEFAULT_LOOP_BOUND, HarnessError, InstrumentedSegment,
                  PathExplorationHarness, SymbolicVar, artifact_stem, generate_peh, instrument,
                  read_harness, symbolic_vars_for, write_harness)

__all__ = ["DEFAULT_CALL_DEPTH", "DEFAULT_LOOP_BOUND", "EchError", "EnvConfigHarness", "HarnessError",
           "InstrumentedSegment", "PathExplorationHarness", "SymbolicVar", "artifact_stem", "build_ech",
           "dump_ech", "generate_peh", "instrument", "load_ech", "read_harness", "symbolic_vars_for",
           "write_harness"]
