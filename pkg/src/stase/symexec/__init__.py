"""Guided symbolic execution, the bit-vector solver and the concrete oracle."""

from .engine import (CONFIRMED, DISMISSED, UNCONFIRMED, EngineError, ExplorationResult, ExploreOptions,
                     PathRecord, UnmodeledAccess, classify, explore, explore_segment)
from .interp import ConcreteResult, interpret_concrete
from .signature import Disjunct, VulnerabilitySignature, build_signature, read_signature, write_signature
from .solver import SAT, UNKNOWN, UNSAT, SolveResult, Solver, SolverConfig, SolverInvariantError

__all__ = ["CONFIRMED", "DISMISSED", "SAT", "UNCONFIRMED", "UNKNOWN", "UNSAT", "ConcreteResult",
           "Disjunct", "EngineError", "ExplorationResult", "ExploreOptions", "PathRecord", "SolveResult",
           "Solver", "SolverConfig", "SolverInvariantError", "UnmodeledAccess", "VulnerabilitySignature",
           "build_signature", "classify", "explore", "explore_segment", "interpret_concrete",
           "read_signature", "write_signature"]
