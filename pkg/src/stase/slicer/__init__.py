"""Dependence-graph slicing and vulnerability descriptions."""

from .sdg import (CALL, CONTROL, DATA, FREE, MEMORY, PARAM_IN, PARAM_OUT, SUMMARY, DependenceGraph,
                  MutualRecursionError, Slice, build_sdg, two_pass_slice)
from .vd import (InputRef, NonExploitable, VulnerabilityDescription, dumps_vd, emit_vuln_description,
                 loads_vd, read_vd, slice_for_finding, write_vd)

__all__ = ["CALL", "CONTROL", "DATA", "FREE", "MEMORY", "PARAM_IN", "PARAM_OUT", "SUMMARY",
           "DependenceGraph", "InputRef", "MutualRecursionError", "NonExploitable", "Slice",
           "VulnerabilityDescription", "build_sdg", "dumps_vd", "emit_vuln_description", "loads_vd",
           "read_vd", "slice_for_finding", "two_pass_slice", "write_vd"]
