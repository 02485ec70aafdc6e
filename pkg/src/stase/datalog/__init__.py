"""Stratified Datalog: rule parser, semi-naive evaluator and TSV fact I/O."""

from .engine import DatalogOverflow, UnknownRelation, evaluate_fixpoint, evaluate_naive, query, stratify
from .syntax import (
    ArityError,
    Atom,
    Constraint,
    DatalogError,
    DatalogSyntaxError,
    Program,
    Relation,
    Rule,
    StratificationError,
    UnsafeRuleError,
    parse_rules,
)
from .tsv import read_facts, read_relation, write_facts, write_relation

__all__ = [
    "ArityError", "Atom", "Constraint", "DatalogError", "DatalogOverflow", "DatalogSyntaxError",
    "Program", "Relation", "Rule", "StratificationError", "UnknownRelation", "UnsafeRuleError",
    "evaluate_fixpoint", "evaluate_naive", "parse_rules", "query", "read_facts", "read_relation",
    "stratify", "write_facts", "write_relation",
]
