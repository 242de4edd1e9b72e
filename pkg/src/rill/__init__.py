"""Synchronous streams with refinement types: parse, check, verify, run."""

from .checks import (
    BaseTypeError, CausalityError, ScopeError, check_program,
)
from .interp import InterpError, Trace, run, step
from .parser import ParseError, parse, parse_expr, parse_pred, parse_type
from .refine import (
    CheckReport, Invalid, Obligation, RefineError, Unknown, Valid, check,
    discharge, entail, subtype, synthesize, verify_program, well_formed,
)
from .smt import SolverConfig, SolverCrash, SolverUnavailable
from .syntax import Program, pretty
from .temporal import (
    Inconclusive, Pass, Violation, eval_prefix, hd, split, type_head,
    type_prev, type_tail,
)

__all__ = [
    "BaseTypeError", "CausalityError", "CheckReport", "Inconclusive",
    "InterpError", "Invalid", "Obligation", "ParseError", "Pass", "Program",
    "RefineError", "ScopeError", "SolverConfig", "SolverCrash",
    "SolverUnavailable", "Trace", "Unknown", "Valid", "Violation", "check",
    "check_program", "discharge", "entail", "eval_prefix", "hd", "parse",
    "parse_expr", "parse_pred", "parse_type", "pretty", "run", "split",
    "step", "subtype", "synthesize", "type_head", "type_prev", "type_tail",
    "verify_program", "well_formed",
]

__version__ = "0.1.0"
