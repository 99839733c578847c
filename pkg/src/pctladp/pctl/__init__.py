from .ast import (
    And,
    Atom,
    BoundedEventually,
    BoundedUntil,
    CostBound,
    Eventually,
    Implies,
    Next,
    Not,
    Prob,
    TrueF,
    Until,
    satisfying_mask,
    to_text,
)
from .checking import CheckResult, Verdict, dp_verdicts, empirical_check, exact_reachability
from .compiler import ChanceConstraint, FormulaClass, Unsupported, classify, compile_all, compile_formula
from .parser import parse, tokenize

compile = compile_formula

__all__ = [
    "And",
    "Atom",
    "BoundedEventually",
    "BoundedUntil",
    "ChanceConstraint",
    "CheckResult",
    "CostBound",
    "Eventually",
    "FormulaClass",
    "Implies",
    "Next",
    "Not",
    "Prob",
    "TrueF",
    "Unsupported",
    "Until",
    "Verdict",
    "classify",
    "compile",
    "compile_all",
    "compile_formula",
    "dp_verdicts",
    "empirical_check",
    "exact_reachability",
    "parse",
    "satisfying_mask",
    "to_text",
    "tokenize",
]
