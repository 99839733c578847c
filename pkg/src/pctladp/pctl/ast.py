"""Formula trees for the PCTL fragment with time-bounded cost operators.

State formulas: ``TrueF``, ``Atom``, ``And``, ``Not``, ``Implies``, ``Prob``
and ``CostBound``.  Path formulas: ``Next``, ``Until``, ``BoundedUntil``,
``Eventually`` and ``BoundedEventually``.  ``to_text`` prints the canonical
ASCII form accepted by :func:`pctladp.pctl.parse`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

COMPARATORS = ("<=", "<", ">=", ">")


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Implies:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Prob:
    op: str
    p: float
    path: "PathFormula"


@dataclass(frozen=True)
class CostBound:
    """``C op m (F<=k target)``: cost accrued until ``target`` is reached within ``k`` steps."""

    op: str
    m: float
    k: int
    target: "StateFormula"


@dataclass(frozen=True)
class Next:
    arg: "StateFormula"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class BoundedUntil:
    left: "StateFormula"
    right: "StateFormula"
    k: int


@dataclass(frozen=True)
class Eventually:
    arg: "StateFormula"


@dataclass(frozen=True)
class BoundedEventually:
    arg: "StateFormula"
    k: int


StateFormula = Union[TrueF, Atom, Not, And, Implies, Prob, CostBound]
PathFormula = Union[Next, Until, BoundedUntil, Eventually, BoundedEventually]


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def to_text(f) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + to_text(f.arg)
    if isinstance(f, And):
        return f"({to_text(f.left)} & {to_text(f.right)})"
    if isinstance(f, Implies):
        return f"({to_text(f.left)} => {to_text(f.right)})"
    if isinstance(f, Prob):
        return f"P{f.op}{_num(f.p)} ({to_text(f.path)})"
    if isinstance(f, CostBound):
        return f"C{f.op}{_num(f.m)} (F<={f.k} {to_text(f.target)})"
    if isinstance(f, Next):
        return f"X {to_text(f.arg)}"
    if isinstance(f, Until):
        return f"{to_text(f.left)} U {to_text(f.right)}"
    if isinstance(f, BoundedUntil):
        return f"{to_text(f.left)} U<={f.k} {to_text(f.right)}"
    if isinstance(f, Eventually):
        return f"F {to_text(f.arg)}"
    if isinstance(f, BoundedEventually):
        return f"F<={f.k} {to_text(f.arg)}"
    raise TypeError(f"not a formula: {f!r}")


def is_propositional(f) -> bool:
    if isinstance(f, (TrueF, Atom)):
        return True
    if isinstance(f, Not):
        return is_propositional(f.arg)
    if isinstance(f, (And, Implies)):
        return is_propositional(f.left) and is_propositional(f.right)
    return False


def atoms(f) -> set:
    if isinstance(f, Atom):
        return {f.name}
    out = set()
    for v in vars(f).values() if hasattr(f, "__dict__") else ():
        if isinstance(v, (TrueF, Atom, Not, And, Implies, Prob, CostBound, Next, Until, BoundedUntil, Eventually, BoundedEventually)):
            out |= atoms(v)
    return out


def satisfying_mask(f, mdp) -> np.ndarray:
    """Boolean mask of the states satisfying a propositional formula."""
    from ..errors import ResolutionError

    n = mdp.n_states
    if isinstance(f, TrueF):
        return np.ones(n, dtype=bool)
    if isinstance(f, Atom):
        if f.name not in mdp.labels:
            raise ResolutionError(f"atomic proposition {f.name!r} is not a label of the MDP")
        m = np.zeros(n, dtype=bool)
        m[list(mdp.labels[f.name])] = True
        return m
    if isinstance(f, Not):
        return ~satisfying_mask(f.arg, mdp)
    if isinstance(f, And):
        return satisfying_mask(f.left, mdp) & satisfying_mask(f.right, mdp)
    if isinstance(f, Implies):
        return ~satisfying_mask(f.left, mdp) | satisfying_mask(f.right, mdp)
    raise TypeError(f"not a propositional formula: {to_text(f)}")


def compare(op: str, lhs, rhs):
    """Elementwise ``lhs op rhs``."""
    if op == "<=":
        return np.less_equal(lhs, rhs)
    if op == "<":
        return np.less(lhs, rhs)
    if op == ">=":
        return np.greater_equal(lhs, rhs)
    if op == ">":
        return np.greater(lhs, rhs)
    raise ValueError(f"unknown comparator {op!r}")
