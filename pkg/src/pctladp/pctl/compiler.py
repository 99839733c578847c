"""Translate supported PCTL formulas into chance constraints on trajectory cost.

Every compiled constraint has the canonical form

    Pr(sign * D(s) >= alpha) <= beta      for every s in Y,

where ``D`` is the path cost described by the constraint's
:class:`~pctladp.mdp.CostFunction` on the sink-surgered MDP.  Risk-neutral
cost formulas are expectation constraints ``E[sign * D(s)] <= alpha`` and
carry ``beta = None``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleTranslationError, InputError, UnsupportedFormulaError
from ..mdp import CostFunction, Mdp, TabularPolicy, expected_cost_dp, mixing_time
from .ast import (
    And,
    BoundedEventually,
    BoundedUntil,
    CostBound,
    Eventually,
    Implies,
    Next,
    Prob,
    TrueF,
    Until,
    compare,
    is_propositional,
    satisfying_mask,
    to_text,
)

STRICT_MARGIN = 1e-9


class FormulaClass(enum.Enum):
    PROB_NEXT = "ProbNext"
    PROB_UNTIL = "ProbUntil"
    PROB_NOT_UNTIL = "ProbNotUntil"
    RISK_NEUTRAL_COST = "RiskNeutralCost"
    RISK_SENSITIVE = "RiskSensitive"


@dataclass(frozen=True)
class Unsupported:
    reason: str
    subterm: object = None

    @property
    def value(self) -> str:
        return "Unsupported"


def _nested_prob(f) -> object | None:
    if isinstance(f, (Prob, CostBound)):
        return f
    for v in vars(f).values():
        if hasattr(v, "__dataclass_fields__"):
            hit = _nested_prob(v)
            if hit is not None:
                return hit
    return None


def classify(f):
    """Return the :class:`FormulaClass` of ``f`` or an :class:`Unsupported` value."""
    if isinstance(f, Prob):
        path = f.path
        args = [getattr(path, n) for n in ("arg", "left", "right") if hasattr(path, n)]
        for a in args:
            if not is_propositional(a):
                return Unsupported("nested probabilistic or cost operator inside P", _nested_prob(a))
        if isinstance(path, Next):
            return FormulaClass.PROB_NEXT
        if isinstance(path, (Eventually, BoundedEventually)):
            return FormulaClass.PROB_UNTIL
        if isinstance(path, (Until, BoundedUntil)):
            return FormulaClass.PROB_UNTIL if isinstance(path.left, TrueF) else FormulaClass.PROB_NOT_UNTIL
        return Unsupported("unknown path operator", path)
    if isinstance(f, CostBound):
        if not is_propositional(f.target):
            return Unsupported("nested operator inside C", _nested_prob(f.target))
        if f.k < 1:
            return Unsupported("cost operators need a step bound of at least 1", f)
        return FormulaClass.RISK_NEUTRAL_COST
    if isinstance(f, Implies):
        rhs = f.right
        if (
            is_propositional(f.left)
            and isinstance(rhs, Prob)
            and isinstance(rhs.path, Next)
            and isinstance(rhs.path.arg, CostBound)
        ):
            inner = rhs.path.arg
            if not is_propositional(inner.target):
                return Unsupported("nested operator inside C", _nested_prob(inner.target))
            return FormulaClass.RISK_SENSITIVE
        return Unsupported("implication outside the pattern phi1 => P(X C(F<=k phi2))", f)
    if isinstance(f, And):
        return Unsupported("conjunction: compile each conjunct separately", f)
    if is_propositional(f):
        return Unsupported("state formula without a probabilistic or cost operator", f)
    return Unsupported("formula outside the supported fragment", f)


@dataclass(frozen=True, eq=False)
class ChanceConstraint:
    kind: FormulaClass
    formula: object
    cost: CostFunction
    alpha: float
    beta: float | None
    sign: float
    horizon: int | None
    constrained_states: frozenset
    surgery: Mdp
    sinks: frozenset
    target: frozenset
    penalty: float = 0.0
    epsilon: float = 0.0
    event_op: str = ">="
    event_threshold: float = 1.0
    direction: dict = field(default_factory=dict)
    vacuous: bool = False

    @property
    def is_expectation(self) -> bool:
        return self.beta is None

    @property
    def needs_mixing_horizon(self) -> bool:
        return self.horizon is None

    def resolve_horizon(self, policy: TabularPolicy, cap: int = 2**16) -> int:
        """The step bound, or the epsilon-return mixing time of ``policy`` for unbounded formulas."""
        if self.horizon is not None:
            return self.horizon
        return mixing_time(self.surgery, policy, self.cost, self.epsilon, 1.0, cap).horizon

    def dp_value(self, policy: TabularPolicy, horizon: int | None = None) -> np.ndarray:
        """Exact expected path cost per state (a probability for the ``P`` classes)."""
        T = self.resolve_horizon(policy) if horizon is None else horizon
        return expected_cost_dp(self.surgery, policy, self.cost, T, 1.0)

    def tail_event(self, costs) -> np.ndarray:
        """Per-path indicator of the canonical violation event ``sign * D >= alpha``."""
        return self.sign * np.asarray(costs) >= self.alpha

    def satisfies_event(self, costs) -> np.ndarray:
        """Per-path indicator of the formula's own success event on ``D``."""
        return compare(self.event_op, np.asarray(costs), self.event_threshold)

    def gap_from_tail(self, tail):
        """``ell = Pr(violation) - beta`` (or ``E[sign D] - alpha`` for expectation constraints)."""
        return np.asarray(tail) - (self.alpha if self.is_expectation else self.beta)

    def to_dict(self, mdp: Mdp | None = None) -> dict:
        names = (mdp or self.surgery).state_names
        return {
            "formula": to_text(self.formula),
            "class": self.kind.value,
            "form": "E[sign*D] <= alpha" if self.is_expectation else "Pr(sign*D >= alpha) <= beta",
            "sign": self.sign,
            "alpha": self.alpha,
            "beta": self.beta,
            "horizon": self.horizon if self.horizon is not None else "T_eps",
            "epsilon": self.epsilon,
            "penalty": self.penalty,
            "constrained_states": [names[s] for s in sorted(self.constrained_states)],
            "sinks": [names[s] for s in sorted(self.sinks)],
            "target": [names[s] for s in sorted(self.target)],
            "skip": self.cost.skip,
            "cost_table": self.cost.table.tolist(),
            "event": [self.event_op, self.event_threshold],
            "direction": self.direction,
            "vacuous": self.vacuous,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _support(mdp: Mdp) -> frozenset:
    return frozenset(int(s) for s in np.flatnonzero(mdp.initial > 0))


def _probability_bound(op: str, p: float, epsilon: float, adjust: bool, margin: float):
    """Return (sign, alpha, beta, vacuous) for a P-operator over a 0/1 success indicator."""
    if op in ("<=", "<"):
        if op == "<=" and p >= 1.0:
            return 1.0, 1.0, 1.0, True
        beta = p - (epsilon if adjust else 0.0) - (margin if op == "<" else 0.0)
        sign, alpha = 1.0, 1.0  # violation: success happened
    else:
        if op == ">=" and p <= 0.0:
            return -1.0, 0.0, 1.0, True
        beta = 1.0 - p - (margin if op == ">" else 0.0)
        sign, alpha = -1.0, 0.0  # violation: success did not happen
    if not 0.0 <= beta <= 1.0:
        raise InfeasibleTranslationError(
            f"P{op}{p} translates to probability bound {beta:.6g} outside [0, 1]"
            + (f" after the epsilon={epsilon} adjustment" if adjust else "")
        )
    return sign, alpha, beta, False


def _cost_event(op: str, m: float, margin: float, violate_on_success: bool):
    """(sign, alpha) such that ``sign*D >= alpha`` is the success event ``D op m`` or its complement."""
    success = {
        "<=": (-1.0, -m),
        "<": (-1.0, -m + margin),
        ">=": (1.0, m),
        ">": (1.0, m + margin),
    }
    failure = {
        "<=": (1.0, m + margin),
        "<": (1.0, m),
        ">=": (-1.0, -m + margin),
        ">": (-1.0, -m),
    }
    return success[op] if violate_on_success else failure[op]


def _user_cost(mdp: Mdp, cost) -> np.ndarray:
    if cost is None:
        return np.ones((mdp.n_states, mdp.n_actions))
    table = np.asarray(cost.table if isinstance(cost, CostFunction) else cost, dtype=float)
    if table.shape != (mdp.n_states, mdp.n_actions):
        raise InputError(f"cost table must have shape {(mdp.n_states, mdp.n_actions)}")
    return table


def _reach_cost(mdp: Mdp, target: np.ndarray, stop: np.ndarray) -> CostFunction:
    """Indicator of entering ``target``, charged on the entering transition, frozen in ``stop``."""
    live = ~stop
    trans = np.zeros_like(mdp.transition)
    trans[:, :, target] = 1.0
    trans[~live] = 0.0
    table = np.einsum("sat,sat->sa", mdp.transition, trans)
    return CostFunction(
        table,
        transition=trans,
        initial=target.astype(float),
        stop_states=frozenset(np.flatnonzero(stop).tolist()),
    )


def compile_formula(
    f,
    mdp: Mdp,
    epsilon: float = 0.01,
    penalty: float | None = None,
    cost=None,
    margin: float = STRICT_MARGIN,
) -> ChanceConstraint:
    """Compile one supported formula; see the module docstring for the canonical form."""
    kind = classify(f)
    if isinstance(kind, Unsupported):
        raise UnsupportedFormulaError(f"{kind.reason}: {to_text(kind.subterm) if kind.subterm is not None else ''}")
    if not 0.0 < epsilon < 1.0:
        raise InputError("epsilon must lie in (0, 1)")
    if penalty is not None and penalty <= 0:
        raise InputError("penalty must be positive")
    n = mdp.n_states

    if kind is FormulaClass.PROB_NEXT:
        phi = satisfying_mask(f.path.arg, mdp)
        trans = np.zeros_like(mdp.transition)
        trans[:, :, phi] = 1.0
        d = CostFunction(np.einsum("sat,sat->sa", mdp.transition, trans), transition=trans)
        sign, alpha, beta, vac = _probability_bound(f.op, f.p, epsilon, False, margin)
        return ChanceConstraint(
            kind, f, d, alpha, beta, sign, 1, _support(mdp), mdp, frozenset(),
            frozenset(np.flatnonzero(phi).tolist()), epsilon=epsilon,
            direction={"prob_op": f.op, "p": f.p}, vacuous=vac,
        )

    if kind in (FormulaClass.PROB_UNTIL, FormulaClass.PROB_NOT_UNTIL):
        path = f.path
        if isinstance(path, (Eventually, BoundedEventually)):
            target = satisfying_mask(path.arg, mdp)
            blocked = np.zeros(n, dtype=bool)
        else:
            target = satisfying_mask(path.right, mdp)
            # left operand psi1 of psi1 U psi2 is read as !phi1, so phi1-states block
            blocked = ~satisfying_mask(path.left, mdp)
        stop = target | blocked
        k = getattr(path, "k", None)
        sinks = frozenset(np.flatnonzero(stop).tolist())
        surgered = mdp.with_sinks(sinks)
        d = _reach_cost(surgered, target, stop)
        sign, alpha, beta, vac = _probability_bound(f.op, f.p, epsilon, k is None, margin)
        return ChanceConstraint(
            kind, f, d, alpha, beta, sign, k, _support(mdp), surgered, sinks,
            frozenset(np.flatnonzero(target).tolist()), epsilon=epsilon,
            direction={"prob_op": f.op, "p": f.p}, vacuous=vac,
        )

    if kind is FormulaClass.RISK_NEUTRAL_COST:
        inner, Y, skip, horizon = f, _support(mdp), 0, f.k
    else:  # RISK_SENSITIVE
        inner = f.right.path.arg
        Y = frozenset(np.flatnonzero(satisfying_mask(f.left, mdp)).tolist())
        skip, horizon = 1, inner.k + 1
    target = satisfying_mask(inner.target, mdp)
    sinks = frozenset(np.flatnonzero(target).tolist())
    surgered = mdp.with_sinks(sinks)
    table = _user_cost(mdp, cost).copy()
    table[target] = 0.0
    if penalty is None:
        penalty = 10.0 * horizon * max(float(np.max(np.abs(table))), 1.0)
    d = CostFunction(table, terminal=np.where(target, 0.0, penalty), skip=skip, stop_states=sinks)
    common = dict(
        constrained_states=Y, surgery=surgered, sinks=sinks, target=sinks,
        penalty=float(penalty), epsilon=epsilon, event_op=inner.op, event_threshold=float(inner.m),
    )
    if kind is FormulaClass.RISK_NEUTRAL_COST:
        if inner.op in ("<=", "<"):
            sign, alpha = 1.0, inner.m - (margin if inner.op == "<" else 0.0)
        else:
            sign, alpha = -1.0, -inner.m - (margin if inner.op == ">" else 0.0)
        return ChanceConstraint(
            kind, f, d, alpha, None, sign, horizon, direction={"cost_op": inner.op, "m": inner.m}, **common
        )
    prob = f.right
    if prob.op in ("<=", "<"):
        beta = prob.p - (margin if prob.op == "<" else 0.0)
        sign, alpha = _cost_event(inner.op, inner.m, margin, violate_on_success=True)
    else:
        beta = 1.0 - prob.p - (margin if prob.op == ">" else 0.0)
        sign, alpha = _cost_event(inner.op, inner.m, margin, violate_on_success=False)
    if not 0.0 <= beta <= 1.0:
        raise InfeasibleTranslationError(f"P{prob.op}{prob.p} translates to probability bound {beta:.6g}")
    vac = (prob.op == "<=" and prob.p >= 1.0) or (prob.op == ">=" and prob.p <= 0.0)
    return ChanceConstraint(
        kind, f, d, alpha, beta, sign, horizon,
        direction={"prob_op": prob.op, "p": prob.p, "cost_op": inner.op, "m": inner.m}, vacuous=vac, **common,
    )


def compile_all(f, mdp: Mdp, **kw) -> list[ChanceConstraint]:
    """Split top-level conjunctions and compile each conjunct."""
    if isinstance(f, And):
        return compile_all(f.left, mdp, **kw) + compile_all(f.right, mdp, **kw)
    return [compile_formula(f, mdp, **kw)]
