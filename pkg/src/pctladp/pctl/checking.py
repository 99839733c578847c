"""Exact and statistical satisfaction checks for compiled constraints."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, PctlAdpError
from ..mdp import TabularPolicy, TrajectoryBatch, batch_costs, sample_batch
from .compiler import ChanceConstraint, FormulaClass


class Verdict(enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


def exact_reachability(chain: np.ndarray, target, horizon: int | None = None, avoid=()) -> np.ndarray:
    """Probability of reaching ``target`` (without first touching ``avoid``) per start state.

    With ``horizon`` the reach must happen within that many steps (backward
    recursion); without it the unbounded probability comes from a linear
    solve after discarding states that cannot reach the target.
    """
    n = chain.shape[0]
    tgt = np.zeros(n, dtype=bool)
    tgt[list(target)] = True
    if not tgt.any():
        raise InputError("target set is empty")
    blk = np.zeros(n, dtype=bool)
    blk[list(avoid)] = True
    blk &= ~tgt
    if horizon is not None:
        x = tgt.astype(float)
        live = ~(tgt | blk)
        for _ in range(horizon):
            x = np.where(live, chain @ x, x)
        return x
    # backward graph search from the target through live states
    can = tgt.copy()
    edges = chain > 0
    frontier = tgt.copy()
    while frontier.any():
        pred = edges[:, frontier].any(axis=1) & ~can & ~blk
        can |= pred
        frontier = pred
    maybe = can & ~tgt
    x = tgt.astype(float)
    idx = np.flatnonzero(maybe)
    if idx.size:
        A = np.eye(idx.size) - chain[np.ix_(idx, idx)]
        b = chain[np.ix_(idx, np.flatnonzero(tgt))].sum(axis=1)
        try:
            x[idx] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise PctlAdpError(f"singular reachability system: {exc}") from None
    return x


def dp_verdicts(constraint: ChanceConstraint, policy: TabularPolicy, horizon: int | None = None) -> dict:
    """Three-valued verdict per constrained state from the exact DP value.

    Only meaningful for the probabilistic classes, whose expected path cost
    is the success probability.  Unbounded formulas leave an epsilon band in
    which neither outcome is certified.
    """
    if constraint.kind not in (FormulaClass.PROB_NEXT, FormulaClass.PROB_UNTIL, FormulaClass.PROB_NOT_UNTIL):
        raise InputError("DP verdicts need a probabilistic (P) constraint")
    q = constraint.dp_value(policy, horizon)
    op, p = constraint.direction["prob_op"], constraint.direction["p"]
    slack = constraint.epsilon if constraint.horizon is None else 0.0
    out = {}
    for s in sorted(constraint.constrained_states):
        tail = q[s] if constraint.sign > 0 else 1.0 - q[s]
        if constraint.vacuous or tail <= constraint.beta + 1e-12:
            out[s] = Verdict.SATISFIED
            continue
        lo, hi = q[s], q[s] + slack  # true probability lies in [lo, hi]
        violated = {
            ">=": hi < p,
            ">": hi <= p,
            "<=": lo > p,
            "<": lo >= p,
        }[op]
        out[s] = Verdict.VIOLATED if violated else Verdict.INCONCLUSIVE
    return out


@dataclass
class CheckResult:
    satisfaction: dict
    violation: dict
    counts: dict
    verdict: bool
    horizon: int
    mean_cost: dict = field(default_factory=dict)

    @property
    def pooled_satisfaction(self) -> float:
        n = sum(self.counts.values())
        return sum(self.satisfaction[s] * self.counts[s] for s in self.counts) / n


def sample_constraint_paths(
    constraint: ChanceConstraint, policy: TabularPolicy, starts: np.ndarray, horizon: int, rng
) -> TrajectoryBatch:
    return sample_batch(constraint.surgery, policy, starts, horizon, constraint.cost.stop_states, rng)


def empirical_check(
    constraint: ChanceConstraint,
    policy: TabularPolicy,
    n: int,
    rng_seed=None,
    horizon: int | None = None,
) -> CheckResult:
    """Statistical model check: ``n`` sampled paths from every state of ``Y``.

    ``satisfaction`` holds the per-state fraction of paths meeting the
    formula's cost event; ``violation`` the fraction hitting the canonical
    violation event, which the verdict compares with ``beta``.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    T = constraint.resolve_horizon(policy) if horizon is None else horizon
    rng = np.random.default_rng(rng_seed)
    Y = sorted(constraint.constrained_states)
    starts = np.repeat(np.array(Y, dtype=int), n)
    batch = sample_constraint_paths(constraint, policy, starts, T, rng)
    costs = batch_costs(batch, constraint.cost).reshape(len(Y), n)
    sat = constraint.satisfies_event(costs).mean(axis=1)
    if constraint.is_expectation:
        viol = (constraint.sign * costs).mean(axis=1)
        ok = bool(np.all(viol <= constraint.alpha + 1e-12))
    else:
        viol = constraint.tail_event(costs).mean(axis=1)
        ok = bool(constraint.vacuous or np.all(viol <= constraint.beta + 1e-12))
    return CheckResult(
        satisfaction={s: float(v) for s, v in zip(Y, sat)},
        violation={s: float(v) for s, v in zip(Y, viol)},
        counts={s: n for s in Y},
        verdict=ok,
        horizon=T,
        mean_cost={s: float(v) for s, v in zip(Y, costs.mean(axis=1))},
    )
