"""Tabular value iteration with the soft (log-sum-exp) and hard Bellman operators.

These are the small-instance ground truth that the sampled solver is judged
against.  A temperature of ``0`` selects the hardmax operator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DivergenceError, InputError
from .mdp import Mdp, TabularPolicy


@dataclass(frozen=True, eq=False)
class ValueTable:
    values: np.ndarray
    tau: float = 0.0
    iterations: int = 0
    residual: float = float("nan")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(V) -> np.ndarray:
    return np.asarray(V.values if isinstance(V, ValueTable) else V, dtype=float)


def q_from_value(V, mdp: Mdp) -> np.ndarray:
    """``Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) V(s')``; inadmissible pairs are ``-inf``."""
    v = _values(V)
    q = mdp.reward + mdp.gamma * (mdp.transition @ v)
    return np.where(mdp.admissible, q, -np.inf)


def soft_max(q: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise ``tau * log sum exp(q / tau)`` with the max shifted out; ``tau=0`` is ``max``."""
    m = q.max(axis=-1)
    if tau == 0:
        return m
    with np.errstate(invalid="ignore"):
        z = np.exp((q - m[..., None]) / tau)
    return m + tau * np.log(z.sum(axis=-1))


def softmax_backup(V, mdp: Mdp, tau: float) -> np.ndarray:
    if tau < 0:
        raise InputError("temperature must be nonnegative")
    return soft_max(q_from_value(V, mdp), tau)


def hardmax_backup(V, mdp: Mdp) -> np.ndarray:
    return softmax_backup(V, mdp, 0.0)


def value_iteration(mdp: Mdp, tau: float, tol: float = 1e-8, max_iters: int = 100_000, V0=None) -> ValueTable:
    """Iterate the backup to a sup-norm fixed point."""
    v = np.zeros(mdp.n_states) if V0 is None else _values(V0).copy()
    residual = checkpoint = np.inf
    for it in range(1, max_iters + 1):
        nv = softmax_backup(v, mdp, tau)
        residual = float(np.max(np.abs(nv - v)))
        v = nv
        if residual <= tol:
            return ValueTable(v, tau, it, residual)
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > 1e15:
            break
        # undiscounted sweeps that stop contracting will never converge
        if mdp.gamma >= 1.0 and it % 1000 == 0:
            if residual > 0.5 * checkpoint:
                break
            checkpoint = residual
    if mdp.gamma >= 1.0:
        raise DivergenceError(
            f"value iteration at gamma=1 did not settle (residual {residual:.3g}); "
            "undiscounted problems need absorbing zero-reward structure and tau=0"
        )
    raise ConvergenceError(f"value iteration stopped after {max_iters} sweeps with residual {residual:.3g}")


def policy_from_value(V, mdp: Mdp, tau: float) -> TabularPolicy:
    """Boltzmann policy ``exp((Q - V)/tau)`` renormalized per state; ``tau=0`` is greedy."""
    q = q_from_value(V, mdp)
    if tau == 0:
        probs = np.zeros_like(q)
        probs[np.arange(mdp.n_states), np.argmax(q, axis=1)] = 1.0
        return TabularPolicy(probs)
    return TabularPolicy(boltzmann(q, tau))


def boltzmann(q: np.ndarray, tau: float) -> np.ndarray:
    z = np.exp((q - q.max(axis=-1, keepdims=True)) / tau)
    return z / z.sum(axis=-1, keepdims=True)


def unnormalized_policy(V, mdp: Mdp, tau: float) -> np.ndarray:
    """The raw ``exp((Q - V)/tau)`` table before renormalization."""
    q = q_from_value(V, mdp)
    return np.exp((q - _values(V)[:, None]) / tau)


def bellman_feasibility(V, mdp: Mdp, tau: float) -> float:
    """``max_s (BV(s) - V(s))``; nonpositive means ``V`` upper-bounds the fixed point."""
    v = _values(V)
    return float(np.max(softmax_backup(v, mdp, tau) - v))


def weighted_l1_error(V_approx, V_star, c) -> float:
    c = np.asarray(c, dtype=float)
    return float(np.sum(c * np.abs(_values(V_approx) - _values(V_star))))


def policy_value(mdp: Mdp, policy: TabularPolicy, tau: float = 0.0) -> np.ndarray:
    """Exact discounted value of a fixed policy, with the entropy bonus when ``tau > 0``."""
    pi = policy.probs
    r = np.sum(pi * np.where(mdp.admissible, mdp.reward, 0.0), axis=1)
    if tau > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.sum(np.where(pi > 0, pi * np.log(pi), 0.0), axis=1)
        r = r + tau * ent
    P = np.einsum("sa,sat->st", pi, mdp.transition)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P, r)


def write_value_csv(path, mdp: Mdp, V, extra: dict | None = None) -> None:
    v = _values(V)
    cols = {"value": v}
    cols.update(extra or {})
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "name", *cols])
        for s in range(mdp.n_states):
            w.writerow([s, mdp.state_names[s], *(repr(float(c[s])) for c in cols.values())])


def write_q_csv(path, mdp: Mdp, Q) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "name", *mdp.action_names])
        for s in range(mdp.n_states):
            w.writerow([s, mdp.state_names[s], *(repr(float(x)) for x in Q[s])])
