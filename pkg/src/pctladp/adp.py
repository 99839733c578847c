"""Chance-constrained approximate value iteration by trajectory sampling.

The value function is linear in a kernel basis, ``V(s; theta) = Phi(s) theta``,
and induces the Boltzmann policy of its soft Q-values.  ``theta`` minimizes an
augmented Lagrangian of

    min  sum_s c(s; theta) V(s; theta)
    s.t. E_{s~Delta1} B(g(s; theta)) = 0,   g = (soft Bellman backup of V) - V
         E_{s~Delta2} B(l_i(s; theta)) = 0, l_i = Pr(violation of constraint i) - beta_i

with ``B`` the hinge.  Gradients combine a score-function term over sampled
paths with a pathwise term computed exactly on the known kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, InputError, OffPolicyError, SamplingCoverageError
from .exact import boltzmann, soft_max
from .mdp import (
    Mdp,
    TabularPolicy,
    TrajectoryBatch,
    batch_costs,
    sample_batch,
    shortest_path_metric,
    visitation_weights,
)
from .pctl.compiler import ChanceConstraint

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# basis and value architecture


@dataclass(frozen=True, eq=False)
class GgkBasis:
    """Geodesic Gaussian kernels ``exp(-SP(s, c_j)^2 / (2 sigma^2))``."""

    centers: tuple
    sigma: float
    sp: np.ndarray

    def __post_init__(self):
        if len(self.centers) < 1:
            raise InputError("a basis needs at least one center")
        if self.sigma <= 0:
            raise InputError("kernel width must be positive")
        object.__setattr__(self, "centers", tuple(int(c) for c in self.centers))

    @classmethod
    def for_mdp(cls, mdp: Mdp, centers, sigma: float) -> "GgkBasis":
        return cls(tuple(centers), sigma, shortest_path_metric(mdp))

    @property
    def size(self) -> int:
        return len(self.centers)

    def matrix(self) -> np.ndarray:
        d = self.sp[:, list(self.centers)].astype(float)
        return np.exp(-(d**2) / (2.0 * self.sigma**2))


def basis_eval(basis: GgkBasis, s: int) -> np.ndarray:
    d = basis.sp[s, list(basis.centers)].astype(float)
    return np.exp(-(d**2) / (2.0 * basis.sigma**2))


@dataclass(frozen=True, eq=False)
class ValueApprox:
    features: np.ndarray  # (S, K)
    theta: np.ndarray  # (K,)
    tau: float

    def __post_init__(self):
        phi = np.asarray(self.features, dtype=float)
        th = np.asarray(self.theta, dtype=float).reshape(-1)
        if phi.ndim != 2 or phi.shape[1] != th.shape[0]:
            raise InputError(f"features {phi.shape} do not match theta {th.shape}")
        if self.tau <= 0:
            raise InputError("temperature must be positive")
        object.__setattr__(self, "features", phi)
        object.__setattr__(self, "theta", th)

    @classmethod
    def from_basis(cls, basis: GgkBasis, theta=None, tau: float = 5.0) -> "ValueApprox":
        th = np.zeros(basis.size) if theta is None else theta
        return cls(basis.matrix(), th, tau)

    def with_theta(self, theta) -> "ValueApprox":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def values(self) -> np.ndarray:
        return self.features @ self.theta


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Every exact per-state quantity the gradients need at one ``theta``."""

    V: np.ndarray  # (S,)
    Q: np.ndarray  # (S, A), -inf where inadmissible
    pi: np.ndarray  # (S, A)
    BV: np.ndarray  # (S,)
    g: np.ndarray  # (S,)
    grad_g: np.ndarray  # (S, K)
    grad_log_pi: np.ndarray  # (S, A, K)
    features: np.ndarray  # (S, K)

    def policy(self) -> TabularPolicy:
        return TabularPolicy(self.pi)


def evaluate(va: ValueApprox, mdp: Mdp) -> Evaluation:
    phi = va.features
    if phi.shape[0] != mdp.n_states:
        raise InputError("feature matrix rows must match the number of states")
    next_phi = mdp.transition @ phi  # (S, A, K): E[Phi(s') | s, a]
    dQ = mdp.gamma * next_phi
    V = phi @ va.theta
    Q = np.where(mdp.admissible, mdp.reward + dQ @ va.theta, -np.inf)
    pi = boltzmann(Q, va.tau)
    BV = soft_max(Q, va.tau)
    dBV = np.einsum("sa,sak->sk", pi, dQ)
    glp = (dQ - dBV[:, None, :]) / va.tau
    glp = np.where(mdp.admissible[:, :, None], glp, 0.0)
    return Evaluation(V, Q, pi, BV, BV - V, dBV - phi, glp, phi)


def grad_log_policy(va: ValueApprox, mdp: Mdp, s: int, a: int) -> np.ndarray:
    """``d/dtheta log pi(a|s; theta)`` for the renormalized Boltzmann policy."""
    return evaluate(va, mdp).grad_log_pi[s, a]


def bellman_gap(va: ValueApprox, mdp: Mdp, s=None):
    g = evaluate(va, mdp).g
    return g if s is None else g[s]


def hinge(x):
    return np.maximum(x, 0.0)


def hinge_grad(x):
    return (np.asarray(x) > 0).astype(float)


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class SamplerConfig:
    n_onpolicy: int = 30
    len_onpolicy: int = 6
    n_chance: int = 100
    len_chance: int = 15
    delta1: np.ndarray | None = None  # start weights for on-policy paths; None = uniform over S
    delta2: dict | None = None  # per-constraint weights over Y; None = uniform

    def check(self, constraints=()) -> None:
        if min(self.n_onpolicy, self.len_onpolicy, self.n_chance, self.len_chance) < 1:
            raise InputError("sampler counts and lengths must be >= 1")
        for c in constraints:
            if c.horizon is not None and self.len_chance < c.horizon:
                raise InputError(
                    f"len_chance={self.len_chance} is shorter than the formula horizon {c.horizon}"
                )
            if not c.constrained_states:
                raise InputError("a constraint has an empty constrained state set")
            if self.n_chance < len(c.constrained_states):
                raise InputError("n_chance must cover every constrained state at least once")


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 5.0
    b: float = 1.1
    rho: float = 0.25
    eta1: float = 0.1
    eta2: float | None = None  # defaults to eta1
    nu1: float = 10.0
    nu2: float = 10.0
    lam0: float = 0.0
    xi0: float = 0.0
    eps0: float = 1.0
    stop_rule: str = "gradient"  # or "step"
    eta_rule: str = "factorial"  # eta^{k+1} = eta^k / k; "harmonic" uses eta^0 / k
    max_inner: int = 500
    max_outer: int = 10
    outer_tol: float = 1e-2
    theta_bound: float = 1e6
    baseline: bool = False

    def check(self) -> None:
        if self.tau <= 0 or self.b <= 1 or not 0 < self.rho < 1:
            raise InputError("need tau > 0, b > 1 and 0 < rho < 1")
        if self.eta1 <= 0 or (self.eta2 is not None and self.eta2 <= 0):
            raise InputError("step sizes must be positive")
        if self.nu1 <= 0 or self.nu2 <= 0:
            raise InputError("penalties must be positive")
        if self.stop_rule not in ("gradient", "step"):
            raise InputError("stop_rule must be 'gradient' or 'step'")
        if self.eta_rule not in ("harmonic", "factorial"):
            raise InputError("eta_rule must be 'harmonic' or 'factorial'")
        if self.eps0 <= 0 or self.max_inner < 1 or self.max_outer < 1:
            raise InputError("eps0, max_inner and max_outer must be positive")


@dataclass
class SolverState:
    theta: np.ndarray
    lam: float
    xi: np.ndarray
    nu1: float
    nu2: float
    eta1: float
    eta2: float
    b: float = 1.1
    rho: float = 0.25
    k: int = 0
    j: int = 0

    @classmethod
    def initial(cls, n_features: int, n_constraints: int, cfg: SolverConfig) -> "SolverState":
        return cls(
            theta=np.zeros(n_features),
            lam=cfg.lam0,
            xi=np.full(n_constraints, cfg.xi0),
            nu1=cfg.nu1,
            nu2=cfg.nu2,
            eta1=cfg.eta1,
            eta2=cfg.eta1 if cfg.eta2 is None else cfg.eta2,
            b=cfg.b,
            rho=cfg.rho,
        )


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class ChanceSamples:
    """Paths for one constraint, grouped by start state, with their compiled costs."""

    constraint: ChanceConstraint
    batch: TrajectoryBatch
    costs: np.ndarray
    weights: dict  # Delta2 over Y

    def rows(self, s: int) -> np.ndarray:
        idx = np.flatnonzero(self.batch.origins == s)
        if idx.size == 0:
            raise SamplingCoverageError(f"no sampled trajectory starts at state {s}", state=s)
        return idx


def allocate(weights: dict, n: int) -> np.ndarray:
    """Deterministic stratified start states: ``n`` draws split proportionally to ``weights``."""
    states = sorted(weights)
    w = np.array([weights[s] for s in states], dtype=float)
    w = w / w.sum()
    base = np.floor(n * w).astype(int)
    rem = n - base.sum()
    order = np.argsort(-(n * w - base), kind="stable")
    base[order[:rem]] += 1
    return np.repeat(np.array(states, dtype=int), base)


def delta2_weights(constraint: ChanceConstraint, cfg: SamplerConfig, i: int = 0) -> dict:
    if cfg.delta2 is not None and i in cfg.delta2:
        return dict(cfg.delta2[i])
    Y = sorted(constraint.constrained_states)
    return {s: 1.0 / len(Y) for s in Y}


def sample_onpolicy(mdp: Mdp, policy: TabularPolicy, cfg: SamplerConfig, rng) -> TrajectoryBatch:
    rng = np.random.default_rng(rng)
    start = np.full(mdp.n_states, 1.0 / mdp.n_states) if cfg.delta1 is None else np.asarray(cfg.delta1, float)
    starts = rng.choice(mdp.n_states, size=cfg.n_onpolicy, p=start / start.sum())
    return sample_batch(mdp, policy, starts, cfg.len_onpolicy, None, rng, stop_at_sinks=True)


def sample_chance(
    mdp: Mdp, policy: TabularPolicy, constraint: ChanceConstraint, cfg: SamplerConfig, rng, i: int = 0
) -> ChanceSamples:
    rng = np.random.default_rng(rng)
    weights = delta2_weights(constraint, cfg, i)
    horizon = constraint.horizon if constraint.horizon is not None else cfg.len_chance
    starts = allocate(weights, cfg.n_chance)
    batch = sample_batch(mdp, policy, starts, horizon, constraint.cost.stop_states, rng)
    return ChanceSamples(constraint, batch, batch_costs(batch, constraint.cost), weights)


# ---------------------------------------------------------------------------
# estimators


def path_scores(ev: Evaluation, batch: TrajectoryBatch) -> np.ndarray:
    """``sum_t grad log pi(a_t|s_t)`` per path, shape (N, K)."""
    mask = batch.step_mask()
    s = np.where(mask, batch.states[:, :-1], 0)
    a = np.where(mask, batch.actions, 0)
    g = ev.grad_log_pi[s, a] * mask[:, :, None]
    return g.sum(axis=1)


def _path_sums(values: np.ndarray, batch: TrajectoryBatch) -> np.ndarray:
    """``f(h) = sum_i f(s_i)`` over the visited states ``s_0..s_L`` of each path."""
    mask = batch.state_mask()
    s = np.where(mask, batch.states, 0)
    v = values[s]
    if v.ndim == 2:
        return (v * mask).sum(axis=1)
    return (v * mask[:, :, None]).sum(axis=1)


def state_f(ev: Evaluation, lam: float, nu: float) -> np.ndarray:
    """``f(s) = V(s) + lam B(g(s)) + nu/2 B(g(s))^2``."""
    Bg = hinge(ev.g)
    return ev.V + lam * Bg + 0.5 * nu * Bg**2


def state_grad_f(ev: Evaluation, lam: float, nu: float) -> np.ndarray:
    Bg = hinge(ev.g)
    coef = lam * hinge_grad(ev.g) + nu * Bg
    return ev.features + coef[:, None] * ev.grad_g


def _check_on_policy(ev: Evaluation, behavior) -> None:
    if behavior is None:
        return
    probs = behavior.probs if isinstance(behavior, TabularPolicy) else np.asarray(behavior)
    if probs.shape != ev.pi.shape or np.max(np.abs(probs - ev.pi)) > 1e-10:
        raise OffPolicyError("trajectories were not sampled from the current policy")


def objective_estimate(ev: Evaluation, batch: TrajectoryBatch, lam: float, nu: float) -> float:
    """Monte-Carlo ``F(theta) = sum_s c(s) f(s) = E_h f(h)`` from on-policy paths (``c`` unnormalized)."""
    return float(_path_sums(state_f(ev, lam, nu), batch).mean())


def grad_F(
    ev: Evaluation, batch: TrajectoryBatch, lam: float, nu: float, baseline: bool = False, behavior=None
) -> np.ndarray:
    """Score-function plus pathwise gradient of ``F``."""
    _check_on_policy(ev, behavior)
    fbar = _path_sums(state_f(ev, lam, nu), batch)
    if baseline:
        fbar = fbar - fbar.mean()
    score = path_scores(ev, batch)
    term1 = (score * fbar[:, None]).mean(axis=0)
    term2 = _path_sums(state_grad_f(ev, lam, nu), batch).mean(axis=0)
    return term1 + term2


def _violations(Z: ChanceSamples) -> np.ndarray:
    c = Z.constraint
    return c.sign * Z.costs if c.is_expectation else c.tail_event(Z.costs).astype(float)


def chance_gap(constraint: ChanceConstraint, Z: ChanceSamples, s: int) -> float:
    """Empirical ``l(s) = Pr(sign D >= alpha) - beta`` (or ``E[sign D] - alpha``)."""
    rows = Z.rows(s)
    return float(constraint.gap_from_tail(_violations(Z)[rows].mean()))


def chance_terms(ev: Evaluation, Z: ChanceSamples, baseline: bool = False):
    """Per-state gaps ``l(s)`` and score-function gradients ``grad l(s)`` over Y."""
    v = _violations(Z)
    score = path_scores(ev, Z.batch)
    states = sorted(Z.weights)
    gaps, grads = np.zeros(len(states)), np.zeros((len(states), ev.features.shape[1]))
    for i, s in enumerate(states):
        rows = Z.rows(s)
        vs = v[rows]
        gaps[i] = Z.constraint.gap_from_tail(vs.mean())
        w = vs - vs.mean() if baseline else vs
        grads[i] = (score[rows] * w[:, None]).mean(axis=0)
    weights = np.array([Z.weights[s] for s in states])
    return states, weights / weights.sum(), gaps, grads


def expected_hinge(ev: Evaluation, Z: ChanceSamples) -> float:
    _, w, gaps, _ = chance_terms(ev, Z)
    return float(np.dot(w, hinge(gaps)))


def m_value(ev: Evaluation, Z: ChanceSamples, xi: float, nu: float) -> float:
    _, w, gaps, _ = chance_terms(ev, Z)
    B = hinge(gaps)
    return float(xi * np.dot(w, B) + 0.5 * nu * np.dot(w, B**2))


def grad_m(ev: Evaluation, Z: ChanceSamples, xi: float, nu: float, baseline: bool = False) -> np.ndarray:
    _, w, gaps, grads = chance_terms(ev, Z, baseline)
    coef = w * hinge_grad(gaps) * (xi + nu * hinge(gaps))
    return coef @ grads


def lagrangian_value(state: SolverState, ev: Evaluation, batch: TrajectoryBatch, Zs=()) -> float:
    """Sample estimate of the augmented Lagrangian at ``state.theta``."""
    total = objective_estimate(ev, batch, state.lam, state.nu1)
    for i, Z in enumerate(Zs):
        total += m_value(ev, Z, float(state.xi[i]), state.nu2)
    return total


# ---------------------------------------------------------------------------
# solver loops


@dataclass
class InnerResult:
    theta: np.ndarray
    iterations: int
    converged: bool
    batch: TrajectoryBatch
    chance: list
    history: list


@dataclass
class ADPResult:
    theta: np.ndarray
    trace: list
    converged: bool
    state: SolverState
    history: list = field(default_factory=list)
    final_batch: TrajectoryBatch | None = None

    @property
    def inner_counts(self) -> list:
        return [row["inner_iters"] for row in self.trace]


class Problem:
    """An MDP, a feature matrix and compiled constraints, ready to be solved.

    ``reference`` (e.g. the exact fixed point) is only used to log the
    ground-truth objective next to the learning curve.
    """

    def __init__(self, mdp: Mdp, features, constraints=(), tau: float = 5.0, reference=None):
        if isinstance(features, GgkBasis):
            features = features.matrix()
        self.mdp = mdp
        self.features = np.asarray(features, dtype=float)
        self.constraints = list(constraints)
        self.tau = tau
        self.reference = None if reference is None else np.asarray(reference, dtype=float)

    def evaluate(self, theta) -> Evaluation:
        return evaluate(ValueApprox(self.features, theta, self.tau), self.mdp)


def inner_solve(
    problem: Problem,
    state: SolverState,
    sampler: SamplerConfig,
    stop_tol: float,
    rng,
    cfg: SolverConfig = SolverConfig(),
) -> InnerResult:
    """Stochastic gradient descent on the augmented Lagrangian at fixed multipliers.

    Fresh on-policy paths are drawn at every step.  Stops once the gradient
    norm (or the step norm, per ``cfg.stop_rule``) falls below ``stop_tol``.
    """
    theta = state.theta.copy()
    history = []
    converged = False
    it = 0
    while True:
        ev = problem.evaluate(theta)
        policy = ev.policy()
        batch = sample_onpolicy(problem.mdp, policy, sampler, rng)
        Zs = [sample_chance(problem.mdp, policy, c, sampler, rng, i) for i, c in enumerate(problem.constraints)]
        gF = grad_F(ev, batch, state.lam, state.nu1, cfg.baseline)
        gm = np.zeros_like(theta)
        for i, Z in enumerate(Zs):
            gm += grad_m(ev, Z, float(state.xi[i]), state.nu2, cfg.baseline)
        step = state.eta1 * gF + state.eta2 * gm
        norm = np.linalg.norm(gF + gm) if cfg.stop_rule == "gradient" else np.linalg.norm(step)
        c_hat = visitation_weights(problem.mdp, None, batch)
        row = {
            "objective": float(np.dot(c_hat, ev.V)),
            "lagrangian": lagrangian_value(replace(state, theta=theta), ev, batch, Zs),
            "grad_norm": float(np.linalg.norm(gF + gm)),
        }
        if problem.reference is not None:
            row["reference"] = float(np.dot(c_hat, problem.reference))
        history.append(row)
        if norm <= stop_tol:
            converged = True
            break
        if it >= cfg.max_inner:
            break
        theta = theta - step
        it += 1
        state.j += 1
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > cfg.theta_bound:
            raise DivergenceError(
                f"|theta| = {np.linalg.norm(theta):.3g} exceeded {cfg.theta_bound:g} at outer {state.k}, "
                f"inner {it}; lambda={state.lam:.3g}, nu1={state.nu1:.3g}, last grad norm {norm:.3g}"
            )
    return InnerResult(theta, it, converged, batch, Zs, history)


def outer_solve(
    problem: Problem,
    cfg: SolverConfig = SolverConfig(),
    sampler: SamplerConfig = SamplerConfig(),
    seed=None,
    theta0=None,
) -> ADPResult:
    """Augmented-Lagrangian outer loop with multiplier and penalty updates.

    Multiplier and penalty updates reuse the samples from the last inner
    step.  The loop ends once an inner solve meets its own tolerance and
    moves ``theta`` by at most ``outer_tol`` relative to its norm, or after
    ``cfg.max_outer`` rounds (``converged=False``).  Constraint residuals
    are reported in the trace, not used as a stopping test.
    """
    cfg.check()
    sampler.check(problem.constraints)
    rng = np.random.default_rng(seed)
    state = SolverState.initial(problem.features.shape[1], len(problem.constraints), cfg)
    if theta0 is not None:
        state.theta = np.asarray(theta0, dtype=float).copy()
    prev_g = prev_l = None
    trace, history = [], []
    converged = False
    final_batch = None
    for k in range(1, cfg.max_outer + 1):
        state.k = k
        eps_k = cfg.eps0 / 2 ** (k - 1)
        inner = inner_solve(problem, state, sampler, eps_k, rng, cfg)
        moved = float(np.linalg.norm(inner.theta - state.theta))
        state.theta = inner.theta
        history.extend({"outer": k, **row} for row in inner.history)
        ev = problem.evaluate(state.theta)
        c_hat = visitation_weights(problem.mdp, None, inner.batch)
        Bg = float(np.dot(c_hat, hinge(ev.g)))
        Bl = np.array([expected_hinge(ev, Z) for Z in inner.chance])
        row = {
            "k": k,
            "inner_iters": inner.iterations,
            "objective": float(np.dot(c_hat, ev.V)),
            "mean_Bg": Bg,
            "max_Bg": float(hinge(ev.g).max()),
            "max_Bl": float(Bl.max()) if Bl.size else 0.0,
            "lambda": state.lam,
            "xi": state.xi.tolist(),
            "nu1": state.nu1,
            "nu2": state.nu2,
            "eta1": state.eta1,
            "theta_norm": float(np.linalg.norm(state.theta)),
            "theta": state.theta.tolist(),
        }
        trace.append(row)
        log.info("outer %d: inner=%d max B(g)=%.3g E B(l)=%s", k, inner.iterations, row["max_Bg"], Bl)
        # multiplier updates, then penalty trigger on the same samples
        state.lam = state.lam + state.nu1 * Bg
        state.xi = state.xi + state.nu2 * Bl
        if prev_g is not None and Bg > state.rho * prev_g:
            state.nu1 *= state.b
        if prev_l is not None and Bl.size and np.linalg.norm(Bl) > state.rho * np.linalg.norm(prev_l):
            state.nu2 *= state.b
        prev_g, prev_l = Bg, Bl
        if cfg.eta_rule == "harmonic":
            state.eta1 = cfg.eta1 / (k + 1)
            state.eta2 = (cfg.eta1 if cfg.eta2 is None else cfg.eta2) / (k + 1)
        else:
            state.eta1 /= k
            state.eta2 /= k
        final_batch = inner.batch
        if inner.converged and moved <= cfg.outer_tol * max(1.0, float(np.linalg.norm(state.theta))):
            converged = True
            break
    return ADPResult(state.theta.copy(), trace, converged, state, history, final_batch)
