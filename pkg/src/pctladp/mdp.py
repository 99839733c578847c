"""Finite MDPs, policy-induced chains, trajectory sampling and cost bookkeeping.

Everything is stored densely: ``transition`` has shape ``(S, A, S)`` and
``reward`` shape ``(S, A)``.  Inadmissible actions are masked out by
``admissible`` and carry an all-zero transition row.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, NonMixingError, StructuralError

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Mdp:
    transition: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    gamma: float = 1.0
    admissible: np.ndarray | None = None
    labels: Mapping[str, frozenset] = field(default_factory=dict)
    state_names: tuple = ()
    action_names: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise StructuralError(f"transition must have shape (S, A, S), got {P.shape}")
        n_s, n_a, _ = P.shape
        r = np.asarray(self.reward, dtype=float)
        if r.shape != (n_s, n_a):
            raise StructuralError(f"reward must have shape {(n_s, n_a)}, got {r.shape}")
        mu = np.asarray(self.initial, dtype=float)
        if mu.shape != (n_s,):
            raise StructuralError(f"initial must have shape {(n_s,)}, got {mu.shape}")
        if self.admissible is None:
            adm = np.ones((n_s, n_a), dtype=bool)
        else:
            adm = np.asarray(self.admissible, dtype=bool)
            if adm.shape != (n_s, n_a):
                raise StructuralError(f"admissible must have shape {(n_s, n_a)}")
        labels = {str(k): frozenset(int(s) for s in v) for k, v in dict(self.labels).items()}
        for name, members in labels.items():
            if any(s < 0 or s >= n_s for s in members):
                raise StructuralError(f"label {name!r} references a state outside 0..{n_s - 1}")
        names = tuple(self.state_names) or tuple(str(i) for i in range(n_s))
        anames = tuple(self.action_names) or tuple(str(i) for i in range(n_a))
        if len(names) != n_s or len(anames) != n_a:
            raise StructuralError("state_names/action_names length mismatch")
        for arr in (P, r, mu, adm):
            arr.flags.writeable = False
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial", mu)
        object.__setattr__(self, "admissible", adm)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "state_names", names)
        object.__setattr__(self, "action_names", anames)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def label(self, name: str) -> frozenset:
        try:
            return self.labels[name]
        except KeyError:
            raise KeyError(f"unknown atomic proposition {name!r}") from None

    def is_sink(self, s: int) -> bool:
        acts = np.flatnonzero(self.admissible[s])
        return bool(np.all(np.abs(self.transition[s, acts, s] - 1.0) <= STOCHASTIC_TOL))

    def sinks(self) -> frozenset:
        return frozenset(s for s in range(self.n_states) if self.is_sink(s))

    def with_sinks(self, states: Iterable[int]) -> "Mdp":
        """Copy of the MDP in which every state in ``states`` self-loops under all actions."""
        P = self.transition.copy()
        for s in states:
            P[s] = 0.0
            P[s, self.admissible[s], s] = 1.0
        return self.replace(transition=P)

    def replace(self, **changes) -> "Mdp":
        kw = dict(
            transition=self.transition,
            reward=self.reward,
            initial=self.initial,
            gamma=self.gamma,
            admissible=self.admissible,
            labels=self.labels,
            state_names=self.state_names,
            action_names=self.action_names,
        )
        kw.update(changes)
        return Mdp(**kw)

    def same_dynamics(self, other: "Mdp") -> bool:
        return (
            self.transition.shape == other.transition.shape
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.admissible, other.admissible)
        )


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Markov randomized policy, ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise StructuralError("policy table must be 2-D (S, A)")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, mdp: Mdp) -> "TabularPolicy":
        adm = mdp.admissible.astype(float)
        return cls(adm / adm.sum(axis=1, keepdims=True))

    @classmethod
    def deterministic(cls, mdp: Mdp, actions: Sequence[int]) -> "TabularPolicy":
        p = np.zeros((mdp.n_states, mdp.n_actions))
        p[np.arange(mdp.n_states), np.asarray(actions)] = 1.0
        return cls(p)

    def check(self, mdp: Mdp) -> None:
        if self.probs.shape != (mdp.n_states, mdp.n_actions):
            raise StructuralError(
                f"policy shape {self.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}"
            )
        if np.any(self.probs < -STOCHASTIC_TOL):
            raise StructuralError("policy has negative probabilities")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
            raise StructuralError("policy rows must sum to 1")
        if np.any(self.probs[~mdp.admissible] > STOCHASTIC_TOL):
            raise StructuralError("policy puts mass on inadmissible actions")


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    actions: tuple

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise StructuralError("a trajectory has one more state than actions")

    @property
    def origin(self) -> int:
        return self.states[0]

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def steps(self):
        return list(zip(self.states[:-1], self.actions, self.states[1:]))


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Many trajectories in padded arrays; entries past ``lengths`` are ``-1``."""

    states: np.ndarray  # (N, L+1)
    actions: np.ndarray  # (N, L)
    lengths: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def origins(self) -> np.ndarray:
        return self.states[:, 0]

    def step_mask(self) -> np.ndarray:
        L = self.actions.shape[1]
        return np.arange(L)[None, :] < self.lengths[:, None]

    def state_mask(self) -> np.ndarray:
        L = self.states.shape[1]
        return np.arange(L)[None, :] <= self.lengths[:, None]

    def final_states(self) -> np.ndarray:
        return self.states[np.arange(len(self)), self.lengths]

    def __getitem__(self, i: int) -> Trajectory:
        n = int(self.lengths[i])
        return Trajectory(tuple(int(s) for s in self.states[i, : n + 1]), tuple(int(a) for a in self.actions[i, :n]))

    def subset(self, idx) -> "TrajectoryBatch":
        return TrajectoryBatch(self.states[idx], self.actions[idx], self.lengths[idx])

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory]) -> "TrajectoryBatch":
        if not trajs:
            raise InputError("empty trajectory set")
        L = max(t.length for t in trajs)
        states = -np.ones((len(trajs), L + 1), dtype=int)
        actions = -np.ones((len(trajs), L), dtype=int)
        for i, t in enumerate(trajs):
            states[i, : t.length + 1] = t.states
            actions[i, : t.length] = t.actions
        return cls(states, actions, np.array([t.length for t in trajs], dtype=int))


@dataclass(frozen=True, eq=False)
class CostFunction:
    """Per state-action cost plus the bookkeeping compiled constraints need.

    ``table[s, a]`` is the expected one-step cost.  When ``transition`` is
    given, sampled paths are charged the realized cost ``transition[s, a, s']``
    instead; its expectation under the kernel must equal ``table``.
    ``initial`` is charged once on the first state, ``terminal`` on the last
    state of the horizon, and the first ``skip`` steps accrue nothing.
    Accrual stops once the path enters ``stop_states``.
    """

    table: np.ndarray
    transition: np.ndarray | None = None
    initial: np.ndarray | None = None
    terminal: np.ndarray | None = None
    skip: int = 0
    stop_states: frozenset = frozenset()

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if not np.all(np.isfinite(t)):
            raise InputError("cost table must be finite")
        object.__setattr__(self, "table", t)
        for name in ("transition", "initial", "terminal"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        object.__setattr__(self, "stop_states", frozenset(int(s) for s in self.stop_states))

    @classmethod
    def constant(cls, mdp: Mdp, value: float = 1.0) -> "CostFunction":
        return cls(np.full((mdp.n_states, mdp.n_actions), float(value)))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.table))) if self.table.size else 0.0


@dataclass(frozen=True)
class MixingTimeEstimate:
    horizon: int
    epsilon: float
    method: str = "exact-doubling"
    gap: float = 0.0
    eigenvalue_bound: int | None = None


def validate(mdp: Mdp) -> list[str]:
    """Return a human-readable list of invariant violations (empty if none)."""
    out = []
    P, adm = mdp.transition, mdp.admissible
    for s in range(mdp.n_states):
        name = mdp.state_names[s]
        if not adm[s].any():
            out.append(f"state {name}: no admissible action")
        for a in np.flatnonzero(adm[s]):
            row = P[s, a]
            aname = mdp.action_names[a]
            if np.any(row < 0):
                out.append(f"({name}, {aname}): negative transition probability")
            total = row.sum()
            if abs(total - 1.0) > STOCHASTIC_TOL:
                out.append(f"({name}, {aname}): transition row sums to {total:.12g}, not 1")
        if not np.all(np.isfinite(mdp.reward[s])):
            out.append(f"state {name}: non-finite reward")
    if np.any(mdp.initial < 0) or abs(mdp.initial.sum() - 1.0) > STOCHASTIC_TOL:
        out.append(f"initial distribution sums to {mdp.initial.sum():.12g}, not 1")
    if not 0.0 < mdp.gamma <= 1.0:
        out.append(f"discount {mdp.gamma} outside (0, 1]")
    return out


def induced_chain(mdp: Mdp, policy: TabularPolicy) -> np.ndarray:
    """``P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)``."""
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise StructuralError(
            f"policy shape {policy.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}"
        )
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def _as_distribution(init, n_states: int) -> np.ndarray:
    if np.isscalar(init):
        d = np.zeros(n_states)
        d[int(init)] = 1.0
        return d
    d = np.asarray(init, dtype=float)
    if d.shape != (n_states,):
        raise InputError(f"initial distribution must have length {n_states}")
    if d.sum() <= 0 or np.any(d < 0):
        raise InputError("initial distribution has empty support")
    return d / d.sum()


def _stop_mask(n_states: int, stop_states) -> np.ndarray:
    mask = np.zeros(n_states, dtype=bool)
    if stop_states:
        mask[list(stop_states)] = True
    return mask


def sample_batch(
    mdp: Mdp,
    policy: TabularPolicy,
    starts: np.ndarray,
    max_len: int,
    stop_states=None,
    rng=None,
    stop_at_sinks: bool = False,
) -> TrajectoryBatch:
    """Roll out one trajectory per entry of ``starts`` in lock-step.

    A trajectory ends after ``max_len`` transitions, or as soon as it enters
    ``stop_states`` (a start inside the stop set yields a zero-length path).
    """
    if max_len < 1:
        raise InputError("max_len must be >= 1")
    rng = np.random.default_rng(rng)
    starts = np.asarray(starts, dtype=int)
    n = starts.shape[0]
    stop = _stop_mask(mdp.n_states, stop_states)
    if stop_at_sinks:
        stop[list(mdp.sinks())] = True
    pi_cdf = np.cumsum(policy.probs, axis=1)
    P_cdf = np.cumsum(mdp.transition, axis=2)
    states = -np.ones((n, max_len + 1), dtype=int)
    actions = -np.ones((n, max_len), dtype=int)
    lengths = np.zeros(n, dtype=int)
    states[:, 0] = starts
    alive = ~stop[starts]
    cur = starts.copy()
    n_a, n_s = mdp.n_actions, mdp.n_states
    for t in range(max_len):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = cur[idx]
        u = rng.random(idx.size)
        a = np.minimum((u[:, None] > pi_cdf[s]).sum(axis=1), n_a - 1)
        u = rng.random(idx.size)
        nxt = np.minimum((u[:, None] > P_cdf[s, a]).sum(axis=1), n_s - 1)
        actions[idx, t] = a
        states[idx, t + 1] = nxt
        lengths[idx] += 1
        cur[idx] = nxt
        alive[idx] = ~stop[nxt]
    return TrajectoryBatch(states, actions, lengths)


def sample_starts(init, n: int, n_states: int, rng=None) -> np.ndarray:
    dist = _as_distribution(init, n_states)
    rng = np.random.default_rng(rng)
    return rng.choice(n_states, size=n, p=dist)


def sample_trajectory(
    mdp: Mdp,
    policy: TabularPolicy,
    init,
    max_len: int,
    stop_states=None,
    rng_seed=None,
) -> Trajectory:
    """Draw one trajectory; ``init`` is a state index or a distribution over states."""
    rng = np.random.default_rng(rng_seed)
    start = sample_starts(init, 1, mdp.n_states, rng)
    return sample_batch(mdp, policy, start, max_len, stop_states, rng)[0]


def batch_costs(batch: TrajectoryBatch, d: CostFunction, gamma: float = 1.0, stop_rule=None) -> np.ndarray:
    """Vectorized :func:`trajectory_cost` over a batch."""
    n, L = batch.actions.shape
    stop = set(d.stop_states) | set(stop_rule or ())
    step = batch.step_mask()
    if stop:
        stop_mask = _stop_mask(max(d.table.shape[0], int(batch.states.max()) + 1), stop)
        in_stop = stop_mask[np.where(batch.states >= 0, batch.states, 0)] & batch.state_mask()
        # position of first entry into the stop set (L+1 if never)
        first = np.where(in_stop.any(axis=1), in_stop.argmax(axis=1), L + 1)
        step &= np.arange(L)[None, :] < first[:, None]
    else:
        first = np.full(n, L + 1)
    step &= np.arange(L)[None, :] >= d.skip
    s = np.where(step, batch.states[:, :-1], 0)
    a = np.where(step, batch.actions, 0)
    if d.transition is not None:
        nxt = np.where(step, batch.states[:, 1:], 0)
        c = d.transition[s, a, nxt]
    else:
        c = d.table[s, a]
    disc = gamma ** np.arange(L)
    total = np.sum(np.where(step, c * disc[None, :], 0.0), axis=1)
    if d.initial is not None:
        total += d.initial[batch.origins]
    if d.terminal is not None:
        end = np.minimum(first, batch.lengths)
        total += d.terminal[batch.states[np.arange(n), end]]
    return total


def trajectory_cost(traj: Trajectory, d: CostFunction, gamma: float = 1.0, stop_rule=None) -> float:
    """Discounted cost of one trajectory, truncated at first entry into ``stop_rule``."""
    if traj.length == 0 and d.initial is None and d.terminal is None:
        return 0.0
    batch = TrajectoryBatch.from_trajectories([traj]) if traj.length else TrajectoryBatch(
        np.array([[traj.origin]]), np.zeros((1, 0), dtype=int), np.zeros(1, dtype=int)
    )
    return float(batch_costs(batch, d, gamma, stop_rule)[0])


def expected_cost_dp(mdp: Mdp, policy: TabularPolicy, d: CostFunction, T: int, gamma: float = 1.0) -> np.ndarray:
    """Exact finite-horizon expected cost ``D(s, T; pi)`` by backward recursion."""
    if T < 0:
        raise InputError("horizon must be nonnegative")
    n_s = mdp.n_states
    if T == 0:
        return np.zeros(n_s)
    stop = _stop_mask(n_s, d.stop_states)
    terminal = d.terminal if d.terminal is not None else np.zeros(n_s)
    cost = d.table
    if d.transition is not None:
        cost = np.einsum("sat,sat->sa", mdp.transition, d.transition)
    pi = policy.probs
    W = terminal.copy()
    for t in range(T - 1, -1, -1):
        w = gamma**t if t >= d.skip else 0.0
        q = w * cost + mdp.transition @ W
        W_new = np.sum(pi * q, axis=1)
        W = np.where(stop, terminal, W_new)
    if d.initial is not None:
        W = W + d.initial
    return W


def visitation_weights(mdp: Mdp, policy: TabularPolicy | None, trajectories) -> np.ndarray:
    """Empirical state-visitation frequencies of on-policy trajectories."""
    if isinstance(trajectories, TrajectoryBatch):
        batch = trajectories
    else:
        trajectories = list(trajectories)
        if not trajectories:
            raise InputError("empty trajectory set")
        batch = TrajectoryBatch.from_trajectories(trajectories)
    if len(batch) == 0:
        raise InputError("empty trajectory set")
    visited = batch.states[batch.state_mask()]
    counts = np.bincount(visited, minlength=mdp.n_states).astype(float)
    return counts / counts.sum()


def occupancy(mdp: Mdp, policy: TabularPolicy, init, horizon: int) -> np.ndarray:
    """Exact average occupancy ``sum_{t<=H} Pr(X_t = s) / (H + 1)``."""
    P = induced_chain(mdp, policy)
    x = _as_distribution(init, mdp.n_states)
    total = x.copy()
    for _ in range(horizon):
        x = x @ P
        total += x
    return total / (horizon + 1)


def shortest_path_metric(mdp: Mdp) -> np.ndarray:
    """All-pairs hop distance over the support graph; unreachable pairs get ``|S|``."""
    n = mdp.n_states
    adj = (mdp.transition * mdp.admissible[:, :, None]).max(axis=1) > 0
    nbrs = [np.flatnonzero(adj[s]) for s in range(n)]
    dist = np.full((n, n), n, dtype=int)
    for src in range(n):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[src, v] == n and v != src:
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def second_eigenvalue_modulus(chain: np.ndarray) -> float:
    mods = np.sort(np.abs(np.linalg.eigvals(chain)))[::-1]
    return float(mods[1]) if mods.size > 1 else 0.0


def _eigen_horizon_bound(chain: np.ndarray, epsilon: float, scale: float) -> int | None:
    lam = second_eigenvalue_modulus(chain)
    if lam >= 1.0 - 1e-12:
        return None
    if lam <= 0.0 or scale <= 0.0:
        return 1
    n = chain.shape[0]
    t = np.log(epsilon * (1.0 - lam) / (scale * np.sqrt(n))) / np.log(lam)
    return max(1, int(np.ceil(t)))


def limiting_cost(mdp: Mdp, policy: TabularPolicy, d: CostFunction, gamma: float = 1.0) -> np.ndarray | None:
    """``lim_T D(s, T; pi)`` when it is finite and computable by a linear solve, else ``None``.

    Only nonnegative costs without a terminal charge or skipped steps are
    handled.  The limit is finite when the live states that can still reach
    a paying state form a transient set of the induced chain.
    """
    if d.skip or (d.terminal is not None and np.any(d.terminal != 0)):
        return None
    cost = d.table if d.transition is None else np.einsum("sat,sat->sa", mdp.transition, d.transition)
    if np.any(cost < 0):
        return None
    n = mdp.n_states
    chain = induced_chain(mdp, policy)
    live = ~_stop_mask(n, d.stop_states)
    c = np.where(live, np.sum(policy.probs * cost, axis=1), 0.0)
    paying = live & (c > 0)
    can = paying.copy()
    for _ in range(n):
        grown = can | (live & (chain[:, can] > 0).any(axis=1))
        if np.array_equal(grown, can):
            break
        can = grown
    x = np.zeros(n)
    idx = np.flatnonzero(can)
    if idx.size:
        M = gamma * chain[np.ix_(idx, idx)]
        if np.max(np.abs(np.linalg.eigvals(M))) >= 1.0 - 1e-12:
            return None
        x[idx] = np.linalg.solve(np.eye(idx.size) - M, c[idx])
    if d.initial is not None:
        x = x + d.initial
    return x


def mixing_time(
    mdp: Mdp,
    policy: TabularPolicy,
    d: CostFunction,
    epsilon: float,
    gamma: float = 1.0,
    cap: int = 2**16,
) -> MixingTimeEstimate:
    """Epsilon-return mixing time by horizon doubling on the exact cost recursion.

    Returns the first ``T`` in 1, 2, 4, ... with
    ``max_s |D(s, 2T) - D(s, T)| <= epsilon``.  When the limiting cost is
    available (see :func:`limiting_cost`) ``T`` must also be within
    ``epsilon`` of it; a slowly leaking state can otherwise pass the doubling
    test long before its cost settles.  The eigenvalue bound of the induced
    chain is attached as a diagnostic only.
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    limit = limiting_cost(mdp, policy, d, gamma)
    T = 1
    D_T = expected_cost_dp(mdp, policy, d, T, gamma)
    while True:
        D_2T = expected_cost_dp(mdp, policy, d, 2 * T, gamma)
        gaps = np.abs(D_2T - D_T)
        if limit is not None:
            gaps = np.maximum(gaps, np.abs(limit - D_T))
        if gaps.max() <= epsilon:
            break
        if 2 * T > cap:
            worst = int(gaps.argmax())
            raise NonMixingError(
                f"cost did not settle within {cap} steps; worst state {mdp.state_names[worst]} "
                f"(gap {gaps[worst]:.3g})",
                state=worst,
            )
        T *= 2
        D_T = D_2T
    bound = _eigen_horizon_bound(induced_chain(mdp, policy), epsilon, max(d.max_abs, 1e-300))
    return MixingTimeEstimate(T, epsilon, "exact-doubling", float(gaps.max()), bound)


# ---------------------------------------------------------------------------
# JSON file format


def mdp_to_dict(mdp: Mdp) -> dict:
    names, anames = mdp.state_names, mdp.action_names
    trans, rewards = [], []
    for s in range(mdp.n_states):
        for a in np.flatnonzero(mdp.admissible[s]):
            for t in np.flatnonzero(mdp.transition[s, a]):
                trans.append({"s": names[s], "a": anames[a], "s'": names[t], "p": float(mdp.transition[s, a, t])})
            if mdp.reward[s, a] != 0.0:
                rewards.append({"s": names[s], "a": anames[a], "r": float(mdp.reward[s, a])})
    return {
        "states": list(names),
        "actions": list(anames),
        "admissible": {names[s]: [anames[a] for a in np.flatnonzero(mdp.admissible[s])] for s in range(mdp.n_states)},
        "transitions": trans,
        "rewards": rewards,
        "initial": {names[s]: float(p) for s, p in enumerate(mdp.initial) if p > 0},
        "gamma": mdp.gamma,
        "labels": {k: sorted((names[s] for s in v), key=names.index) for k, v in mdp.labels.items()},
    }


def mdp_from_dict(data: dict, source: str = "<dict>") -> Mdp:
    try:
        states = [str(s) for s in data["states"]]
        actions = [str(a) for a in data["actions"]]
        s_idx = {s: i for i, s in enumerate(states)}
        a_idx = {a: i for i, a in enumerate(actions)}
        n_s, n_a = len(states), len(actions)
        adm = np.zeros((n_s, n_a), dtype=bool)
        admissible = data.get("admissible")
        if admissible is None:
            adm[:] = True
        else:
            for s, acts in admissible.items():
                for a in acts:
                    adm[s_idx[str(s)], a_idx[str(a)]] = True
        P = np.zeros((n_s, n_a, n_s))
        for i, row in enumerate(data["transitions"]):
            s, a, t = s_idx[str(row["s"])], a_idx[str(row["a"])], s_idx[str(row["s'"])]
            P[s, a, t] += float(row["p"])
        r = np.zeros((n_s, n_a))
        for row in data.get("rewards", []):
            r[s_idx[str(row["s"])], a_idx[str(row["a"])]] += float(row["r"])
        mu = np.zeros(n_s)
        for s, p in data["initial"].items():
            mu[s_idx[str(s)]] = float(p)
        labels = {k: frozenset(s_idx[str(s)] for s in v) for k, v in data.get("labels", {}).items()}
        mdp = Mdp(P, r, mu, float(data.get("gamma", 1.0)), adm, labels, tuple(states), tuple(actions))
    except KeyError as exc:
        raise InputError(f"{source}: missing or unknown key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{source}: {exc}") from None
    problems = validate(mdp)
    if problems:
        raise InputError(f"{source}: invalid MDP: " + "; ".join(problems[:5]))
    return mdp


def load_mdp(path) -> Mdp:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return mdp_from_dict(data, str(path))


def save_mdp(mdp: Mdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=2))
