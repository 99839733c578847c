"""Small random instances and brute-force oracles shared by the tests."""

import itertools

import numpy as np

from pctladp.mdp import Mdp, TabularPolicy


def random_mdp(rng, n_states=None, n_actions=None, gamma=None, labels=None, sparse=0.0) -> Mdp:
    n = n_states or int(rng.integers(2, 7))
    m = n_actions or int(rng.integers(1, 5))
    P = rng.random((n, m, n))
    if sparse:
        P[rng.random(P.shape) < sparse] = 0.0
        P[:, :, 0] += 1e-3  # keep rows nonzero
    P /= P.sum(axis=2, keepdims=True)
    r = rng.normal(size=(n, m))
    mu = np.zeros(n)
    mu[0] = 1.0
    g = float(rng.uniform(0.5, 0.99)) if gamma is None else gamma
    return Mdp(P, r, mu, g, labels=labels or {})


def random_policy(rng, mdp: Mdp) -> TabularPolicy:
    p = rng.random((mdp.n_states, mdp.n_actions)) + 0.05
    return TabularPolicy(p / p.sum(axis=1, keepdims=True))


def chain_of(mdp: Mdp, policy: TabularPolicy) -> np.ndarray:
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def enumerate_paths(chain: np.ndarray, start: int, length: int, stop=()):
    """Yield (states, probability) for every state path of ``length`` steps; paths freeze in ``stop``."""
    n = chain.shape[0]
    stop = set(stop)

    def rec(path, prob):
        if len(path) == length + 1:
            yield tuple(path), prob
            return
        s = path[-1]
        if s in stop:
            yield from rec(path + [s], prob)
            return
        for t in range(n):
            if chain[s, t] > 0:
                yield from rec(path + [t], prob * chain[s, t])

    yield from rec([start], 1.0)


def enumerate_action_paths(mdp: Mdp, pi: np.ndarray, start: int, length: int):
    """Yield (states, actions, probability) over all state-action paths of ``length`` steps."""
    n, m = mdp.n_states, mdp.n_actions
    for acts in itertools.product(range(m), repeat=length):
        for nxt in itertools.product(range(n), repeat=length):
            states = (start,) + nxt
            p = 1.0
            for t in range(length):
                p *= pi[states[t], acts[t]] * mdp.transition[states[t], acts[t], states[t + 1]]
                if p == 0.0:
                    break
            if p > 0.0:
                yield states, acts, p


ATOM_NAMES = ("a", "b", "goal", "A", "B", "obs_1", "region2")


def random_formula(rng, depth=3):
    """A random state formula over the full surface grammar."""
    from pctladp.pctl import (
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
    )

    ops = ("<=", "<", ">=", ">")
    if depth <= 0:
        return TrueF() if rng.random() < 0.2 else Atom(str(rng.choice(ATOM_NAMES)))
    kind = int(rng.integers(0, 7))
    sub = lambda: random_formula(rng, depth - 1)  # noqa: E731
    if kind == 0:
        return random_formula(rng, 0)
    if kind == 1:
        return Not(sub())
    if kind == 2:
        return And(sub(), sub())
    if kind == 3:
        return Implies(sub(), sub())
    if kind == 4:
        return CostBound(str(rng.choice(ops)), float(rng.integers(0, 400)) / 4, int(rng.integers(0, 30)), sub())
    p = float(rng.integers(0, 101)) / 100
    path_kind = int(rng.integers(0, 5))
    if path_kind == 0:
        path = Next(sub())
    elif path_kind == 1:
        path = Until(sub(), sub())
    elif path_kind == 2:
        path = BoundedUntil(sub(), sub(), int(rng.integers(0, 50)))
    elif path_kind == 3:
        path = Eventually(sub())
    else:
        path = BoundedEventually(sub(), int(rng.integers(0, 50)))
    return Prob(str(rng.choice(ops)), p, path)


def softmax_policy_table(mdp: Mdp, features, theta, tau):
    """Boltzmann policy and per-state quantities written out directly, no library calls."""
    V = features @ theta
    Q = mdp.reward + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, V)
    m = Q.max(axis=1, keepdims=True)
    z = np.exp((Q - m) / tau)
    pi = z / z.sum(axis=1, keepdims=True)
    BV = m[:, 0] + tau * np.log(z.sum(axis=1))
    return V, pi, BV - V


def exact_F(mdp: Mdp, features, theta, tau, lam, nu, length, starts):
    """Mean over ``starts`` of E[sum_t f(s_t)] by enumerating every state-action path."""
    V, pi, g = softmax_policy_table(mdp, features, theta, tau)
    B = np.maximum(g, 0.0)
    f = V + lam * B + 0.5 * nu * B**2
    total = 0.0
    for s0 in starts:
        for states, _, p in enumerate_action_paths(mdp, pi, s0, length):
            total += p * f[list(states)].sum()
    return total / len(starts)


def exact_tail(mdp: Mdp, features, theta, tau, start, target, horizon):
    """Pr(target not reached within ``horizon`` steps) from ``start``, by path enumeration."""
    _, pi, _ = softmax_policy_table(mdp, features, theta, tau)
    chain = np.einsum("sa,sat->st", pi, mdp.transition)
    miss = 0.0
    for path, p in enumerate_paths(chain, start, horizon, stop=target):
        if not any(s in target for s in path):
            miss += p
    return miss


def central_diff(fun, theta, h=1e-5):
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        out[k] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return out


def gradient_instance(seed=0):
    """Fixed 4-state, 2-action MDP with two positive features; b = {3}, starts {0, 1}."""
    rng = np.random.default_rng(seed)
    P = rng.random((4, 2, 4)) + 0.1
    P /= P.sum(axis=2, keepdims=True)
    r = rng.normal(size=(4, 2))
    mu = np.array([0.5, 0.5, 0.0, 0.0])
    mdp = Mdp(P, r, mu, 0.9, labels={"b": {3}})
    features = rng.uniform(0.2, 1.0, size=(4, 2))
    theta = np.array([0.8, -0.6])
    return mdp, features, theta
