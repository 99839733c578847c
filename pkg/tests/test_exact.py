import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_mdp
from pctladp import gridworld as gw
from pctladp.errors import DivergenceError
from pctladp.exact import (
    bellman_feasibility,
    hardmax_backup,
    policy_from_value,
    q_from_value,
    soft_max,
    softmax_backup,
    unnormalized_policy,
    value_iteration,
    weighted_l1_error,
)
from pctladp.mdp import Mdp


def test_single_action_backup_is_linear():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, n_states=4, n_actions=1)
    V = rng.normal(size=4)
    expect = mdp.reward[:, 0] + mdp.gamma * mdp.transition[:, 0] @ V
    assert np.allclose(softmax_backup(V, mdp, 3.0), expect)


def test_identical_actions_add_tau_ln2():
    q = np.array([[2.0, 2.0]])
    assert soft_max(q, 0.7)[0] == pytest.approx(2.0 + 0.7 * np.log(2))


def test_small_tau_near_hardmax():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng, n_states=8, n_actions=3)
    V = rng.normal(size=8)
    gap = np.abs(softmax_backup(V, mdp, 1e-3) - hardmax_backup(V, mdp)).max()
    assert gap <= 1e-3 * np.log(3) + 1e-6


def test_zero_reward_fixed_points():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, n_states=5, n_actions=3, gamma=0.8)
    mdp = mdp.replace(reward=np.zeros((5, 3)))
    assert np.allclose(value_iteration(mdp, 0.0).values, 0.0)
    tau = 2.0
    assert np.allclose(value_iteration(mdp, tau).values, tau * np.log(3) / (1 - 0.8), atol=1e-6)


def test_two_state_chain_hardmax():
    # s0 -> goal deterministically; goal self-loop pays 1
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    r = np.array([[0.0], [1.0]])
    mdp = Mdp(P, r, np.array([1.0, 0.0]), 0.9)
    V = value_iteration(mdp, 0.0).values
    assert V[1] == pytest.approx(1 / (1 - 0.9), abs=1e-6)
    assert V[0] == pytest.approx(0.9 / (1 - 0.9), abs=1e-6)


def test_gridworld_value_iteration_converges():
    mdp = gw.build(gw.experiment1_config())
    vt = value_iteration(mdp, 5.0)
    assert vt.residual <= 1e-8
    assert np.all(np.isfinite(vt.values))


def test_gamma_one_without_absorbing_diverges():
    P = np.ones((1, 1, 1))
    mdp = Mdp(P, np.ones((1, 1)), np.ones(1), 1.0)
    with pytest.raises(DivergenceError):
        value_iteration(mdp, 0.0, max_iters=5000)


def test_q_from_value_examples():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng, n_states=4, n_actions=2)
    assert np.allclose(q_from_value(np.zeros(4), mdp), mdp.reward)
    V = rng.normal(size=4)
    assert np.allclose(soft_max(q_from_value(V, mdp), 1.5), softmax_backup(V, mdp, 1.5), atol=1e-12)


def test_policy_examples():
    P = np.zeros((1, 2, 1))
    P[0, :, 0] = 1.0
    mdp = Mdp(P, np.zeros((1, 2)), np.ones(1), 0.5)
    assert np.allclose(policy_from_value(np.zeros(1), mdp, 1.0).probs, [[0.5, 0.5]])
    tau = 2.0
    mdp2 = mdp.replace(reward=np.array([[tau, 0.0]]))
    e = np.e
    assert np.allclose(policy_from_value(np.zeros(1), mdp2, tau).probs, [[e / (1 + e), 1 / (1 + e)]])


def test_policy_rows_already_normalized_at_fixed_point():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, n_states=6, n_actions=3)
    V = value_iteration(mdp, 2.0, tol=1e-12).values
    assert np.allclose(unnormalized_policy(V, mdp, 2.0).sum(axis=1), 1.0, atol=1e-9)


def test_feasibility_shift_identity():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, n_states=5, n_actions=2, gamma=0.9)
    V = value_iteration(mdp, 1.0, tol=1e-12).values
    assert abs(bellman_feasibility(V, mdp, 1.0)) <= 1e-9
    assert bellman_feasibility(V + 3.0, mdp, 1.0) == pytest.approx(-(1 - 0.9) * 3.0, abs=1e-9)
    assert bellman_feasibility(V - 3.0, mdp, 1.0) == pytest.approx((1 - 0.9) * 3.0, abs=1e-9)


def test_weighted_l1_examples():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0, 5.0])
    assert weighted_l1_error(a, a, np.ones(3) / 3) == 0.0
    assert weighted_l1_error(a, b, [0, 0, 1]) == 2.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 10.0))
def test_contraction(seed, tau):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    V1, V2 = rng.normal(size=(2, mdp.n_states)) * 10
    lhs = np.abs(softmax_backup(V1, mdp, tau) - softmax_backup(V2, mdp, tau)).max()
    assert lhs <= mdp.gamma * np.abs(V1 - V2).max() + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 10.0))
def test_monotone(seed, tau):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    V1 = rng.normal(size=mdp.n_states)
    V2 = V1 + rng.random(mdp.n_states)
    assert np.all(softmax_backup(V1, mdp, tau) <= softmax_backup(V2, mdp, tau) + 1e-12)
