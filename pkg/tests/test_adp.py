import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    central_diff,
    enumerate_action_paths,
    exact_F,
    exact_tail,
    gradient_instance,
    random_mdp,
    softmax_policy_table,
)
from pctladp import gridworld as gw
from pctladp.adp import (
    GgkBasis,
    Problem,
    SamplerConfig,
    SolverConfig,
    SolverState,
    ValueApprox,
    allocate,
    basis_eval,
    bellman_gap,
    chance_gap,
    evaluate,
    grad_F,
    grad_log_policy,
    grad_m,
    hinge,
    hinge_grad,
    inner_solve,
    lagrangian_value,
    outer_solve,
    sample_chance,
    sample_onpolicy,
)
from pctladp.errors import DivergenceError, InputError, OffPolicyError, SamplingCoverageError
from pctladp.exact import value_iteration
from pctladp.experiments import grid_centers
from pctladp.mdp import Mdp, TabularPolicy, TrajectoryBatch
from pctladp.pctl import compile_formula, parse

# basis


def test_basis_examples():
    cfg = gw.experiment1_config()
    mdp = gw.build(cfg)
    basis = GgkBasis.for_mdp(mdp, grid_centers(cfg), 5.0)
    assert basis.size == 9
    phi = basis_eval(basis, gw.cell_index(cfg, (0, 0)))
    centers = [mdp.state_names[c] for c in basis.centers]
    assert phi[centers.index("0,0")] == 1.0
    assert phi[centers.index("5,5")] == pytest.approx(np.exp(-2.0))


def test_basis_at_sigma_distance():
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[1, 0, 2] = P[2, 0, 0] = 1.0
    mdp = Mdp(P, np.zeros((3, 1)), np.eye(3)[0])
    basis = GgkBasis.for_mdp(mdp, [1], 1.0)
    assert basis_eval(basis, 0)[0] == pytest.approx(np.exp(-0.5))
    with pytest.raises(InputError):
        GgkBasis.for_mdp(mdp, [], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_linearity(seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(5, 3))
    t1, t2 = rng.normal(size=(2, 3))
    va = ValueApprox(phi, t1, 1.0)
    assert np.allclose(va.with_theta(t1 + t2).values(), va.values() + va.with_theta(t2).values())
    assert np.allclose(va.with_theta(2.5 * t1).values(), 2.5 * va.values())


# policy gradient pieces


def test_single_action_zero_score():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, n_states=3, n_actions=1)
    va = ValueApprox(rng.random((3, 2)), rng.normal(size=2), 1.0)
    assert np.allclose(grad_log_policy(va, mdp, 1, 0), 0.0)


def test_symmetric_actions_antisymmetric_score():
    P = np.zeros((3, 2, 3))
    P[:, 0, 1] = 1.0
    P[:, 1, 2] = 1.0
    mdp = Mdp(P, np.zeros((3, 2)), np.eye(3)[0], 0.9)
    phi = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    va = ValueApprox(phi, np.zeros(2), 2.0)
    assert np.allclose(grad_log_policy(va, mdp, 0, 0), -grad_log_policy(va, mdp, 0, 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grad_log_policy_finite_difference(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_states=5, n_actions=3)
    phi = rng.random((5, 2))
    theta, tau = rng.normal(size=2), float(rng.uniform(0.5, 5))
    for s in range(5):
        for a in range(3):
            fd = central_diff(lambda t: np.log(softmax_policy_table(mdp, phi, t, tau)[1][s, a]), theta, 1e-6)
            an = grad_log_policy(ValueApprox(phi, theta, tau), mdp, s, a)
            assert np.linalg.norm(an - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_score_identity_exact():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng, n_states=4, n_actions=3)
    ev = evaluate(ValueApprox(rng.random((4, 2)), rng.normal(size=2), 1.5), mdp)
    assert np.allclose(np.einsum("sa,sak->sk", ev.pi, ev.grad_log_pi), 0.0, atol=1e-12)


def test_bellman_gap_examples():
    P = np.ones((1, 1, 1))
    mdp = Mdp(P, np.array([[1.0]]), np.ones(1), 0.5)
    va = ValueApprox(np.ones((1, 1)), np.array([2.0]), 1.0)
    assert bellman_gap(va, mdp, 0) == pytest.approx(0.0)
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, n_states=4, n_actions=2, gamma=0.9)
    va = ValueApprox(np.ones((4, 1)), np.array([1e4]), 1.0)
    assert np.all(bellman_gap(va, mdp) < 0)


def test_hinge_examples():
    assert hinge(-1.0) == 0.0 and hinge(0.0) == 0.0 and hinge(2.5) == 2.5
    assert list(hinge_grad([-1.0, 0.0, 2.5])) == [0.0, 0.0, 1.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grad_g_finite_difference(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_states=5, n_actions=3)
    phi = rng.random((5, 2))
    theta, tau = rng.normal(size=2), float(rng.uniform(0.5, 5))
    ev = evaluate(ValueApprox(phi, theta, tau), mdp)
    for s in range(5):
        fd = central_diff(lambda t: softmax_policy_table(mdp, phi, t, tau)[2][s], theta, 1e-6)
        assert np.linalg.norm(ev.grad_g[s] - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


# estimators


def test_grad_F_trivial_cases():
    P = np.ones((1, 1, 1))
    mdp = Mdp(P, np.zeros((1, 1)), np.ones(1), 0.9)
    phi = np.array([[0.7, 0.2]])
    ev = evaluate(ValueApprox(phi, np.zeros(2), 1.0), mdp)
    batch = sample_onpolicy(mdp, ev.policy(), SamplerConfig(n_onpolicy=5), 0)
    assert np.allclose(grad_F(ev, batch, 0.0, 0.0), phi[0])
    # zero features: f = V = 0 and no penalty terms
    mdp2 = random_mdp(np.random.default_rng(0), n_states=3, n_actions=2).replace(reward=np.zeros((3, 2)))
    ev2 = evaluate(ValueApprox(np.zeros((3, 2)), np.zeros(2), 1.0), mdp2)
    b2 = sample_onpolicy(mdp2, ev2.policy(), SamplerConfig(), 0)
    assert np.allclose(grad_F(ev2, b2, 0.0, 0.0), 0.0)


def test_grad_F_off_policy_rejected():
    mdp, phi, theta = gradient_instance()
    ev = evaluate(ValueApprox(phi, theta, 1.0), mdp)
    batch = sample_onpolicy(mdp, ev.policy(), SamplerConfig(), 0)
    with pytest.raises(OffPolicyError):
        grad_F(ev, batch, 0.0, 0.0, behavior=TabularPolicy.uniform(mdp))


def test_grad_F_matches_enumeration():
    mdp, phi, theta = gradient_instance()
    tau, lam, nu, L = 1.0, 2.0, 5.0, 4
    exact = central_diff(lambda t: exact_F(mdp, phi, t, tau, lam, nu, L, range(4)), theta)
    ev = evaluate(ValueApprox(phi, theta, tau), mdp)
    batch = sample_onpolicy(mdp, ev.policy(), SamplerConfig(n_onpolicy=100_000, len_onpolicy=L), 1)
    est = grad_F(ev, batch, lam, nu)
    assert np.linalg.norm(est - exact) <= 0.05 * np.linalg.norm(exact)


def test_lagrangian_matches_enumeration():
    mdp, phi, theta = gradient_instance()
    tau, lam, nu, L = 1.0, 2.0, 5.0, 4
    exact = exact_F(mdp, phi, theta, tau, lam, nu, L, range(4))
    ev = evaluate(ValueApprox(phi, theta, tau), mdp)
    batch = sample_onpolicy(mdp, ev.policy(), SamplerConfig(n_onpolicy=100_000, len_onpolicy=L), 2)
    state = SolverState(theta, lam, np.zeros(0), nu, nu, 0.1, 0.1)
    assert lagrangian_value(state, ev, batch) == pytest.approx(exact, rel=0.01)
    # no multipliers or penalty: plain sum of V over the path
    state0 = SolverState(theta, 0.0, np.zeros(0), 0.0, 0.0, 0.1, 0.1)
    plain = float((ev.V[np.where(batch.state_mask(), batch.states, 0)] * batch.state_mask()).sum(1).mean())
    assert lagrangian_value(state0, ev, batch) == pytest.approx(plain)


def _chance_setup(n=100_000, seed=3):
    mdp, phi, theta = gradient_instance()
    c = compile_formula(parse("P>=0.9 (F<=3 b)"), mdp)
    ev = evaluate(ValueApprox(phi, theta, 1.0), mdp)
    Z = sample_chance(mdp, ev.policy(), c, SamplerConfig(n_chance=n, len_chance=3), np.random.default_rng(seed))
    return mdp, phi, theta, c, ev, Z


def test_chance_gap_matches_enumeration():
    mdp, phi, theta, c, ev, Z = _chance_setup()
    for s in (0, 1):
        tail = exact_tail(mdp, phi, theta, 1.0, s, {3}, 3)
        n = len(Z.rows(s))
        sd = np.sqrt(tail * (1 - tail) / n)
        assert abs(chance_gap(c, Z, s) - (tail - c.beta)) <= 3 * sd


def test_chance_gap_extremes_and_coverage():
    mdp, phi, theta, c, ev, Z = _chance_setup(n=10)
    never = Z.__class__(c, Z.batch, np.ones_like(Z.costs), Z.weights)  # every path reaches b
    always = Z.__class__(c, Z.batch, np.zeros_like(Z.costs), Z.weights)
    assert chance_gap(c, never, 0) == pytest.approx(-c.beta)
    assert chance_gap(c, always, 0) == pytest.approx(1 - c.beta)
    with pytest.raises(SamplingCoverageError):
        chance_gap(c, Z, 2)
    assert np.allclose(grad_m(ev, never, 3.0, 20.0), 0.0)
    assert np.allclose(grad_m(ev, Z, 0.0, 0.0), 0.0)


def test_grad_m_matches_enumeration():
    mdp, phi, theta, c, ev, Z = _chance_setup()
    xi, nu = 3.0, 20.0

    def m(t):
        gaps = np.array([exact_tail(mdp, phi, t, 1.0, s, {3}, 3) - c.beta for s in (0, 1)])
        B = np.maximum(gaps, 0.0)
        return np.mean(xi * B + 0.5 * nu * B**2)

    exact = central_diff(m, theta)
    est = grad_m(ev, Z, xi, nu)
    assert np.linalg.norm(est - exact) <= 0.05 * np.linalg.norm(exact)


def test_allocate_stratified():
    starts = allocate({4: 1.0, 7: 1.0, 9: 2.0}, 10)
    counts = {s: int((starts == s).sum()) for s in (4, 7, 9)}
    assert sum(counts.values()) == 10 and counts[9] == 5


# solver loops


def test_one_state_recovers_fixed_point():
    mdp = Mdp(np.ones((1, 1, 1)), np.array([[3.0]]), np.ones(1), 0.5)
    prob = Problem(mdp, np.ones((1, 1)), tau=1.0)
    res = outer_solve(prob, SolverConfig(tau=1.0, eps0=1e-4, max_inner=5000, max_outer=10), SamplerConfig(), seed=0)
    assert res.theta[0] == pytest.approx(value_iteration(mdp, 1.0).values[0], abs=1e-3)


def test_inner_zero_iterations_at_stationary_point():
    mdp = Mdp(np.ones((1, 1, 1)), np.array([[3.0]]), np.ones(1), 0.5)
    prob = Problem(mdp, np.ones((1, 1)), tau=1.0)
    cfg = SolverConfig(tau=1.0)
    # g = 3 - theta/2; at theta=5.6, B(g)=0.2 and 1 + nu*B*(gamma-1) = 0
    state = SolverState(np.array([5.6]), 0.0, np.zeros(0), 10.0, 10.0, 0.1, 0.1)
    res = inner_solve(prob, state, SamplerConfig(), 1e-9, np.random.default_rng(0), cfg)
    assert res.iterations == 0 and res.converged


def test_divergence_guard():
    mdp, phi, _ = gradient_instance()
    prob = Problem(mdp, phi, tau=1.0)
    with pytest.raises(DivergenceError):
        outer_solve(prob, SolverConfig(tau=1.0, eta1=1e4, theta_bound=1e3, max_outer=2), SamplerConfig(), seed=0)


def test_penalty_trigger_monotone():
    mdp, phi, _ = gradient_instance()
    prob = Problem(mdp, phi, tau=1.0)
    cfg = SolverConfig(tau=1.0, max_inner=30, max_outer=5)
    res = outer_solve(prob, cfg, SamplerConfig(), seed=1)
    nus = [row["nu1"] for row in res.trace]
    for a, b in zip(nus, nus[1:]):
        assert b == a or b == pytest.approx(a * cfg.b)


def test_outer_solve_deterministic_and_traced():
    cfg = gw.experiment2_config()
    mdp = gw.build(cfg)
    basis = GgkBasis.for_mdp(mdp, grid_centers(cfg), 5.0)
    c = compile_formula(parse("A => P>=0.2 (X C<=13 (F<=14 B))"), mdp)
    prob = Problem(mdp, basis, [c], tau=5.0)
    scfg = SolverConfig(max_inner=10, max_outer=2, nu2=500.0)
    a = outer_solve(prob, scfg, SamplerConfig(), seed=4)
    b = outer_solve(prob, scfg, SamplerConfig(), seed=4)
    assert np.array_equal(a.theta, b.theta)
    assert not a.converged and len(a.trace) == 2
    assert {"k", "max_Bg", "max_Bl", "lambda", "xi", "nu1", "nu2", "theta_norm"} <= set(a.trace[0])


def test_sampler_config_checks():
    mdp = gw.build(gw.experiment2_config())
    c = compile_formula(parse("A => P>=0.2 (X C<=13 (F<=14 B))"), mdp)
    with pytest.raises(InputError):
        SamplerConfig(len_chance=10).check([c])
    with pytest.raises(InputError):
        SamplerConfig(n_chance=1).check([c])
    with pytest.raises(InputError):
        SolverConfig(b=0.9).check()
    with pytest.raises(InputError):
        SolverConfig(stop_rule="sometimes").check()
