import numpy as np
import pytest

import repdyn as rd
from repdyn.errors import ConfigurationError, DivergenceError
from repdyn.experiments import chain_uniform, frozen_ensemble_span
from repdyn.flows import td_lambda_series_operator, trajectory_to_csv


def rk4_oracle(rhs, y0, t_end, step):
    """Independent fixed-step RK4 used as the integration oracle."""
    y = np.array(y0, dtype=float)
    t = 0.0
    while t < t_end - 1e-12:
        h = min(step, t_end - t)
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def taylor_expm_oracle(A, terms=60):
    """Truncated Taylor series with compensated summation."""
    n = A.shape[0]
    total = np.zeros((n, n))
    comp = np.zeros((n, n))
    term = np.eye(n)
    for k in range(terms):
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        term = term @ A / (k + 1)
    return total


def test_matrix_exponential_trivia():
    np.testing.assert_array_equal(rd.matrix_exponential(np.zeros((3, 3)), 1.0), np.eye(3))
    d = np.diag([0.5, -1.0, 2.0])
    np.testing.assert_allclose(rd.matrix_exponential(d, 1.0), np.diag(np.exp(np.diag(d))),
                               rtol=1e-14)


def test_matrix_exponential_matches_taylor_oracle():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    A *= 5.0 / np.linalg.norm(A, 2)
    np.testing.assert_allclose(rd.matrix_exponential(A, 1.0), taylor_expm_oracle(A),
                               atol=1e-9)


def test_td_flow_initial_condition_and_contraction():
    chain = chain_uniform()
    v_star = rd.exact_value(chain)
    rng = np.random.default_rng(1)
    # contraction bound: ||V_t - V*|| <= e^{-(1-gamma) t} ||V_0 - V*||;
    # with a 0.01-size perturbation, t=100 lands below 1e-6
    v0 = v_star + 0.01 * rng.standard_normal(30)
    traj = rd.td_value_flow(chain, v0, [0.0, 100.0])
    np.testing.assert_array_equal(traj.states[0][:, 0], v0)
    assert np.abs(traj.final()[:, 0] - v_star).max() < 1e-6


def test_td_flow_matches_rk4_oracle():
    chain = chain_uniform()
    op = -(np.eye(30) - 0.9 * chain.transition)
    rng = np.random.default_rng(2)
    v0 = rng.standard_normal(30)
    oracle = rk4_oracle(lambda v: op @ v + chain.reward, v0, 10.0, 1e-3)
    traj = rd.td_value_flow(chain, v0, [10.0])
    assert np.abs(traj.final()[:, 0] - oracle).max() < 1e-6


def test_mc_flow_stays_on_the_line():
    chain = chain_uniform()
    v_star = rd.exact_value(chain)
    rng = np.random.default_rng(3)
    v0 = rng.standard_normal(30)
    traj = rd.mc_value_flow(chain, v0, np.linspace(0.0, 8.0, 33))
    np.testing.assert_array_equal(traj.states[0][:, 0], v0)
    line = rd.orthonormalize((v0 - v_star)[:, None])
    for state in traj.states[1:]:
        assert rd.vector_subspace_angle(state[:, 0] - v_star, line) < 1e-10


def test_nstep_reduces_to_td_and_zero_reward_limit():
    chain = chain_uniform()
    rng = np.random.default_rng(4)
    v0 = rng.standard_normal(30)
    times = np.linspace(0.0, 5.0, 6)
    one = rd.nstep_value_flow(chain, 1, v0, times)
    td = rd.td_value_flow(chain, v0, times)
    for a, b in zip(one.states, td.states):
        assert np.abs(a - b).max() < 1e-12
    silent = chain.with_reward(np.zeros(30))
    late = rd.nstep_value_flow(silent, 4, v0, [400.0])
    assert np.abs(late.final()).max() < 1e-8


def test_nstep_matches_rk4_oracle():
    chain = chain_uniform()
    n = 3
    op = -(np.eye(30) - np.linalg.matrix_power(0.9 * chain.transition, n))
    forcing = sum(np.linalg.matrix_power(0.9 * chain.transition, k) for k in range(n)) \
        @ chain.reward
    rng = np.random.default_rng(5)
    v0 = rng.standard_normal(30)
    oracle = rk4_oracle(lambda v: op @ v + forcing, v0, 10.0, 1e-3)
    traj = rd.nstep_value_flow(chain, n, v0, [10.0])
    assert np.abs(traj.final()[:, 0] - oracle).max() < 1e-6


def test_td_lambda_series_matches_truncated_sum():
    chain = chain_uniform()
    lam = 0.5
    gp = 0.9 * chain.transition
    truncated = np.zeros((30, 30))
    power = gp.copy()
    for k in range(1, 301):
        truncated += (1 - lam) * lam ** (k - 1) * power
        power = power @ gp
    assert np.abs(td_lambda_series_operator(chain, lam) - truncated).max() < 1e-10


def test_td_lambda_reduces_to_td_and_reaches_fixed_point():
    chain = chain_uniform()
    rng = np.random.default_rng(6)
    v0 = rng.standard_normal(30)
    times = np.linspace(0.0, 5.0, 6)
    zero = rd.td_lambda_value_flow(chain, 0.0, v0, times)
    td = rd.td_value_flow(chain, v0, times)
    for a, b in zip(zero.states, td.states):
        assert np.abs(a - b).max() < 1e-10
    late = rd.td_lambda_value_flow(chain, 0.5, v0, [300.0])
    assert np.abs(late.final()[:, 0] - rd.exact_value(chain)).max() < 1e-8


def test_td_lambda_matches_rk4_oracle():
    chain = chain_uniform()
    op = td_lambda_series_operator(chain, 0.5) - np.eye(30)
    psi_forcing = np.linalg.solve(np.eye(30) - 0.45 * chain.transition, chain.reward)
    rng = np.random.default_rng(7)
    v0 = rng.standard_normal(30)
    oracle = rk4_oracle(lambda v: op @ v + psi_forcing, v0, 10.0, 1e-3)
    traj = rd.td_lambda_value_flow(chain, 0.5, v0, [10.0])
    assert np.abs(traj.final()[:, 0] - oracle).max() < 1e-6


def test_value_flow_semigroup_property():
    chain = chain_uniform()
    rng = np.random.default_rng(8)
    v0 = rng.standard_normal(30)
    for flow in (rd.td_value_flow,
                 rd.mc_value_flow,
                 lambda c, v, t: rd.nstep_value_flow(c, 3, v, t),
                 lambda c, v, t: rd.td_lambda_value_flow(c, 0.5, v, t)):
        direct = flow(chain, v0, [5.0]).final()[:, 0]
        first = flow(chain, v0, [2.0]).final()[:, 0]
        chained = flow(chain, first, [3.0]).final()[:, 0]
        assert np.abs(direct - chained).max() < 1e-9


def test_value_flow_fixed_point_residual_at_settling_time():
    # smallest t with e^{-(1-gamma) t} < 1e-8 is just above 184
    chain = chain_uniform()
    rng = np.random.default_rng(9)
    v0 = rng.standard_normal(30)
    t = 185.0
    v_star = rd.exact_value(chain)
    for flow in (rd.td_value_flow,
                 lambda c, v, tt: rd.nstep_value_flow(c, 3, v, tt),
                 lambda c, v, tt: rd.td_lambda_value_flow(c, 0.5, v, tt)):
        final = flow(chain, v0, [t]).final()[:, 0]
        assert np.abs(final - v_star).max() <= 1e-6


def test_joint_flow_frozen_when_weights_and_reward_vanish():
    chain = chain_uniform().with_reward(np.zeros(30))
    rng = np.random.default_rng(10)
    phi0 = rng.standard_normal((30, 4))
    traj = rd.joint_flow(chain, phi0, np.zeros(4), 1.0, 1.0, [0.0, 2.0], step=1e-2)
    assert np.abs(traj.final()[:30] - phi0).max() == 0.0


def test_joint_flow_weight_fixed_point_matches_linear_solve():
    chain = chain_uniform()
    rng = np.random.default_rng(11)
    phi = rng.standard_normal((30, 4))
    # alpha = 0 keeps phi fixed; w converges to the solve of
    # phi^T ((I - gamma P) phi w - R) = 0
    a_proj = phi.T @ (np.eye(30) - 0.9 * chain.transition) @ phi
    w_star = np.linalg.solve(a_proj, phi.T @ chain.reward)
    traj = rd.joint_flow(chain, phi, np.zeros(4), 0.0, 1.0, [80.0], step=1e-2)
    assert np.abs(traj.final()[30] - w_star).max() < 1e-8


def test_joint_flow_rk4_step_halving_is_fourth_order():
    chain = chain_uniform()
    rng = np.random.default_rng(12)
    phi0 = rng.standard_normal((30, 2))
    w0 = rng.standard_normal(2)

    def endpoint(step):
        return rd.joint_flow(chain, phi0, w0, 1.0, 1.0, [1.0], step=step).final()

    reference = endpoint(1.0 / 4096)
    err_h = np.linalg.norm(endpoint(1.0 / 16) - reference)
    err_h2 = np.linalg.norm(endpoint(1.0 / 32) - reference)
    assert 8.0 < err_h / err_h2 < 32.0


def test_joint_flow_divergence_detection():
    chain = chain_uniform()
    rng = np.random.default_rng(13)
    phi0 = 10.0 * rng.standard_normal((30, 2))
    w0 = 10.0 * rng.standard_normal(2)
    with pytest.raises(DivergenceError) as info:
        rd.joint_flow(chain, phi0, w0, 80.0, 80.0, [50.0], step=1e-2)
    assert info.value.time is not None


def test_ensemble_single_head_reduces_to_joint_flow():
    chain = chain_uniform()
    rng = np.random.default_rng(14)
    phi0 = rng.standard_normal((30, 3))
    w = rd.sample_weights(1, 3, 1.0, 15)
    times = np.linspace(0.0, 3.0, 4)
    for beta in (0.0, 1.0):
        ens = rd.ensemble_flow(chain, rd.EnsembleState(phi0, w), 1.0, beta, times,
                               step=1e-2)
        joint = rd.joint_flow(chain, phi0, w[0], 1.0, beta, times, step=1e-2)
        for a, b in zip(ens.states, joint.states):
            assert np.abs(a - b[:30]).max() < 1e-12


def test_ensemble_flow_matches_rk4_oracle_with_trained_heads():
    chain = chain_uniform()
    rng = np.random.default_rng(16)
    phi0 = rng.standard_normal((30, 2))
    w = rd.sample_weights(5, 2, 0.2, 17)

    def rhs(state):
        phi, wmat = state[:30], state[30:].reshape(2, 5)
        pred = phi @ wmat
        delta = chain.reward[:, None] + 0.9 * chain.transition @ pred - pred
        return np.concatenate([delta @ wmat.T, (phi.T @ delta).reshape(-1, 2)])

    y0 = np.concatenate([phi0, w.T.reshape(-1, 2)])
    oracle = rk4_oracle(rhs, y0, 2.0, 1e-3)[:30]
    traj = rd.ensemble_flow(chain, rd.EnsembleState(phi0, w), 1.0, 1.0, [2.0], step=1e-3)
    assert np.abs(traj.final() - oracle).max() < 1e-10


def test_ensemble_cumulants_enter_per_head():
    chain = chain_uniform().with_reward(np.zeros(30))
    rng = np.random.default_rng(18)
    phi0 = rng.standard_normal((30, 2))
    w = rd.sample_weights(4, 2, 0.25, 19)
    cums = rd.sample_cumulants(4, np.eye(30), 20)
    state0 = rd.EnsembleState(phi0, w, cums)
    traj = rd.ensemble_flow(chain, state0, 1.0, 0.0, [1.0], step=1e-2)
    # oracle: frozen-head closed coupling d/dt phi = (gP - I) phi W + C W_heads
    W = w.T @ w
    forcing = cums @ w
    oracle = rk4_oracle(
        lambda p: (0.9 * chain.transition @ p - p) @ W + forcing, phi0, 1.0, 1e-2)
    assert np.abs(traj.final() - oracle).max() < 1e-12


def test_ensemble_frozen_span_converges_to_leading_eigenspace():
    # zero reward, frozen heads: the feature span approaches the span of the
    # K leading transition eigenvectors even at modest head counts
    chain = chain_uniform().with_reward(np.zeros(30))
    rng = np.random.default_rng(21)
    phi0 = rng.standard_normal((30, 4))
    w = rd.sample_weights(64, 4, 1.0 / 64, 22)
    span = frozen_ensemble_span(chain.transition, 0.9, w, phi0, 300.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        target = rd.ebf(chain.transition, 4)
    assert rd.grassmann_distance(span, target).distance < 1e-2


def test_matrix_exponential_overflow_raises():
    from repdyn.errors import NumericalError

    with np.errstate(over="ignore"), pytest.raises(NumericalError):
        rd.matrix_exponential(800.0 * np.eye(3), 1.0)
    with pytest.raises(NumericalError):
        rd.matrix_exponential(np.array([[np.nan]]), 1.0)


def test_random_cumulant_span_converges_around_its_fixed_point():
    # frozen heads with Gaussian per-head rewards: the flow settles at
    # Psi Z W^{-1} (the exact fixed point of the finite-head system; W -> I
    # as M grows) and the residual span approaches the leading eigenspace
    chain = chain_uniform().with_reward(np.zeros(30))
    rng = np.random.default_rng(40)
    K, M = 4, 10000
    phi0 = rng.standard_normal((30, K))
    w = rd.sample_weights(M, K, 1.0 / M, 41)
    cums = rd.sample_cumulants(M, np.eye(30), 42)
    z = cums @ w
    W = w.T @ w
    fixed_point = rd.resolvent(chain.transition, 0.9) @ z @ np.linalg.inv(W)
    span = frozen_ensemble_span(chain.transition, 0.9, w, phi0 - fixed_point, 300.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        target = rd.ebf(chain.transition, K)
    assert rd.grassmann_distance(span, target).distance < 5e-2
    # and the integrated flow really does settle at that fixed point
    settled = rd.ensemble_flow(chain, rd.EnsembleState(phi0, w, cums), 1.0, 0.0,
                               [150.0], step=1e-2).final()
    rel = np.linalg.norm(settled - fixed_point) / np.linalg.norm(fixed_point)
    assert rel < 1e-6


def test_linear_limit_flow_fixed_points():
    chain = chain_uniform()
    A = -(np.eye(30) - 0.9 * chain.transition)
    rng = np.random.default_rng(23)
    phi0 = rng.standard_normal((30, 3))
    # no forcing: collapse to zero
    spec = rd.LinearFlowSpec(A, np.zeros((30, 3)), phi0)
    assert np.abs(rd.linear_limit_flow(spec, [0.0]).states[0] - phi0).max() == 0.0
    assert np.abs(rd.linear_limit_flow(spec, [500.0]).final()).max() < 1e-10
    # Gaussian forcing: fixed point is the resolvent applied to it
    z = rng.standard_normal((30, 3))
    spec2 = rd.LinearFlowSpec(A, z, phi0)
    target = np.linalg.solve(np.eye(30) - 0.9 * chain.transition, z)
    assert np.abs(rd.linear_limit_flow(spec2, [500.0]).final() - target).max() < 1e-8


def test_linear_limit_flow_warns_on_unstable_operator():
    with pytest.warns(RuntimeWarning):
        rd.linear_limit_flow(rd.LinearFlowSpec(np.eye(2), np.zeros((2, 1)),
                                               np.ones((2, 1))), [1.0])


def test_multi_task_operator_reduction_and_average():
    chain = chain_uniform()
    single = rd.build_multi_task_operator([chain], "policies")
    np.testing.assert_allclose(single, -(np.eye(30) - 0.9 * chain.transition), atol=1e-15)
    m = rd.build_chain_mdp(30, 0.01, 2.0, 1.0)
    left = rd.induce(m, rd.Policy.deterministic(np.zeros(30, int), 2), 0.9)
    right = rd.induce(m, rd.Policy.deterministic(np.ones(30, int), 2), 0.9)
    avg = rd.build_multi_task_operator([left, right], "policies")
    p_bar = (left.transition + right.transition) / 2
    np.testing.assert_allclose(avg, -(np.eye(30) - 0.9 * p_bar), atol=1e-15)
    np.testing.assert_allclose(p_bar, chain.transition, atol=1e-15)
    # discount averaging
    g1 = rd.induce(m, rd.Policy.uniform(30, 2), 0.8)
    g2 = rd.induce(m, rd.Policy.uniform(30, 2), 0.99)
    disc = rd.build_multi_task_operator([g1, g2], "discounts")
    np.testing.assert_allclose(disc, -(np.eye(30) - 0.895 * chain.transition), atol=1e-14)
    with pytest.raises(ConfigurationError):
        rd.build_multi_task_operator([left, right], "discounts")


def test_multi_task_operator_ebf_is_average_chain_ebf():
    import warnings

    m = rd.build_chain_mdp(30, 0.01, 2.0, 1.0)
    left = rd.induce(m, rd.Policy(np.column_stack([np.full(30, 0.75), np.full(30, 0.25)])), 0.9)
    right = rd.induce(m, rd.Policy(np.column_stack([np.full(30, 0.25), np.full(30, 0.75)])), 0.9)
    op = rd.build_multi_task_operator([left, right], "policies")
    p_bar = (left.transition + right.transition) / 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # eigenvectors of -(I - gamma P_bar) ordered by value match ebf(P_bar)
        vals, vecs = np.linalg.eig(op)
        top = rd.orthonormalize(np.real(vecs[:, np.argsort(vals.real)[::-1][:4]]))
        assert rd.grassmann_distance(top, rd.ebf(p_bar, 4)).distance < 1e-8


def test_split_heads_blocks():
    assign = rd.split_heads(8, 2)
    np.testing.assert_array_equal(assign, [0, 0, 0, 0, 1, 1, 1, 1])
    with pytest.raises(ConfigurationError):
        rd.split_heads(7, 2)


def test_trajectory_validation_and_csv():
    chain = chain_uniform()
    traj = rd.td_value_flow(chain, np.zeros(30), [0.0, 1.0, 2.0])
    text = trajectory_to_csv(traj)
    header_lines = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert any("flow=td" in ln for ln in header_lines)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0].startswith("t,v_0,")
    assert len(body) == 4
    with pytest.raises(ConfigurationError):
        rd.td_value_flow(chain, np.zeros(30), [2.0, 1.0])
    # long format for matrix flows
    rng = np.random.default_rng(30)
    spec = rd.LinearFlowSpec(-(np.eye(30) - 0.9 * chain.transition),
                             np.zeros((30, 2)), rng.standard_normal((30, 2)))
    long_text = trajectory_to_csv(rd.linear_limit_flow(spec, [0.0, 1.0]))
    assert "t,entry_row,entry_col,value" in long_text
