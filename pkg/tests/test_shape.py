"""Shape-function estimator and its structure reports at small scale."""

import math

import numpy as np
import pytest

import lppmin.dp as dp
from lppmin.env import EnvError, EnvParams, replica_seed, sample_environment
from lppmin.shape import (
    alpha_index,
    check_bounds_chain,
    check_corner,
    check_nonlinearity,
    concavity_violations,
    default_alpha_grid,
    detect_flat_edge,
    estimate_s_ci,
    estimate_shape,
    evenness_max_z,
    flat_edge_secants,
    monotone0_ok,
    shape_diagnostics,
)


PARAMS = EnvParams(kappa=0.0, c=1.0, family="uniform", seed=1)


@pytest.fixture(scope="module")
def est_small():
    return estimate_shape(PARAMS, default_alpha_grid(), [100, 200, 400],
                          replicas=30)


# -- grid indexing ------------------------------------------------------------

def test_alpha_index_truncates_toward_zero():
    assert alpha_index(0.29, 100) == 29
    assert alpha_index(-0.29, 100) == -29
    assert alpha_index(0.1, 3) == 0
    assert alpha_index(1.0, 57) == 57
    assert alpha_index(0.0, 1000) == 0
    assert alpha_index(0.06, 100) == 6  # 0.06*100 = 6.00000000000000...1


def test_default_alpha_grid_shape():
    g = default_alpha_grid()
    assert g[0] == 0.0 and g[-1] == 1.0
    assert np.all(np.diff(g) > 0)
    assert 0.02 in g and 0.25 in g and 0.5 in g


# -- estimator wiring ---------------------------------------------------------

def test_estimate_arrays_consistent(est_small):
    e = est_small
    assert e.lambda_hat.shape == (len(e.alphas), 3)
    assert e.vals.shape == (30, len(e.alphas), 3)
    assert e.replicas == 30 and not e.truncated
    assert len(list(e.rows())) == len(e.alphas) * 3
    assert e.lam(0.0) == e.lambda_hat[0, -1]
    assert e.se(0.5, 200) == e.stderr[list(e.alphas).index(0.5), 1]


def test_forced_endpoint_value_recomputed(est_small):
    # alpha = 1 forces the straight path: value is -mean(B(i) F(i))
    e = est_small
    n = 200
    r = 4
    p_r = (PARAMS.with_seed(replica_seed(PARAMS.seed, r))
           .with_window(-400, 400).with_horizon(400))
    env = sample_environment(p_r)
    forced = -sum(float(env.B(i)) * float(env.F(i)) for i in range(1, n + 1)) / n
    assert e.vals[r, list(e.alphas).index(1.0), 1] == pytest.approx(forced, rel=1e-12)


def test_replica_value_recomputed_via_dp(est_small):
    e = est_small
    n, alpha, r = 100, 0.3, 7
    p_r = (PARAMS.with_seed(replica_seed(PARAMS.seed, r))
           .with_window(-400, 400).with_horizon(400))
    env = sample_environment(p_r)
    k = alpha_index(alpha, n)
    want = -dp.min_action_point(env, n, k, window=(-400, 400)) / n
    assert e.vals[r, list(e.alphas).index(alpha), 0] == pytest.approx(want, rel=1e-12)


def test_mirror_values_match_negated_endpoint(est_small):
    e = est_small
    n, alpha, r = 200, 0.4, 2
    p_r = (PARAMS.with_seed(replica_seed(PARAMS.seed, r))
           .with_window(-400, 400).with_horizon(400))
    env = sample_environment(p_r)
    k = alpha_index(alpha, n)
    want = -dp.min_action_point(env, n, -k, window=(-400, 400)) / n
    assert e.vals_mirror[r, list(e.alphas).index(alpha), 1] == pytest.approx(want, rel=1e-12)


def test_symmetric_curve_layout(est_small):
    a_ext, v_ext = est_small.symmetric_curve()
    assert a_ext[0] == -1.0 and a_ext[-1] == 1.0
    assert np.all(np.diff(a_ext) > 0)
    assert v_ext.shape == (30, len(a_ext))
    i = np.flatnonzero(a_ext == -0.3)[0]
    j = list(est_small.alphas).index(0.3)
    assert np.array_equal(v_ext[:, i], est_small.vals_mirror[:, j, -1])


def test_estimator_input_validation():
    with pytest.raises(EnvError):
        estimate_shape(PARAMS, [0.0, 1.5], [10, 20], 4)
    with pytest.raises(EnvError):
        estimate_shape(PARAMS, [0.0, 0.5], [20, 10], 4)
    with pytest.raises(EnvError):
        estimate_shape(PARAMS, [0.0, 0.5], [10, 20], 1)
    with pytest.raises(EnvError):
        estimate_shape(PARAMS, [0.5], [10, 20], 4, bias_target=0.5)


# -- structure reports --------------------------------------------------------

def test_corner_upper_bound(est_small):
    rep = check_corner(est_small)
    assert rep.ok
    assert rep.D == pytest.approx(0.5, rel=1e-12)
    assert rep.slope_right < 0.0


def test_nonlinearity_margins(est_small):
    rep = check_nonlinearity(est_small)
    assert rep.ok
    assert rep.bias0 > 0.0
    assert set(rep.margins) == {float(a) for a in est_small.alphas
                               if 0.0 < a < 1.0}
    # large-alpha raw margins are positive even at this scale
    m, _ = rep.margins[0.5]
    assert m > 0.0


def test_bounds_chain(est_small):
    rep = check_bounds_chain(est_small)
    assert rep.ok
    assert len(rep.table) == len(est_small.alphas)
    for alpha, lower, lam, upper, se in rep.table:
        assert lower <= lam + 3.0 * se + 1e-12
        assert lam <= upper + 3.0 * se + 1e-12


def test_flat_edge_report_well_formed(est_small):
    rep = detect_flat_edge(est_small)
    assert len(rep.residuals) == len(rep.alphas) == len(rep.tolerances)
    if not rep.inconclusive:
        assert rep.alpha0_hat in est_small.alphas
        assert np.all(np.abs(rep.residuals) <= rep.tolerances)


def test_flat_edge_needs_alpha_zero(est_small):
    lone = estimate_shape(PARAMS, [0.1, 0.2], [50, 100], 4)
    with pytest.raises(EnvError):
        detect_flat_edge(lone)


def test_slope_estimate(est_small):
    s, se = estimate_s_ci(est_small)
    assert s > 0.0
    assert se > 0.0 and math.isfinite(se)


def test_flat_edge_secants_skip_off_grid(est_small):
    out = flat_edge_secants(est_small)
    assert 4.0 in out and 5.0 in out and 10.0 in out
    assert 8.0 not in out and 20.0 not in out  # 0.125, 0.05 not on the grid
    for v in out.values():
        assert 0.0 < v < 2.0


def test_grid_diagnostics(est_small):
    assert monotone0_ok(est_small)
    assert concavity_violations(est_small) == 0
    assert evenness_max_z(est_small) < 4.0
    diag = shape_diagnostics(est_small)
    assert diag.concavity_violations == 0
    assert diag.monotone0_ok


# -- budget and ladder growth -------------------------------------------------

def test_truncation_keeps_partial_replicas():
    budget = dp.Budget(3 * 100 * 102)  # roughly three replicas at n=100
    est = estimate_shape(PARAMS, [0.0, 0.5], [50, 100], replicas=30,
                         budget=budget, allow_truncation=True)
    assert est.truncated
    assert 2 <= est.replicas < 30
    assert est.vals.shape[0] == est.replicas


def test_truncation_without_flag_guards_upfront():
    with pytest.raises(dp.BudgetExceeded):
        estimate_shape(PARAMS, [0.0, 0.5], [50, 100], replicas=30,
                       budget=dp.Budget(100))


def test_bias_target_extends_ladder():
    est = estimate_shape(PARAMS, [0.0, 0.5], [50, 100], replicas=8,
                         bias_target=0.18)
    assert est.n_values[0] == 50
    assert est.n_values[-1] > 100
    assert 1.0 - est.lam(0.0) < 0.18
