"""Dynamic program against exhaustive enumeration, plus structural identities.

Sign flips and +- products are exact in binary floating point and the
minimum commutes with adding a constant, so the DP and the brute-force
enumeration must agree bit for bit, not merely within a tolerance.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import lppmin.dp as dp
from lppmin.env import EnvError, EnvParams, Environment, sample_environment
from lppmin.paths import LazyPath, action


def _env(seed=1, kappa=0.0, window=(-20, 20), horizon=40, c=1.0):
    p = EnvParams(kappa=kappa, c=c, family="edge_power", seed=seed,
                  window=window, horizon=horizon)
    return sample_environment(p)


# -- exact agreement with enumeration ----------------------------------------

@pytest.mark.parametrize("kappa", [0.0, 1.0, -0.5])
def test_dp_equals_brute_all_endpoints(kappa):
    for seed in range(8):
        env = _env(seed=seed, kappa=kappa, window=(-12, 12), horizon=12)
        n = 9
        sites, minima = dp.brute_force_oracle(env, n)
        for x, target in zip(sites, minima):
            assert dp.min_action_point(env, n, int(x)) == target
        free_val, free_k = dp.min_action_free(env, n)
        assert free_val == minima.min()
        assert free_k in sites[minima == minima.min()]


def test_brute_refuses_large_n():
    env = _env(window=(-16, 16), horizon=20)
    with pytest.raises(EnvError):
        dp.brute_force_oracle(env, dp.BRUTE_FORCE_LIMIT + 1)


def test_window_clipping_matches_restricted_enumeration():
    # paths confined to a narrow corridor: enumerate with rejection
    env = _env(seed=3, window=(-3, 3), horizon=8)
    n = 8
    got = dp.min_action_point(env, n, 1, window=(-3, 3))
    best = np.inf
    for code in range(3 ** n):
        pos = 0
        val = 0.0
        ok = True
        c = code
        for t in range(1, n + 1):
            pos += (c % 3) - 1
            c //= 3
            if not -3 <= pos <= 3:
                ok = False
                break
            val += float(env.B(t)) * float(env.F(pos))
        if ok and pos == 1 and val < best:
            best = val
    assert got == best


# -- structural identities ----------------------------------------------------

def test_bellman_split_identity():
    # splitting re-associates the additions, so exact only up to rounding
    env = _env(seed=5, window=(-30, 30), horizon=24)
    t1, t2, x = 10, 24, 4
    total = dp.min_action_point(env, t2, x)
    best = np.inf
    for y in range(-t1, t1 + 1):
        if abs(x - y) > t2 - t1:
            continue
        first = dp.min_action_point(env, t1, y)
        second = dp.two_point_action(env, (t1, y), (t2, x))
        best = min(best, first + second)
    assert total == pytest.approx(best, rel=1e-12, abs=1e-12)


def test_extension_by_one_step():
    env = _env(seed=6, window=(-25, 25), horizon=30)
    c = env.params.c
    for n in (5, 12, 20):
        for k in (-3, 0, 2):
            a_n = dp.min_action_point(env, n, k)
            a_n1 = dp.min_action_point(env, n + 1, k)
            assert a_n1 <= a_n + c + 1e-12


def test_joint_sign_field_flip_invariance():
    env = _env(seed=7, window=(-15, 15), horizon=18)
    flipped = Environment(env.params, -env.f_values, -env.b_values)
    for k in range(-10, 11):
        assert (dp.min_action_point(env, 14, k)
                == dp.min_action_point(flipped, 14, k))


def test_field_reflection_mirrors_endpoint():
    env = _env(seed=8, window=(-15, 15), horizon=18)
    mirrored = Environment(env.params, env.f_values[::-1].copy(), env.b_values)
    for k in range(-12, 13):
        assert (dp.min_action_point(env, 14, k)
                == dp.min_action_point(mirrored, 14, -k))


def test_dp_upper_bounded_by_any_path():
    env = _env(seed=9, window=(-20, 20), horizon=24)
    rng = np.random.default_rng(2)
    for _ in range(40):
        steps = rng.integers(-1, 2, size=18)
        pos = np.concatenate([[0], np.cumsum(steps)])
        path = LazyPath(0, pos)
        val = dp.min_action_point(env, 18, int(pos[-1]))
        assert val <= action(env, path) + 1e-12


# -- tables -------------------------------------------------------------------

def test_table_interior_bellman_relation():
    env = _env(seed=10, window=(-10, 10), horizon=10)
    tab = dp.build_table(env, 10)
    for t in range(1, 11):
        for x in range(-9, 10):
            prev = min(tab.value(t - 1, x - 1), tab.value(t - 1, x),
                       tab.value(t - 1, x + 1))
            if np.isinf(prev):
                assert np.isinf(tab.value(t, x))
            else:
                got = tab.value(t, x)
                want = prev + env.B(t) * env.F(x)
                assert got == want


def test_table_save_load_round_trip(tmp_path):
    env = _env(seed=11, window=(-9, 9), horizon=9)
    tab = dp.build_table(env, 9)
    fn = tmp_path / "tab.bin"
    tab.save(fn)
    back = dp.ActionTable.load(fn)
    assert back.duration == tab.duration
    assert np.array_equal(back.last_row(), tab.last_row())
    raw = fn.read_bytes()
    assert raw[:8] == dp.TABLE_MAGIC
    with pytest.raises(FileNotFoundError):
        dp.ActionTable.load(tmp_path / "nope.bin")
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"WRONGMAG" + raw[8:])
    with pytest.raises(EnvError):
        dp.ActionTable.load(bad)


def test_noncanonical_table_save_refused(tmp_path):
    env = _env(seed=11, window=(-12, 12), horizon=12)
    shifted = dp.build_table(env, 4, origin=(2, 1))
    with pytest.raises(EnvError):
        shifted.save(tmp_path / "x.bin")


def test_point_rows_equals_individual_calls():
    env = _env(seed=12, window=(-16, 16), horizon=16)
    rows = dp.point_rows(env, [4, 9, 16])
    for n in (4, 9, 16):
        lo = rows[n]
        for k in range(-n, n + 1):
            assert lo[k + 16] == dp.min_action_point(env, n, k)


# -- backtracking -------------------------------------------------------------

def test_optimal_path_value_matches_path_action():
    for seed in range(6):
        env = _env(seed=20 + seed, window=(-30, 30), horizon=40)
        res = dp.optimal_path(env, 40)
        acc = 0.0
        for t in range(1, 41):
            acc += float(env.B(t)) * float(env.F(res.path.at(t)))
        assert acc == res.value
        assert res.endpoint == res.path.at(40)
        assert res.value == dp.min_action_free(env, 40)[0]


def test_optimal_path_fixed_endpoint():
    env = _env(seed=26, window=(-30, 30), horizon=30)
    res = dp.optimal_path(env, 30, endpoint=5)
    assert res.path.at(30) == 5
    assert res.value == dp.min_action_point(env, 30, 5)


def test_block_size_does_not_change_path():
    env = _env(seed=27, window=(-30, 30), horizon=50)
    a = dp.optimal_path(env, 50, block_rows=3)
    b = dp.optimal_path(env, 50, block_rows=17)
    c = dp.optimal_path(env, 50)
    assert np.array_equal(a.path.positions, b.path.positions)
    assert np.array_equal(a.path.positions, c.path.positions)


def test_backtrack_matches_optimal_path():
    env = _env(seed=28, window=(-14, 14), horizon=14)
    tab = dp.build_table(env, 14)
    res_tab = dp.backtrack(tab)
    res = dp.optimal_path(env, 14)
    assert res_tab.value == res.value
    assert np.array_equal(res_tab.path.positions, res.path.positions)


def test_zero_field_prefers_staying_put():
    p = EnvParams(kappa=0.0, c=1.0, family="uniform", seed=1,
                  window=(-10, 10), horizon=12)
    env = sample_environment(p)
    flat = Environment(p, np.zeros_like(env.f_values), env.b_values)
    res = dp.optimal_path(flat, 12)
    assert np.array_equal(res.path.positions, np.zeros(13, dtype=np.int64))
    assert res.endpoint == 0
    assert not res.unique


def test_unique_flag_on_generic_environment():
    env = _env(seed=29, window=(-20, 20), horizon=24)
    res = dp.optimal_path(env, 24)
    assert res.unique  # continuous field, ties have probability zero


# -- signed strip solver ------------------------------------------------------

def test_min_action_signs_matches_point_dp():
    env = _env(seed=30, window=(-8, 8), horizon=10)
    signs = env.b_values[:10]
    for k in (-3, 0, 4):
        got = dp.min_action_signs(env.f_values, env.lo, signs, 0, k)
        assert got == dp.min_action_point(env, 10, k)


# -- budget -------------------------------------------------------------------

def test_budget_charges_and_trips():
    env = _env(seed=31, window=(-20, 20), horizon=20)
    b = dp.Budget(10 ** 9)
    dp.min_action_point(env, 10, 0, budget=b)
    assert b.remaining < 10 ** 9
    # a single roll is one unit of work: it completes and flips `exceeded`,
    # and only an upfront guard for further work raises
    tiny = dp.Budget(50)
    dp.min_action_point(env, 20, 0, budget=tiny)
    assert tiny.exceeded and tiny.remaining == 0
    with pytest.raises(dp.BudgetExceeded):
        tiny.guard(100, "more work")


def test_unreachable_endpoint_rejected():
    env = _env(seed=32)
    with pytest.raises(EnvError):
        dp.min_action_point(env, 4, 9)
    with pytest.raises(EnvError):
        dp.two_point_action(env, (5, 0), (3, 0))


# -- randomized cross-check ---------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 8),
       kappa=st.sampled_from([0.0, 1.0, -0.5]))
def test_dp_equals_brute_property(seed, n, kappa):
    env = _env(seed=seed, kappa=kappa, window=(-8, 8), horizon=8)
    sites, minima = dp.brute_force_oracle(env, n)
    lo = max(-8, -n)  # rows span the cone-clipped window
    row = dp.point_rows(env, [n])[n]
    got = row[sites - lo]
    assert np.array_equal(got, minima)
