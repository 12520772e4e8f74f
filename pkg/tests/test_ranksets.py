import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankuq.estimation import FitConfig, fit, point_ranks
from rankuq.model import StackedParams
from rankuq.ranksets import (
    RankSet,
    extrapolate,
    limiting_difference_cis,
    limiting_rank_sets,
    limiting_ranks,
    marginal_rank_set,
    marginal_rank_sets,
    rank_curve,
    rank_sets,
    rank_sets_from_intervals,
    simultaneous_rank_sets,
)
from rankuq.simlab import Scenario, exact_rankset_oracle, generate, uniform_pairs
from rankuq.uncertainty import CovarianceEstimate, PairSet, bootstrap_covariance, difference_cis

from conftest import random_params


def antisymmetric_intervals(rng, M):
    out = {}
    for i in range(M):
        for j in range(i + 1, M):
            a, b = sorted(rng.normal(scale=1.0, size=2))
            if rng.random() < 0.3:
                a, b = -abs(a), abs(b)  # straddles zero
            out[(i, j)] = (a, b)
            out[(j, i)] = (-b, -a)
    return out


def fitted_scenario(seed, M=3, d=1, L=800, B=60, scale=0.8):
    rng = np.random.default_rng(seed)
    truth = random_params(rng, M, d, scale)
    sc = Scenario(truth, uniform_pairs(M), {"kind": "uniform", "low": -1.0, "high": 1.0}, L, seed=seed)
    data = generate(sc)
    res = fit(data)
    return res, bootstrap_covariance(data, B=B, seed=seed, base=res)


def fake_fit(params: StackedParams):
    # rank-set functions only read params, M and d from the fit
    class _Fit:
        pass

    f = _Fit()
    f.params, f.M, f.d = params, params.M, params.d
    return f


@pytest.fixture(scope="module")
def small_fit():
    return fitted_scenario(5, M=4, d=2, L=1500, B=100)


# counting rules

def test_full_dominance_gives_rank_one():
    iv = {(0, k): (-2.0, -1.0) for k in (1, 2, 3)}
    iv.update({(k, 0): (1.0, 2.0) for k in (1, 2, 3)})
    rs = rank_sets_from_intervals(iv, 4, models=[0])[0]
    assert (rs.lo, rs.hi) == (1, 1)


def test_all_unresolved_gives_full_range():
    iv = {(i, j): (-1.0, 1.0) for i in range(4) for j in range(4) if i != j}
    assert all((r.lo, r.hi) == (1, 4) for r in rank_sets_from_intervals(iv, 4))


def test_direct_formula_example():
    # model 0 of 5: beaten by model 1 (theta_1 - theta_0 > 0), beats models 2 and 3
    iv = {(0, 1): (0.5, 1.0), (0, 2): (-1.0, -0.5), (0, 3): (-2.0, -0.1), (0, 4): (-0.3, 0.3)}
    rs = rank_sets_from_intervals(iv, 5, models=[0])[0]
    assert (rs.n_dominating, rs.n_dominated) == (1, 2)
    assert (rs.lo, rs.hi) == (2, 3)


def test_rank_set_validation():
    with pytest.raises(ValueError):
        RankSet(0, 0, 1, 0, 0, 0.95, "marginal")
    with pytest.raises(ValueError):
        RankSet(0, 3, 2, 0, 0, 0.95, "marginal")


def test_counting_matches_exact_oracle():
    rng = np.random.default_rng(101)
    for _ in range(1000):
        M = int(rng.integers(2, 7))
        iv = antisymmetric_intervals(rng, M)
        ours = [(r.lo, r.hi) for r in rank_sets_from_intervals(iv, M)]
        assert ours == exact_rankset_oracle(iv, M)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(2, 6))
def test_width_accounting(seed, M):
    iv = antisymmetric_intervals(np.random.default_rng(seed), M)
    for r in rank_sets_from_intervals(iv, M):
        assert 1 <= r.lo <= r.hi <= M
        assert r.width == M - r.n_dominated - r.n_dominating


# fitted rank sets

def test_point_rank_in_symmetric_sets():
    for s in range(100):
        res, cov = fitted_scenario(1000 + s, L=300, B=30)
        x = np.random.default_rng(s).uniform(-1, 1, size=1)
        pr = point_ranks(res, x)
        marg = marginal_rank_sets(res, cov, x, 0.05, 2000, s)
        sim = simultaneous_rank_sets(res, cov, x, 0.05, 2000, s)
        for j in range(res.M):
            assert pr[j] in marg[j]
            assert pr[j] in sim[j]


def test_marginal_nested_in_simultaneous(small_fit):
    res, cov = small_fit
    rng = np.random.default_rng(3)
    for s in range(30):
        x = rng.uniform(-2, 2, size=2)
        marg = marginal_rank_sets(res, cov, x, 0.05, 4000, s)
        sim = simultaneous_rank_sets(res, cov, x, 0.05, 4000, s)
        for m, q in zip(marg, sim):
            assert q.lo <= m.lo and m.hi <= q.hi


def test_sets_widen_as_alpha_shrinks(small_fit):
    res, cov = small_fit
    x = [0.2, -0.4]
    for scope in ("marginal", "simultaneous"):
        wide = rank_sets(res, cov, x, 0.01, scope, 4000, 1)
        narrow = rank_sets(res, cov, x, 0.2, scope, 4000, 1)
        for w, n in zip(wide, narrow):
            assert w.lo <= n.lo and n.hi <= w.hi


def test_zero_covariance_gives_point_rank_singletons():
    params = StackedParams([0.5, 0.0, -0.5], [[0.1], [0.0], [-0.1]])
    sets = simultaneous_rank_sets(fake_fit(params), np.zeros((6, 6)), [1.0], 0.05, 1000, 0)
    assert [(r.lo, r.hi) for r in sets] == [(1, 1), (2, 2), (3, 3)]


def test_marginal_set_uses_anchored_pairs(small_fit):
    res, cov = small_fit
    x = [0.1, 0.1]
    one = marginal_rank_set(res, cov, x, 2, 0.05, 4000, 6)
    ci = difference_cis(res, cov, PairSet.anchored(2, 4, x), 0.05, "symm", 4000, 6)
    assert one == rank_sets_from_intervals(ci.as_dict(), 4, [2], ci.level, "marginal")[0]
    with pytest.raises(IndexError):
        marginal_rank_set(res, cov, x, 4)


def test_rank_sets_scope_validation(small_fit):
    with pytest.raises(ValueError):
        rank_sets(*small_fit, [0.0, 0.0], scope="joint")


# rank curves

def test_rank_curve_constant_and_singleton_paths(small_fit):
    res, cov = small_fit
    x = [0.3, 0.3]
    curve = rank_curve(res, cov, [x, x, x], draws=2000, seed=2)
    assert curve[0] == curve[1] == curve[2]
    single = rank_curve(res, cov, [x], draws=2000, seed=2)[0]
    assert single.rank_sets == tuple(simultaneous_rank_sets(res, cov, x, 0.05, 2000, 2))
    assert single.point_ranks == tuple(point_ranks(res, x))
    with pytest.raises(ValueError):
        rank_curve(res, cov, [])


def test_rank_curve_swaps_at_analytic_crossing():
    # two models whose preference flips with the covariate
    truth = StackedParams([0.4, -0.4], [[-0.5], [0.5]])
    sc = Scenario(truth, uniform_pairs(2), {"kind": "uniform", "low": -2.0, "high": 2.0}, 3000, seed=4)
    res = fit(generate(sc))
    b0, b = res.params.intercepts, res.params.slopes[:, 0]
    cross = -(b0[0] - b0[1]) / (b[0] - b[1])
    cov = CovarianceEstimate(np.zeros((4, 4)), 2, 0)
    eps = 1e-6
    before, after = rank_curve(res, cov, [[cross - eps], [cross + eps]], draws=100)
    assert sorted(before.point_ranks) == sorted(after.point_ranks) == [1, 2]
    assert before.point_ranks == tuple(reversed(after.point_ranks))


# extrapolation

def test_limiting_ranks_examples():
    params = StackedParams([0.0, 0.0, 0.0], [[0.3], [0.1], [-0.2]])
    lim = limiting_ranks(fake_fit(params.normalized()), [1.0])
    assert lim.ranks == (1, 2, 3) and lim.distinct
    flat = limiting_ranks(fake_fit(params), [0.0])
    assert flat.ranks == (1, 1, 1)
    assert flat.tied_pairs == ((0, 1), (0, 2), (1, 2))


def test_limiting_ranks_needs_covariates():
    with pytest.raises(ValueError):
        limiting_ranks(fake_fit(StackedParams([0.1, -0.1], np.zeros((2, 0)))), [])


def test_limiting_intervals_zero_slope_covariance():
    params = StackedParams([0.2, -0.2], [[0.3], [-0.3]])
    S = np.zeros((4, 4))
    S[:2, :2] = [[1.0, -1.0], [-1.0, 1.0]]  # intercept-only uncertainty
    ci = limiting_difference_cis(fake_fit(params), S, [1.0], 0.05, 1000, 0)
    np.testing.assert_allclose(ci.lo, ci.estimates)
    np.testing.assert_allclose(ci.hi, ci.estimates)
    assert ci.interval(0, 1)[0] == pytest.approx(-0.6)


def test_limiting_single_pair_half_width():
    params = StackedParams([0.0, 0.0], [[0.3], [-0.3]])
    S = np.eye(4)
    ci = limiting_difference_cis(fake_fit(params), S, [2.0], 0.05, 200_000, 0, pairs=[(0, 1)])
    se = ci.se[0]
    assert se == pytest.approx(2.0 * np.sqrt(2))
    assert (ci.hi[0] - ci.lo[0]) / 2 == pytest.approx(1.95996 * se, abs=0.02 * se)


def test_limiting_sets_collapse_when_unresolved():
    params = StackedParams([0.0, 0.0, 0.0], [[0.01], [0.0], [-0.01]])
    sets = limiting_rank_sets(fake_fit(params), np.eye(6), [1.0], 0.05, 4000, 0)
    assert all((r.lo, r.hi) == (1, 3) for r in sets)


def test_limiting_sets_resolve_with_large_slope_gaps():
    params = StackedParams([0.0, 0.0, 0.0], [[5.0], [0.0], [-5.0]])
    S = 1e-4 * np.eye(6)
    fitted = fake_fit(params)
    for scope in ("simultaneous", "marginal"):
        sets = limiting_rank_sets(fitted, S, [1.0], 0.05, 4000, 0, scope)
        assert [(r.lo, r.hi) for r in sets] == [(1, 1), (2, 2), (3, 3)]
    res = extrapolate(fitted, S, [1.0], draws=4000)
    assert res.limiting.ranks == (1, 2, 3)
    assert all(res.distinctness.values())


def test_extrapolation_agrees_with_large_lambda():
    lam = 1e8
    checked = 0
    for s in range(40):
        res, cov = fitted_scenario(2000 + s, M=int(3 + s % 3), d=int(1 + s % 2), L=600, B=40)
        v = np.random.default_rng(s).normal(size=res.d)
        lim = limiting_ranks(res, v)
        if not lim.distinct:
            continue
        checked += 1
        assert tuple(point_ranks(res, lam * v)) == lim.ranks
        ci_inf = limiting_difference_cis(res, cov, v, 0.05, 20_000, s)
        ci_lam = difference_cis(res, cov, PairSet.all_pairs(res.M, lam * v), 0.05, "symm", 20_000, s)
        half_inf = (ci_inf.hi - ci_inf.lo) / 2
        half_lam = (ci_lam.hi - ci_lam.lo) / (2 * lam)
        np.testing.assert_allclose(half_lam, half_inf, rtol=1e-4)
        np.testing.assert_allclose((ci_lam.hi + ci_lam.lo) / (2 * lam), ci_inf.estimates,
                                   atol=1e-4 * half_inf.max())
        if checked == 20:
            break
    assert checked == 20
