import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankuq.errors import DegeneratePair, NegativeVariance, TooManyFailedReplicates
from rankuq.estimation import fit
from rankuq.model import Dataset, build_constraints, build_design_vector
from rankuq.simlab import Scenario, generate, uniform_pairs
from rankuq.uncertainty import (
    CovarianceEstimate,
    PairSet,
    bootstrap_covariance,
    critical_value,
    difference_cis,
    empirical_quantile,
    replicate_covariance,
    resolve_pair,
    standard_error,
)

from conftest import random_params


def binomial_data(wins: int, n: int) -> Dataset:
    y = np.r_[np.ones(wins), np.zeros(n - wins)]
    return Dataset(np.zeros(n, int), np.ones(n, int), np.zeros((n, 0)), y, ["a", "b"])


def random_psd(rng, p, rank=None):
    A = rng.normal(size=(p, rank or p))
    return A @ A.T


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(7)
    truth = random_params(rng, 4, 1, 0.5)
    sc = Scenario(truth, uniform_pairs(4), {"kind": "uniform", "low": -1.0, "high": 1.0}, 1500, seed=11)
    data = generate(sc)
    res = fit(data)
    return data, res, bootstrap_covariance(data, B=200, seed=3, base=res)


# bootstrap

def test_replicate_covariance_identical_rows_is_zero():
    rows = np.tile([0.3, -0.3], (20, 1))
    np.testing.assert_array_equal(replicate_covariance(rows), np.zeros((2, 2)))


def test_replicate_covariance_matches_numpy(rng):
    rows = rng.normal(size=(30, 5))
    np.testing.assert_allclose(replicate_covariance(rows), np.cov(rows, rowvar=False), atol=1e-14)


def test_bootstrap_binomial_variance():
    # Var(logit p_hat) ~ 1 / (L p (1 - p)) = 1/75
    data = binomial_data(300, 400)
    cov = bootstrap_covariance(data, B=500, seed=1)
    a = np.array([-1.0, 1.0])
    var = a @ cov.sigma @ a
    assert var == pytest.approx(1 / (400 * 0.75 * 0.25), rel=0.30)
    assert cov.replicates == 500 and cov.failed == 0


def test_bootstrap_variance_scales_inversely_with_L(fitted):
    data, res, cov = fitted
    doubled = Dataset(np.r_[data.left, data.left], np.r_[data.right, data.right],
                      np.r_[data.X, data.X], np.r_[data.y, data.y], data.model_names)
    cov2 = bootstrap_covariance(doubled, B=200, seed=3)
    diag, diag2 = np.diag(cov.sigma), np.diag(cov2.sigma)
    assert np.median(diag2 / diag) == pytest.approx(0.5, rel=0.35)


def test_bootstrap_covariance_invariants(fitted):
    data, res, cov = fitted
    S = cov.sigma
    assert np.abs(S - S.T).max() <= 1e-10
    assert np.linalg.eigvalsh(S).min() >= -1e-8
    C = build_constraints(data.M, data.d).C
    assert np.abs(C @ S).max() <= 1e-10


def test_bootstrap_is_deterministic(fitted):
    data, res, cov = fitted
    again = bootstrap_covariance(data, B=200, seed=3, base=res)
    np.testing.assert_array_equal(again.sigma, cov.sigma)


def test_bootstrap_parallel_matches_serial(fitted, monkeypatch):
    data, res, _ = fitted
    serial = bootstrap_covariance(data, B=20, seed=5, base=res)
    monkeypatch.setenv("RANKUQ_THREADS", "2")
    parallel = bootstrap_covariance(data, B=20, seed=5, base=res)
    np.testing.assert_array_equal(parallel.sigma, serial.sigma)


def test_bootstrap_fails_when_resamples_disconnect():
    # two records per edge of a chain: many resamples drop an edge entirely
    data = Dataset([0, 0, 1, 1, 2, 2], [1, 1, 2, 2, 3, 3], np.zeros((6, 0)), [1, 0, 1, 0, 1, 0],
                   list("abcd"))
    with pytest.raises(TooManyFailedReplicates):
        bootstrap_covariance(data, B=50, seed=0)


def test_bootstrap_rejects_small_B():
    with pytest.raises(ValueError):
        bootstrap_covariance(binomial_data(3, 5), B=1)


# standard errors

def test_standard_error_examples():
    assert standard_error(np.eye(2), 0, 1, []) == pytest.approx(math.sqrt(2))
    assert standard_error(np.zeros((2, 2)), 0, 1, []) == 0.0


def test_standard_error_matches_triple_loop(rng):
    for _ in range(10):
        M, d = int(rng.integers(2, 5)), int(rng.integers(0, 3))
        p = M + M * d
        S = random_psd(rng, p)
        x = rng.normal(size=d)
        i, j = rng.choice(M, 2, replace=False)
        a = build_design_vector(i, j, x, M, d)
        q = 0.0
        for r in range(p):
            for c in range(p):
                q += a[r] * S[r, c] * a[c]
        assert standard_error(S, i, j, x) == pytest.approx(math.sqrt(q), abs=1e-12)


def test_standard_error_negative_variance():
    with pytest.raises(NegativeVariance):
        standard_error(-np.eye(2), 0, 1, [])


# critical values

def test_critical_value_single_pair_symm_and_lower():
    S = np.eye(2)
    ps = PairSet([(0, 1)], [])
    assert critical_value(S, ps, 0.05, "symm", 200_000, 0) == pytest.approx(1.95996, abs=0.02)
    assert critical_value(S, ps, 0.05, "lower", 200_000, 0) == pytest.approx(1.64485, abs=0.02)
    assert critical_value(S, ps, 0.05, "upper", 200_000, 0) == pytest.approx(1.64485, abs=0.02)


def test_critical_value_perfectly_correlated_pairs():
    # with d=0 and models 1, 2 sharing a variance component, (0,1) and (0,2) are identical
    S = np.zeros((3, 3))
    S[0, 0] = 1.0
    one = critical_value(S, PairSet([(0, 1)], []), 0.05, "symm", 200_000, 1)
    two = critical_value(S, PairSet([(0, 1), (0, 2)], []), 0.05, "symm", 200_000, 1)
    assert two == pytest.approx(one, abs=0.02)


def test_critical_value_independent_pairs_bonferroni_range():
    # two independent standardized coordinates: quantile of max|Z| solves (2 Phi(c) - 1)^2 = 0.95
    S = np.diag([1.0, 1.0, 0.0, 0.0])
    ps = PairSet([(2, 0), (3, 1)], [])
    c = critical_value(S, ps, 0.05, "symm", 200_000, 2)
    assert c == pytest.approx(2.2365, abs=0.02)


def test_critical_value_rejects_degenerate_pairs():
    with pytest.raises(DegeneratePair):
        critical_value(np.zeros((2, 2)), PairSet([(0, 1)], []), 0.05)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
def test_critical_value_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError):
        critical_value(np.eye(2), PairSet([(0, 1)], []), alpha)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a1=st.floats(0.01, 0.5), a2=st.floats(0.01, 0.5))
def test_critical_value_monotone_in_alpha(seed, a1, a2):
    rng = np.random.default_rng(seed)
    S = random_psd(rng, 8)  # M=4, d=1
    ps = PairSet.all_pairs(4, [rng.normal()])
    lo, hi = sorted([a1, a2])
    for kind in ("lower", "upper", "symm"):
        assert critical_value(S, ps, lo, kind, 4000, seed) >= critical_value(S, ps, hi, kind, 4000, seed)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), data=st.data())
def test_critical_value_monotone_in_pair_set(seed, data):
    rng = np.random.default_rng(seed)
    M = 4
    S = random_psd(rng, M + M * 2)
    x = rng.normal(size=2)
    full = [(i, j) for i in range(M) for j in range(M) if i != j]
    sub = data.draw(st.lists(st.sampled_from(full), min_size=1, unique=True))
    extra = data.draw(st.lists(st.sampled_from(full), unique=True))
    big = sub + [p for p in extra if p not in sub]
    for kind in ("lower", "upper", "symm"):
        small = critical_value(S, PairSet(sub, x), 0.05, kind, 4000, seed)
        # equal up to BLAS summation order when the extra pairs add nothing
        assert critical_value(S, PairSet(big, x), 0.05, kind, 4000, seed) >= small * (1 - 1e-12)


def test_empirical_quantile_order_statistic():
    s = np.arange(1.0, 101.0)
    assert empirical_quantile(s, 0.95) == 95.0
    assert empirical_quantile(s, 0.951) == 96.0
    assert empirical_quantile(s, 0.0) == 1.0


# intervals

def test_difference_cis_shapes_and_containment(fitted):
    data, res, cov = fitted
    ps = PairSet.all_pairs(4, [0.3])
    symm = difference_cis(res, cov, ps, 0.05, "symm", 20_000, 9)
    assert np.all(symm.lo <= symm.estimates) and np.all(symm.estimates <= symm.hi)
    np.testing.assert_allclose((symm.lo + symm.hi) / 2, symm.estimates, atol=1e-12)
    lower = difference_cis(res, cov, ps, 0.05, "lower", 20_000, 9)
    assert np.all(np.isinf(lower.hi)) and np.all(lower.lo <= lower.estimates)
    upper = difference_cis(res, cov, ps, 0.05, "upper", 20_000, 9)
    assert np.all(np.isinf(upper.lo)) and np.all(upper.estimates <= upper.hi)


def test_difference_cis_antisymmetric_under_reversal(fitted):
    _, res, cov = fitted
    ps = PairSet.all_pairs(4, [-0.7])
    ci = difference_cis(res, cov, ps, 0.05, "symm", 20_000, 4)
    for i, j in ps.pairs:
        lo, hi = ci.interval(i, j)
        rlo, rhi = ci.interval(j, i)
        assert lo == pytest.approx(-rhi, abs=1e-12) and hi == pytest.approx(-rlo, abs=1e-12)


def test_equiv_is_intersection_of_one_sided_sets(fitted):
    _, res, cov = fitted
    ps = PairSet.all_pairs(4, [0.5])
    eq = difference_cis(res, cov, ps, 0.1, "equiv", 20_000, 2)
    lower = difference_cis(res, cov, ps, 0.05, "lower", 20_000, 2)
    upper = difference_cis(res, cov, ps, 0.05, "upper", 20_000, 2)
    np.testing.assert_array_equal(eq.lo, np.maximum(lower.lo, upper.lo))
    np.testing.assert_array_equal(eq.hi, np.minimum(lower.hi, upper.hi))


def test_zero_covariance_gives_point_intervals(fitted):
    _, res, _ = fitted
    ci = difference_cis(res, np.zeros((8, 8)), PairSet.all_pairs(4, [1.0]), 0.05, "symm", 1000, 0)
    np.testing.assert_array_equal(ci.lo, ci.estimates)
    np.testing.assert_array_equal(ci.hi, ci.estimates)


def test_difference_cis_deterministic(fitted):
    _, res, cov = fitted
    ps = PairSet.all_pairs(4, [0.1])
    a = difference_cis(res, cov, ps, 0.05, "symm", 10_000, 8)
    b = difference_cis(res, cov, ps, 0.05, "symm", 10_000, 8)
    np.testing.assert_array_equal(a.lo, b.lo)
    assert a.critical_values == b.critical_values
    assert a.to_dict() == b.to_dict()


def test_difference_cis_to_dict_encodes_infinities(fitted):
    _, res, cov = fitted
    ci = difference_cis(res, cov, PairSet([(0, 1)], [0.0]), 0.05, "lower", 5000, 0)
    assert ci.to_dict()["intervals"][0]["hi"] == "inf"


def test_covariance_estimate_is_immutable():
    cov = CovarianceEstimate(np.eye(2), 10, 0)
    with pytest.raises(ValueError):
        cov.sigma[0, 0] = 2.0


def test_pair_set_validation():
    with pytest.raises(ValueError):
        PairSet([(0, 0)], [])
    with pytest.raises(ValueError):
        PairSet([(0, 1), (0, 1)], [])
    with pytest.raises(IndexError):
        PairSet([(0, 5)], []).design(3)


# resolution

@pytest.mark.parametrize("lo,hi,expected", [
    (0.2, 1.0, "above"), (-1.0, -0.1, "below"), (-0.1, 0.3, "unresolved"),
    (0.0, 1.0, "unresolved"), (-np.inf, -0.5, "below"), (0.1, np.inf, "above"),
])
def test_resolve_pair(lo, hi, expected):
    assert resolve_pair(lo, hi) == expected


def test_resolve_pair_rejects_empty_interval():
    with pytest.raises(ValueError):
        resolve_pair(1.0, 0.0)
