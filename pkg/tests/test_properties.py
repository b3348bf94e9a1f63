import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qfcusum import (Dataset, Interval, LassoConfig, bias_corrected_qf, fit_interval_lasso,
                     goodness_of_fit, kkt_residual, lambda_max, randomized_statistic,
                     sample_covariance, soft_threshold)
from qfcusum.lasso import lasso_objective

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
SETTINGS = settings(max_examples=60, deadline=None)


@st.composite
def problems(draw, max_n=30, max_p=6):
    n = draw(st.integers(4, max_n))
    p = draw(st.integers(1, max_p))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p)) * draw(st.floats(0.1, 10))
    y = x @ rng.standard_normal(p) + rng.standard_normal(n)
    t = draw(st.integers(1, n - 1))
    return Dataset(y, x), t, rng


@SETTINGS
@given(finite, st.floats(0, 20))
def test_soft_threshold_shrinks(z, g):
    v = soft_threshold(z, g)
    assert abs(v) <= abs(z)
    assert v == 0 or np.sign(v) == np.sign(z)
    assert abs(abs(z) - abs(v)) <= g + 1e-12


@SETTINGS
@given(finite, finite, st.floats(0, 20))
def test_soft_threshold_nonexpansive(a, b, g):
    assert abs(soft_threshold(a, g) - soft_threshold(b, g)) <= abs(a - b) + 1e-12


@SETTINGS
@given(problems())
def test_qf_twice_gof(prob):
    d, t, rng = prob
    b_l, b_r = rng.standard_normal(d.p), rng.standard_normal(d.p)
    q = bias_corrected_qf(d, t, b_l, b_r)
    g = goodness_of_fit(d, t, b_l, b_r)
    assert abs(q - 2 * g) <= 1e-10 * max(abs(q), 1.0)


@SETTINGS
@given(problems())
def test_zero_xi_reduces_to_qf(prob):
    d, t, rng = prob
    b_l, b_r = rng.standard_normal(d.p), rng.standard_normal(d.p)
    assert randomized_statistic(d, t, b_l, b_r, np.zeros(d.n)) == bias_corrected_qf(d, t, b_l, b_r)


@SETTINGS
@given(problems())
def test_randomized_is_linear_in_xi(prob):
    d, t, rng = prob
    b_l, b_r = rng.standard_normal(d.p), rng.standard_normal(d.p)
    xi = rng.standard_normal(d.n)
    base = bias_corrected_qf(d, t, b_l, b_r)
    one = randomized_statistic(d, t, b_l, b_r, xi) - base
    two = randomized_statistic(d, t, b_l, b_r, 2 * xi) - base
    assert abs(two - 2 * one) <= 1e-9 * max(1.0, abs(two))


@SETTINGS
@given(problems(max_n=40, max_p=10), st.floats(0.01, 1.0))
def test_lasso_kkt_and_objective(prob, frac):
    d, _, _ = prob
    lam = frac * lambda_max(d, d.full())
    fit = fit_interval_lasso(d, d.full(), LassoConfig(lam), check_descent=True)
    assert fit.converged
    assert kkt_residual(d.x, d.y, fit.beta_hat, lam) <= 10 * 1e-8 * max(1.0, np.abs(d.x).max() ** 2)
    assert fit.objective <= lasso_objective(d.x, d.y, np.zeros(d.p), lam) + 1e-12


@SETTINGS
@given(problems())
def test_covariance_split_identity(prob):
    d, t, _ = prob
    full = sample_covariance(d, d.full()).sigma_hat
    a = sample_covariance(d, Interval(0, t)).sigma_hat
    b = sample_covariance(d, Interval(t, d.n)).sigma_hat
    lhs, rhs = d.n * full, t * a + (d.n - t) * b
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.abs(lhs).max())


@SETTINGS
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_interval_split_partition(lo, extra):
    hi = lo + extra + 2
    iv = Interval(lo, hi)
    t = lo + 1 + extra // 2
    a, b = iv.split(t)
    assert a.size + b.size == iv.size and a.hi == b.lo == t
