import numpy as np
import pytest

from qfcusum import (Dataset, Interval, LassoConfig, cross_validate_lambda, fit_interval_lasso,
                     kkt_residual, lambda_max, lambda_path, soft_threshold)
from qfcusum.errors import DegeneratePathError, DomainError
from qfcusum.lasso import fold_assignment, lasso_objective

from .conftest import random_dataset
from .oracles import normal_equations, objective, prox_grad_lasso


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(0.0, 0.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    with pytest.raises(DomainError):
        soft_threshold(1.0, -1.0)


def test_config_validation():
    with pytest.raises(DomainError):
        LassoConfig(-1.0)
    with pytest.raises(DomainError):
        LassoConfig(1.0, tol=0)
    with pytest.raises(DomainError):
        LassoConfig(1.0, max_iter=0)


def test_lambda_zero_matches_least_squares(rng):
    x = rng.standard_normal((50, 2))
    y = x @ np.array([1.5, -0.7]) + rng.standard_normal(50)
    d = Dataset(y=y, x=x)
    fit = fit_interval_lasso(d, d.full(), LassoConfig(0.0, tol=1e-12))
    np.testing.assert_allclose(fit.beta_hat, normal_equations(x, y), atol=1e-6)


def test_above_lambda_max_is_exactly_zero(rng):
    d = random_dataset(rng, 30, 6)
    lm = lambda_max(d, d.full())
    for lam in (lm, 1.5 * lm):
        fit = fit_interval_lasso(d, d.full(), LassoConfig(lam))
        assert np.all(fit.beta_hat == 0.0)
    fit = fit_interval_lasso(d, d.full(), LassoConfig(0.9 * lm))
    assert np.any(fit.beta_hat != 0.0)


def test_matches_proximal_gradient_oracle(rng):
    d = random_dataset(rng, 30, 10, s=3)
    lam = np.sqrt(np.log(10))
    fit = fit_interval_lasso(d, d.full(), LassoConfig(lam, tol=1e-12))
    ref = prox_grad_lasso(d.x, d.y, lam)
    o_cd, o_ref = fit.objective, objective(d.x, d.y, ref, lam)
    assert abs(o_cd - o_ref) <= 1e-8 * abs(o_ref)
    assert o_cd <= objective(d.x, d.y, np.zeros(10), lam)


def test_fit_on_subinterval_uses_only_its_rows(rng):
    d = random_dataset(rng, 40, 4)
    fit = fit_interval_lasso(d, Interval(10, 30), LassoConfig(0.5))
    sub = Dataset(y=d.y[10:30], x=d.x[10:30])
    ref = fit_interval_lasso(sub, sub.full(), LassoConfig(0.5))
    np.testing.assert_allclose(fit.beta_hat, ref.beta_hat, atol=1e-12)
    assert fit.interval == Interval(10, 30)


def test_kkt_and_descent(rng):
    d = random_dataset(rng, 60, 25, s=4)
    lam = 0.2 * lambda_max(d, d.full())
    fit = fit_interval_lasso(d, d.full(), LassoConfig(lam), check_descent=True)
    assert fit.converged
    assert kkt_residual(d.x, d.y, fit.beta_hat, lam) <= 10 * 1e-8


def test_warm_start_agrees_with_cold(rng):
    d = random_dataset(rng, 60, 30, s=4)
    lm = lambda_max(d, d.full())
    cold = fit_interval_lasso(d, d.full(), LassoConfig(0.1 * lm))
    warm0 = fit_interval_lasso(d, d.full(), LassoConfig(0.3 * lm)).beta_hat
    warm = fit_interval_lasso(d, d.full(), LassoConfig(0.1 * lm, warm_start=warm0))
    assert abs(cold.objective - warm.objective) <= 1e-6
    with pytest.raises(DomainError):
        fit_interval_lasso(d, d.full(), LassoConfig(0.1, warm_start=np.zeros(3)))


def test_max_iter_reports_non_convergence(rng):
    d = random_dataset(rng, 40, 20, s=5)
    fit = fit_interval_lasso(d, d.full(), LassoConfig(0.01, max_iter=1))
    assert not fit.converged and fit.iterations == 1


def test_lambda_path_shape(rng):
    d = random_dataset(rng, 30, 5)
    lm = lambda_max(d, d.full())
    g2 = lambda_path(d, d.full(), 2)
    np.testing.assert_allclose(g2, [lm, 1e-3 * lm])
    g3 = lambda_path(d, d.full(), 3)
    np.testing.assert_allclose(g3[1], lm * 10 ** -1.5)
    fit = fit_interval_lasso(d, d.full(), LassoConfig(g3[0]))
    g = -2.0 / d.n * d.x.T @ d.y
    assert np.all(fit.beta_hat == 0) and np.abs(g).max() <= g3[0] / np.sqrt(d.n) + 1e-12
    with pytest.raises(DomainError):
        lambda_path(d, d.full(), 1)


def test_lambda_path_degenerate():
    d = Dataset(y=np.zeros(10), x=np.ones((10, 2)))
    with pytest.raises(DegeneratePathError):
        lambda_path(d, d.full())


def test_fold_assignment_balanced():
    lab = fold_assignment(57, 10, seed=3)
    counts = np.bincount(lab, minlength=10)
    assert counts.max() - counts.min() <= 1 and counts.sum() == 57
    np.testing.assert_array_equal(fold_assignment(57, 10, seed=3), lab)
    blocked = fold_assignment(20, 4, seed=0, blocked=True)
    np.testing.assert_array_equal(blocked, np.repeat(np.arange(4), 5))


def test_cross_validation_deterministic(rng):
    d = random_dataset(rng, 60, 15, s=3)
    a = cross_validate_lambda(d, d.full(), seed=7)
    b = cross_validate_lambda(d, d.full(), seed=7)
    assert a.lambda_star == b.lambda_star
    assert a.cv_curve.shape == (50, 2)
    assert a.lambda_star in a.cv_curve[:, 0]


def test_cross_validation_noiseless_support(rng):
    x = rng.standard_normal((100, 20))
    beta = np.zeros(20)
    beta[[2, 7, 11]] = [2.0, -1.5, 1.0]
    d = Dataset(y=x @ beta, x=x)
    cv = cross_validate_lambda(d, d.full(), seed=0)
    fit = fit_interval_lasso(d, d.full(), LassoConfig(cv.lambda_star))
    assert set(fit.support) == {2, 7, 11}


def test_cross_validation_support_cap(rng):
    # fewer observations than covariates: the uncapped path reaches an interpolating fit
    d = random_dataset(rng, 30, 100)
    free = cross_validate_lambda(d, d.full(), seed=3)
    capped = cross_validate_lambda(d, d.full(), seed=3, max_support=29)
    full_fit = fit_interval_lasso(d, d.full(), LassoConfig(float(free.cv_curve[-1, 0])))
    assert np.count_nonzero(full_fit.beta_hat) > 29
    fit = fit_interval_lasso(d, d.full(), LassoConfig(capped.lambda_star))
    assert np.count_nonzero(fit.beta_hat) <= 29
    k = len(capped.cv_curve)
    assert 1 <= k < len(free.cv_curve)
    np.testing.assert_allclose(capped.cv_curve, free.cv_curve[:k])


def test_cross_validation_errors(rng):
    d = random_dataset(rng, 30, 5)
    with pytest.raises(DomainError):
        cross_validate_lambda(d, Interval(0, 5), folds=10)
    with pytest.raises(DomainError):
        cross_validate_lambda(d, d.full(), folds=1)


def test_objective_function():
    x = np.array([[1.0], [2.0]])
    y = np.array([1.0, 1.0])
    assert lasso_objective(x, y, np.array([0.5]), 2.0) == pytest.approx(
        (0.25 + 0.0) / 2 + 2.0 / np.sqrt(2) * 0.5)


def test_cone_condition_frequency():
    from qfcusum import ScenarioSpec, generate
    hits = 0
    reps = 200
    lam = 2 * np.sqrt(np.log(100))
    for r in range(reps):
        g = generate(ScenarioSpec(400, 100, 5, seed=900 + r))
        fit = fit_interval_lasso(g.data, g.data.full(), LassoConfig(lam))
        err = fit.beta_hat - g.true_beta[0]
        on, off = np.abs(err[:5]).sum(), np.abs(err[5:]).sum()
        hits += off <= 3 * on + 1e-8
    assert hits / reps >= 0.95
