"""Interval Lasso by cyclic coordinate descent.

The objective on an interval ``I`` of size ``m`` is

    (1/m) * sum_{i in I} (y_i - x_i' b)^2 + (lam / sqrt(m)) * ||b||_1

Note the ``1/m`` loss scaling (not ``1/(2m)``) and the ``sqrt(m)`` penalty
scaling; ``lam`` is therefore dimensionless, of order ``sqrt(log p)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import cd_gram
from .data import Dataset, Interval
from .errors import DegeneratePathError, DomainError, NumericError


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    tol: float = 1e-8
    max_iter: int = 10000
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise DomainError(f"lambda must be finite and >= 0, got {self.lam}")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class IntervalLassoFit:
    beta_hat: np.ndarray
    interval: Interval
    lam: float
    iterations: int
    converged: bool
    objective: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_hat)


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``; works on scalars and arrays."""
    if np.any(np.asarray(gamma) < 0):
        raise DomainError("threshold must be non-negative")
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def lasso_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    m = y.shape[0]
    r = y - x @ beta
    return float(r @ r / m + lam / np.sqrt(m) * np.abs(beta).sum())


def kkt_residual(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Largest violation of the Lasso optimality conditions at ``beta``.

    With ``g = -(2/m) X'(y - X beta)`` the conditions are
    ``g_j = -(lam/sqrt m) sign(beta_j)`` on the support and
    ``|g_j| <= lam/sqrt m`` off it.
    """
    m = y.shape[0]
    g = -2.0 / m * (x.T @ (y - x @ beta))
    pen = lam / np.sqrt(m)
    nz = beta != 0
    on = np.abs(g[nz] + pen * np.sign(beta[nz]))
    off = np.maximum(np.abs(g[~nz]) - pen, 0.0)
    return float(max(on.max(initial=0.0), off.max(initial=0.0)))


def _fit_gram(G, c, yty, m, lam, beta0, tol, max_iter, check_descent=False):
    beta = np.zeros(G.shape[0]) if beta0 is None else np.array(beta0, dtype=np.float64)
    sweeps, conv, ok = cd_gram(G, c, float(yty), float(m), float(lam), beta, tol, max_iter,
                               check_descent)
    if check_descent and not ok:
        raise NumericError("objective increased during a coordinate-descent sweep")
    if not np.all(np.isfinite(beta)):
        raise NumericError("coordinate descent produced non-finite coefficients")
    return beta, int(sweeps), bool(conv)


def fit_interval_lasso(data: Dataset, interval: Interval, config: LassoConfig,
                       check_descent: bool = False) -> IntervalLassoFit:
    """Solve the interval Lasso on observations ``(lo, hi]``.

    Coordinates are updated cyclically in order ``0..p-1``; the fit is
    converged when the largest coordinate change over a full sweep drops
    below ``config.tol`` and the KKT residual is within ``config.tol``.
    Hitting ``max_iter`` returns the current iterate with ``converged=False``.
    """
    x, y = data.subset(interval)
    if config.warm_start is not None and np.shape(config.warm_start) != (data.p,):
        raise DomainError(f"warm_start must have length p={data.p}")
    G = x.T @ x
    c = x.T @ y
    beta, sweeps, conv = _fit_gram(G, c, y @ y, interval.size, config.lam,
                                   config.warm_start, config.tol, config.max_iter,
                                   check_descent)
    obj = lasso_objective(x, y, beta, config.lam)
    if not np.isfinite(obj):
        raise NumericError("non-finite Lasso objective")
    beta.setflags(write=False)
    return IntervalLassoFit(beta, interval, float(config.lam), sweeps, conv, obj)


def lambda_max(data: Dataset, interval: Interval) -> float:
    """Smallest ``lam`` for which the zero vector solves the interval Lasso."""
    x, y = data.subset(interval)
    return float(2.0 / np.sqrt(interval.size) * np.abs(x.T @ y).max())


def _lambda_grid(lmax: float, n_lambda: int, min_ratio: float) -> np.ndarray:
    return lmax * np.logspace(0.0, np.log10(min_ratio), n_lambda)


def lambda_path(data: Dataset, interval: Interval, n_lambda: int = 50,
                min_ratio: float = 1e-3) -> np.ndarray:
    """Descending geometric grid from ``lambda_max`` to ``min_ratio * lambda_max``."""
    if n_lambda < 2:
        raise DomainError("n_lambda must be >= 2")
    lmax = lambda_max(data, interval)
    if lmax <= 0:
        raise DegeneratePathError("X'y vanishes on the interval; lambda_max = 0")
    return _lambda_grid(lmax, n_lambda, min_ratio)


class CVResult(NamedTuple):
    lambda_star: float
    cv_curve: np.ndarray  # columns: lambda, mean held-out squared error


def fold_assignment(m: int, folds: int, seed: int, blocked: bool = False) -> np.ndarray:
    """Fold label for each of ``m`` positions; fold sizes differ by at most one."""
    labels = np.arange(m) * folds // m
    if blocked:
        return labels
    rng = np.random.default_rng(seed)
    return rng.permutation(labels)


def cross_validate_lambda(data: Dataset, interval: Interval, folds: int = 10,
                          n_lambda: int = 50, seed: int = 0, blocked_folds: bool = False,
                          tol: float = 1e-8, max_iter: int = 10000,
                          max_support: Optional[int] = None) -> CVResult:
    """K-fold cross-validation of ``lam`` over :func:`lambda_path`.

    Each fold's training fit runs down the path with warm starts and is
    scored by held-out mean squared prediction error.  Ties go to the
    larger ``lam``.

    With ``max_support`` set, the path stops before the first ``lam`` whose
    fit on the whole interval has more than ``max_support`` nonzeros, so a
    saturated fit can never be selected.  ``cv_curve`` then holds only the
    retained part of the path.
    """
    if folds < 2:
        raise DomainError("folds must be >= 2")
    if interval.size < folds:
        raise DomainError(f"interval of size {interval.size} is smaller than folds={folds}")
    grid = lambda_path(data, interval, n_lambda)
    x, y = data.subset(interval)
    labels = fold_assignment(interval.size, folds, seed, blocked_folds)

    G_all = x.T @ x
    c_all = x.T @ y
    yy_all = float(y @ y)
    if max_support is not None:
        beta = np.zeros(data.p)
        for k, lam in enumerate(grid):
            beta, _, _ = _fit_gram(G_all, c_all, yy_all, interval.size, lam, beta, tol, max_iter)
            if np.count_nonzero(beta) > max_support:
                grid = grid[:max(k, 1)]
                break
    sse = np.zeros(len(grid))
    for f in range(folds):
        hold = labels == f
        xh, yh = x[hold], y[hold]
        G = G_all - xh.T @ xh
        c = c_all - xh.T @ yh
        yy = yy_all - float(yh @ yh)
        m = interval.size - int(hold.sum())
        beta = np.zeros(data.p)
        for k, lam in enumerate(grid):
            beta, _, _ = _fit_gram(G, c, yy, m, lam, beta, tol, max_iter)
            r = yh - xh @ beta
            sse[k] += r @ r
    mse = sse / interval.size
    k_star = int(np.argmin(mse))
    return CVResult(float(grid[k_star]), np.column_stack([grid, mse]))
