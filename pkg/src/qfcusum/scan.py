"""Bias-corrected quadratic form, its randomized version and the CUSUM scan.

For a split ``t`` with interval fits ``b_l`` on ``(0, t]`` and ``b_r`` on
``(t, n]`` and ``d = b_l - b_r``:

    qf(t) = (d' S_l d + d' S_r d) / 2
            + (2/t) sum_{i<=t} d'x_i r_i - (2/(n-t)) sum_{i>t} d'x_i r_i

with residuals ``r_i`` taken from the fit on the side containing ``i``.
The randomized statistic adds ``(1/t) sum xi_i r_i - (1/(n-t)) sum xi_i r_i``
and the scan statistic is ``sqrt(t(n-t)/n) / (sigma_eps sigma_xi)`` times it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ._kernels import scan_sweep
from .data import Dataset, Interval
from .errors import DomainError, NumericError, UnsupportedDiagnosticError
from .lasso import IntervalLassoFit, LassoConfig, fit_interval_lasso


@dataclass(frozen=True)
class ScanConfig:
    """Settings for one scan.

    ``sigma_xi = 0`` turns off randomization; ``t_n`` is then the
    localization statistic ``sqrt(t(n-t)/n) * qf(t) / sigma_eps``.
    """

    lam: float
    sigma_eps: float = 1.0
    sigma_xi: float = 1.0
    zeta: float = 0.15
    stride: int = 1
    xi_seed: int = 0
    tol: float = 1e-8
    max_iter: int = 10000
    warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.zeta < 0.5:
            raise DomainError(f"zeta must lie in (0, 0.5), got {self.zeta}")
        if not self.sigma_eps > 0:
            raise DomainError(f"sigma_eps must be positive, got {self.sigma_eps}")
        if not self.sigma_xi >= 0:
            raise DomainError("sigma_xi must be >= 0")
        if self.stride < 1:
            raise DomainError("stride must be >= 1")
        if not self.lam >= 0:
            raise DomainError("lambda must be >= 0")


@dataclass
class ScanResult:
    grid: np.ndarray
    s_n: np.ndarray
    t_n: np.ndarray
    qf: np.ndarray
    max_stat: float
    argmax_t: int
    xi: np.ndarray
    fits_left: np.ndarray
    fits_right: np.ndarray
    config: ScanConfig
    n: int = 0

    def localization_stat(self) -> np.ndarray:
        """Scan statistic with the randomization removed."""
        return _weights(self.grid, self.n) * self.qf / self.config.sigma_eps

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "grid": self.grid.tolist(),
            "s_n": self.s_n.tolist(),
            "t_n": self.t_n.tolist(),
            "qf": self.qf.tolist(),
            "max_stat": self.max_stat,
            "argmax_t": self.argmax_t,
            "xi_seed": self.config.xi_seed,
            "converged_left": self.fits_left.tolist(),
            "converged_right": self.fits_right.tolist(),
            "config": asdict(self.config),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "S_n", "T_n"])
            for t, s, tn in zip(self.grid, self.s_n, self.t_n):
                w.writerow([int(t), repr(float(s)), repr(float(tn))])


@dataclass(frozen=True)
class AlternativeDiagnostics:
    mu_t: float
    sigma2_t: float
    psi_l: float
    psi_r: float

    def s_n_variance(self, t: int, n: int) -> float:
        return self.psi_l / t + self.psi_r / (n - t)


def scan_grid(n: int, zeta: float, stride: int = 1) -> np.ndarray:
    lo = int(np.floor(n * zeta))
    hi = int(np.floor(n * (1.0 - zeta)))
    if lo < 1 or hi >= n or lo > hi:
        raise DomainError(f"trimming zeta={zeta} leaves no usable split for n={n}")
    return np.arange(lo, hi + 1, stride, dtype=np.int64)


def _weights(grid, n):
    g = np.asarray(grid, dtype=np.float64)
    return np.sqrt(g * (n - g) / n)


def _check_split(data: Dataset, t: int, fit_left, fit_right):
    if not 0 < t < data.n:
        raise DomainError(f"split t={t} must satisfy 0 < t < n={data.n}")
    for fit, want in ((fit_left, Interval(0, t)), (fit_right, Interval(t, data.n))):
        if isinstance(fit, IntervalLassoFit) and fit.interval != want:
            raise DomainError(f"fit is for {fit.interval}, expected {want}")


def _coef(fit) -> np.ndarray:
    return np.asarray(fit.beta_hat if isinstance(fit, IntervalLassoFit) else fit, dtype=float)


def _qf_terms(data: Dataset, t: int, b_l: np.ndarray, b_r: np.ndarray):
    x, y = data.x, data.y
    d = b_l - b_r
    xl, xr = x[:t], x[t:]
    r_l = y[:t] - xl @ b_l
    r_r = y[t:] - xr @ b_r
    a_l = xl @ d
    a_r = xr @ d
    m_l, m_r = t, data.n - t
    qf = (0.5 * (a_l @ a_l / m_l + a_r @ a_r / m_r)
          + 2.0 * (a_l @ r_l) / m_l - 2.0 * (a_r @ r_r) / m_r)
    return qf, r_l, r_r


def bias_corrected_qf(data: Dataset, t: int, fit_left, fit_right) -> float:
    """Bias-corrected estimate of ``Delta' Sigma Delta`` at split ``t``.

    ``fit_left`` / ``fit_right`` may be :class:`IntervalLassoFit` objects or
    plain coefficient vectors for ``(0, t]`` and ``(t, n]``.
    """
    _check_split(data, t, fit_left, fit_right)
    qf, _, _ = _qf_terms(data, t, _coef(fit_left), _coef(fit_right))
    return float(qf)


def goodness_of_fit(data: Dataset, t: int, fit_left, fit_right) -> float:
    """Loss in fit from pooling the two interval fits at split ``t``.

    Pooled coefficient ``(b_l + b_r)/2``; returns the per-side averaged
    increase in residual sum of squares, which is exactly half of
    :func:`bias_corrected_qf`.
    """
    _check_split(data, t, fit_left, fit_right)
    b_l, b_r = _coef(fit_left), _coef(fit_right)
    b_t = 0.5 * (b_l + b_r)
    x, y = data.x, data.y
    r_l = y[:t] - x[:t] @ b_l
    r_r = y[t:] - x[t:] @ b_r
    p_l = y[:t] - x[:t] @ b_t
    p_r = y[t:] - x[t:] @ b_t
    return float((p_l @ p_l - r_l @ r_l) / t + (p_r @ p_r - r_r @ r_r) / (data.n - t))


def randomized_statistic(data: Dataset, t: int, fit_left, fit_right, xi) -> float:
    """Randomized bias-corrected quadratic form ``S_n(t)``."""
    _check_split(data, t, fit_left, fit_right)
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (data.n,):
        raise DomainError(f"xi must have length n={data.n}, got {xi.shape}")
    qf, r_l, r_r = _qf_terms(data, t, _coef(fit_left), _coef(fit_right))
    return float(qf + ((xi[:t] @ r_l) / t - (xi[t:] @ r_r) / (data.n - t)))


def draw_xi(n: int, sigma_xi: float, seed: int) -> np.ndarray:
    """One randomization sequence ``xi_i ~ N(0, sigma_xi^2)``, shared by every split."""
    return sigma_xi * np.random.default_rng(seed).standard_normal(n)


def _finish(data, config, grid, qf, xi_part, xi, conv_l, conv_r) -> ScanResult:
    s_n = qf + xi_part
    w = _weights(grid, data.n)
    if config.sigma_xi > 0:
        t_n = w * s_n / (config.sigma_eps * config.sigma_xi)
    else:
        t_n = w * s_n / config.sigma_eps
    bad = ~np.isfinite(t_n)
    if bad.any():
        raise NumericError(f"non-finite statistic at t={int(grid[np.argmax(bad)])}")
    k = int(np.argmax(t_n))
    return ScanResult(grid=grid, s_n=s_n, t_n=t_n, qf=qf, max_stat=float(t_n[k]),
                      argmax_t=int(grid[k]), xi=xi, fits_left=conv_l, fits_right=conv_r,
                      config=config, n=data.n)


def scan(data: Dataset, config: ScanConfig, xi: Optional[np.ndarray] = None) -> ScanResult:
    """Evaluate ``S_n(t)`` and ``T_n(t)`` over the trimmed grid.

    One ``xi`` sequence is drawn from ``config.xi_seed`` (or taken from the
    ``xi`` argument) and reused at every ``t``.  Interval Grams are updated
    incrementally along the grid and each fit warm-starts from the previous
    grid point unless ``config.warm_start`` is false.
    """
    grid = scan_grid(data.n, config.zeta, config.stride)
    if xi is None:
        xi = draw_xi(data.n, config.sigma_xi, config.xi_seed)
    else:
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (data.n,):
            raise DomainError(f"xi must have length n={data.n}")
    qf, xi_part, _, _, conv_l, conv_r = scan_sweep(
        data.x, data.y, xi, grid, float(config.lam), float(config.tol),
        int(config.max_iter), bool(config.warm_start))
    return _finish(data, config, grid, qf, xi_part, xi, conv_l, conv_r)


def scan_naive(data: Dataset, config: ScanConfig, xi: Optional[np.ndarray] = None) -> ScanResult:
    """Reference scan: cold-start refit of both intervals at every split."""
    grid = scan_grid(data.n, config.zeta, config.stride)
    if xi is None:
        xi = draw_xi(data.n, config.sigma_xi, config.xi_seed)
    lcfg = LassoConfig(config.lam, tol=config.tol, max_iter=config.max_iter)
    qf = np.empty(grid.shape[0])
    xi_part = np.empty(grid.shape[0])
    conv_l = np.empty(grid.shape[0], dtype=bool)
    conv_r = np.empty(grid.shape[0], dtype=bool)
    for k, t in enumerate(grid):
        t = int(t)
        fl = fit_interval_lasso(data, Interval(0, t), lcfg)
        fr = fit_interval_lasso(data, Interval(t, data.n), lcfg)
        qf[k] = bias_corrected_qf(data, t, fl, fr)
        xi_part[k] = randomized_statistic(data, t, fl, fr, xi) - qf[k]
        conv_l[k], conv_r[k] = fl.converged, fr.converged
    return _finish(data, config, grid, qf, xi_part, xi, conv_l, conv_r)


def scan_fixed(data: Dataset, config: ScanConfig, coef_left, coef_right,
               xi: Optional[np.ndarray] = None) -> ScanResult:
    """Scan with supplied coefficients in place of the Lasso fits.

    Coefficients are either one vector of length ``p`` used at every split,
    or arrays of shape ``(len(grid), p)`` giving the pair for each grid
    point.  Used to study the statistic under oracle fits.
    """
    grid = scan_grid(data.n, config.zeta, config.stride)
    if xi is None:
        xi = draw_xi(data.n, config.sigma_xi, config.xi_seed)
    xi = np.asarray(xi, dtype=np.float64)
    coef_left = np.asarray(coef_left, dtype=float)
    coef_right = np.asarray(coef_right, dtype=float)
    n = data.n
    m_l = grid.astype(float)
    m_r = n - m_l
    if coef_left.shape == (data.p,) and coef_right.shape == (data.p,):
        # residuals and projections do not move with t: prefix sums suffice
        r_l = data.y - data.x @ coef_left
        r_r = data.y - data.x @ coef_right
        a = data.x @ (coef_left - coef_right)

        def split_sums(v):
            c = np.concatenate([[0.0], np.cumsum(v)])
            return c[grid], c[-1] - c[grid]

        aa_l, aa_r = split_sums(a * a)
        ar_l, _ = split_sums(a * r_l)
        _, ar_r = split_sums(a * r_r)
        xr_l, _ = split_sums(xi * r_l)
        _, xr_r = split_sums(xi * r_r)
        qf = 0.5 * (aa_l / m_l + aa_r / m_r) + 2.0 * ar_l / m_l - 2.0 * ar_r / m_r
        xi_part = xr_l / m_l - xr_r / m_r
    elif coef_left.shape == (grid.shape[0], data.p) == coef_right.shape:
        qf = np.empty(grid.shape[0])
        xi_part = np.empty(grid.shape[0])
        for k, t in enumerate(grid):
            t = int(t)
            q, r_l, r_r = _qf_terms(data, t, coef_left[k], coef_right[k])
            qf[k] = q
            xi_part[k] = (xi[:t] @ r_l) / t - (xi[t:] @ r_r) / (n - t)
    else:
        raise DomainError("coefficients must have shape (p,) or (len(grid), p)")
    ones = np.ones(grid.shape[0], dtype=bool)
    return _finish(data, config, grid, qf, xi_part, xi, ones, ones)


def localize(data: Dataset, config: ScanConfig) -> int:
    """Change-point estimate: argmax of the unrandomized scan statistic.

    Smallest ``t`` wins ties.  This does not test for a change; gate it on
    a rejection from the randomized scan.
    """
    res = scan(data, config, xi=np.zeros(data.n))
    stat = res.localization_stat()
    return int(res.grid[int(np.argmax(stat))])


def alternative_diagnostics(scenario, t: int, sigma_xi: float) -> AlternativeDiagnostics:
    """Mean and variance components of ``S_n(t)`` under a known scenario.

    Closed form for i.i.d. Gaussian covariates only, where
    ``E[(d'(x x' - Sigma) d)^2] = 2 (d' Sigma d)^2``.
    """
    if scenario.dependence != "independent":
        raise UnsupportedDiagnosticError(
            "closed-form diagnostics need i.i.d. Gaussian covariates and noise")
    n = scenario.n
    if not 0 < t < n:
        raise DomainError(f"split t={t} must satisfy 0 < t < n={n}")
    sigma = scenario.sigma()
    # centre on the first row so that equal rows give exactly zero deviations
    betas = scenario.beta_sequence()
    betas = betas - betas[0]
    mean_l = betas[:t].mean(axis=0)
    mean_r = betas[t:].mean(axis=0)
    d = mean_l - mean_r
    mu = float(d @ sigma @ d)
    se2 = scenario.sigma_eps ** 2
    sx2 = sigma_xi ** 2
    sigma2 = se2 * sx2 + 4.0 * se2 * mu + 0.25 * 2.0 * mu ** 2
    dev_l = betas[:t] - mean_l
    dev_r = betas[t:] - mean_r
    spread_l = float(np.einsum("ij,jk,ik->", dev_l, sigma, dev_l)) / t
    spread_r = float(np.einsum("ij,jk,ik->", dev_r, sigma, dev_r)) / (n - t)
    return AlternativeDiagnostics(mu, sigma2, sigma2 + sx2 * spread_l, sigma2 + sx2 * spread_r)
