"""Critical values of the trimmed sup of the standardized Brownian bridge,
nuisance estimation from the trimmed end segments, and the full test."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, Interval
from .errors import DegenerateVarianceError, DomainError
from .lasso import LassoConfig, cross_validate_lambda, fit_interval_lasso
from .scan import ScanConfig, ScanResult, scan

DEFAULT_ALPHAS = (0.10, 0.05, 0.01)
CHUNK_REPS = 1000

# sup over [0.15, 0.85] of the standardized bridge, alpha = 0.05, from
# simulate_critical_values(0.15, grid_points=4000, reps=1_000_000, seed=20240601)
PINNED_G05_ZETA15 = 2.6786945172490855
PINNED_REFERENCE = {"zeta": 0.15, "alpha": 0.05, "grid_points": 4000,
                    "reps": 1_000_000, "seed": 20240601}


def _alpha_key(a: float) -> str:
    return f"{a:.2f}" if round(a, 2) == a else repr(float(a))


@dataclass
class CriticalValueTable:
    zeta: float
    grid_points: int
    reps: int
    seed: int
    quantiles: dict
    digest: str
    draws: np.ndarray = field(repr=False, default=None)

    def critical_value(self, alpha: float) -> float:
        key = _alpha_key(alpha)
        if key in self.quantiles:
            return self.quantiles[key]
        if self.draws is None:
            raise DomainError(f"alpha={alpha} not tabulated and draws unavailable")
        return upper_quantile(self.draws, alpha)

    def p_value(self, stat: float) -> float:
        """Share of simulated sups at or above ``stat``."""
        if self.draws is None:
            raise DomainError("p-values need the stored draws")
        below = np.searchsorted(self.draws, stat, side="left")
        return float((self.draws.size - below) / self.draws.size)

    def to_json_dict(self) -> dict:
        return {"zeta": self.zeta, "grid_points": self.grid_points, "reps": self.reps,
                "seed": self.seed, "quantiles": self.quantiles, "digest": self.digest}

    def save(self, path) -> None:
        """Write the JSON table and the sorted draws to ``<path>.npy`` beside it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True))
        if self.draws is not None:
            np.save(_draws_path(path), self.draws)

    @classmethod
    def load(cls, path) -> "CriticalValueTable":
        path = Path(path)
        d = json.loads(path.read_text())
        draws = None
        dp = _draws_path(path)
        if dp.exists():
            draws = np.load(dp)
            if _digest(draws) != d["digest"]:
                raise DomainError(f"{dp}: draws do not match the table digest")
        return cls(zeta=float(d["zeta"]), grid_points=int(d["grid_points"]),
                   reps=int(d["reps"]), seed=int(d["seed"]),
                   quantiles={k: float(v) for k, v in d["quantiles"].items()},
                   digest=d["digest"], draws=draws)


def _draws_path(path: Path) -> Path:
    return path.with_name(path.name + ".npy") if path.suffix != ".json" else path.with_suffix(".npy")


def _digest(draws: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(draws, dtype="<f8").tobytes()).hexdigest()


def upper_quantile(sorted_draws: np.ndarray, alpha: float) -> float:
    """``1 - alpha`` empirical quantile, taking the higher order statistic."""
    return float(np.quantile(sorted_draws, 1.0 - alpha, method="higher"))


def bridge_window(grid_points: int, zeta: float) -> tuple[int, int]:
    """First and last grid index ``k`` with ``k / grid_points`` in ``[zeta, 1 - zeta]``."""
    lo = int(np.ceil(zeta * grid_points - 1e-9))
    hi = int(np.floor((1.0 - zeta) * grid_points + 1e-9))
    return max(lo, 1), min(hi, grid_points - 1)


def _sup_chunk(zeta, grid_points, reps, seed, chunk_index):
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(chunk_index,))))
    lo, hi = bridge_window(grid_points, zeta)
    k = np.arange(lo, hi + 1)
    r = k / grid_points
    scale = 1.0 / np.sqrt(r * (1.0 - r))
    inc = rng.standard_normal((reps, grid_points))
    inc *= np.sqrt(1.0 / grid_points)
    b = np.cumsum(inc, axis=1)
    bridge = b[:, lo - 1:hi] - r * b[:, -1:]
    return (bridge * scale).max(axis=1)


def simulate_sup_draws(zeta: float, grid_points: int = 2000, reps: int = 100_000,
                       seed: int = 0, workers: int = 1) -> np.ndarray:
    """Unsorted draws of ``sup_{r in [zeta, 1-zeta]} G(r)`` on a discrete grid.

    Replicates are produced in fixed chunks of ``CHUNK_REPS``, each from its
    own Philox stream keyed by ``(seed, chunk index)``, so the result does
    not depend on ``workers``.
    """
    if not 0 < zeta < 0.5:
        raise DomainError(f"zeta must lie in (0, 0.5), got {zeta}")
    if grid_points < 100:
        raise DomainError("grid_points must be >= 100")
    if reps < 1:
        raise DomainError("reps must be >= 1")
    sizes = [min(CHUNK_REPS, reps - s) for s in range(0, reps, CHUNK_REPS)]
    jobs = [(zeta, grid_points, m, seed, i) for i, m in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda a: _sup_chunk(*a), jobs))
    else:
        parts = [_sup_chunk(*a) for a in jobs]
    return np.concatenate(parts)


def simulate_critical_values(zeta: float = 0.15, alphas: Sequence[float] = DEFAULT_ALPHAS,
                             grid_points: int = 2000, reps: int = 100_000, seed: int = 0,
                             workers: int = 1) -> CriticalValueTable:
    """Monte Carlo table of upper quantiles of the trimmed bridge supremum.

    Brownian motion is built from cumulative sums of ``N(0, 1/grid_points)``
    increments.  The discrete grid slightly understates the continuous sup.
    """
    if reps < 1000:
        raise DomainError("reps must be >= 1000")
    alphas = sorted(set(DEFAULT_ALPHAS) | {float(a) for a in alphas}, reverse=True)
    for a in alphas:
        if not 0 < a < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {a}")
    draws = np.sort(simulate_sup_draws(zeta, grid_points, reps, seed, workers))
    quantiles = {_alpha_key(a): upper_quantile(draws, a) for a in alphas}
    return CriticalValueTable(zeta=float(zeta), grid_points=int(grid_points), reps=int(reps),
                              seed=int(seed), quantiles=quantiles, digest=_digest(draws),
                              draws=draws)


def cache_dir() -> Path:
    env = os.environ.get("QFCUSUM_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "qfcusum"


def cached_table(zeta: float = 0.15, grid_points: int = 2000, reps: int = 100_000,
                 seed: int = 0, alphas: Sequence[float] = DEFAULT_ALPHAS,
                 directory=None) -> CriticalValueTable:
    """Load a table keyed by ``(zeta, grid_points, reps, seed)``, simulating on a miss."""
    directory = Path(directory) if directory is not None else cache_dir()
    path = directory / f"cv_z{zeta!r}_g{grid_points}_r{reps}_s{seed}.json"
    if path.exists():
        try:
            return CriticalValueTable.load(path)
        except (OSError, ValueError, KeyError):
            pass
    table = simulate_critical_values(zeta, alphas, grid_points, reps, seed)
    try:
        table.save(path)
    except OSError:
        pass
    return table


@dataclass(frozen=True)
class NuisanceEstimates:
    lam: float
    s_hat: float
    sigma_eps_hat: float
    sigma_xi: float
    zeta: float
    lam_pre: float = float("nan")
    lam_post: float = float("nan")

    def __post_init__(self):
        if not self.sigma_eps_hat > 0:
            raise DegenerateVarianceError(
                f"noise level estimate must be positive, got {self.sigma_eps_hat}")
        if self.s_hat < 0 or self.sigma_xi < 0:
            raise DomainError("s_hat and sigma_xi must be non-negative")


def sigma_xi_rule(s_hat: float, p: int, n: int) -> float:
    """``s log(p) / sqrt(n) * log(log(n))`` with natural logarithms."""
    return float(s_hat * np.log(p) / np.sqrt(n) * np.log(np.log(n)))


def _segment_estimate(data: Dataset, seg: Interval, folds, seed, n_lambda, blocked):
    # keep at least one residual degree of freedom on the segment
    cv = cross_validate_lambda(data, seg, folds=folds, n_lambda=n_lambda, seed=seed,
                               blocked_folds=blocked, max_support=seg.size - 1)
    # follow the same warm-started path the cap was checked on; a cold start
    # can land on a different, saturated solution when the segment is short
    beta = None
    for lam in cv.cv_curve[:, 0]:
        if lam < cv.lambda_star:
            break
        beta = fit_interval_lasso(data, seg, LassoConfig(float(lam), warm_start=beta)).beta_hat
    s_hat = int(np.count_nonzero(beta))
    dof = seg.size - s_hat
    if dof <= 0:
        raise DegenerateVarianceError(
            f"segment {seg} has {seg.size} observations but {s_hat} selected "
            "coefficients; use a larger zeta")
    x, y = data.subset(seg)
    r = y - x @ beta
    return cv.lambda_star, s_hat, float(np.sqrt(r @ r / dof))


def estimate_nuisance(data: Dataset, zeta: float = 0.15, folds: int = 10, seed: int = 0,
                      n_lambda: int = 50, blocked_folds: bool = False) -> NuisanceEstimates:
    """Tuning parameter, sparsity and noise level from the two trimmed end
    segments ``(0, floor(zeta n)]`` and ``(floor((1-zeta) n), n]``.

    Each segment gets its own cross-validated ``lam``; the sparsity is the
    support size of the segment fit and the noise level its residual
    standard error with ``|segment| - s`` degrees of freedom.  The two
    segments are averaged; fractional sparsity is kept.  The CV path on a
    segment stops before its fit would use up every residual degree of
    freedom, which matters when the segment is shorter than ``p``.
    """
    if not 0 < zeta < 0.5:
        raise DomainError(f"zeta must lie in (0, 0.5), got {zeta}")
    n = data.n
    m_pre = int(np.floor(zeta * n))
    lo_post = int(np.floor((1.0 - zeta) * n))
    if m_pre < folds or n - lo_post < folds:
        raise DomainError(f"end segments of size {m_pre} are smaller than folds={folds}")
    seeds = np.random.SeedSequence(seed).generate_state(2)
    lam_a, s_a, sig_a = _segment_estimate(data, Interval(0, m_pre), folds, int(seeds[0]),
                                          n_lambda, blocked_folds)
    lam_b, s_b, sig_b = _segment_estimate(data, Interval(lo_post, n), folds, int(seeds[1]),
                                          n_lambda, blocked_folds)
    s_hat = 0.5 * (s_a + s_b)
    return NuisanceEstimates(lam=0.5 * (lam_a + lam_b), s_hat=s_hat,
                             sigma_eps_hat=0.5 * (sig_a + sig_b),
                             sigma_xi=sigma_xi_rule(s_hat, data.p, n), zeta=float(zeta),
                             lam_pre=lam_a, lam_post=lam_b)


@dataclass
class TestOutcome:
    max_stat: float
    critical_value: float
    alpha: float
    reject: bool
    p_value: float
    argmax_t: int
    nuisance: NuisanceEstimates
    seed: int = 0
    table_digest: str = ""
    scan: Optional[ScanResult] = field(default=None, repr=False)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {"max_stat": self.max_stat, "critical_value": self.critical_value,
                "alpha": self.alpha, "reject": self.reject, "p_value": self.p_value,
                "argmax_t": self.argmax_t, "nuisance": asdict(self.nuisance),
                "seed": self.seed, "table_digest": self.table_digest}


def derive_seeds(seed: int) -> tuple[int, int]:
    """Independent seeds for cross-validation folds and the ``xi`` draw."""
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def run_test(data: Dataset, zeta: float = 0.15, alpha: float = 0.05,
             table: Optional[CriticalValueTable] = None, seed: int = 0,
             overrides: Optional[NuisanceEstimates] = None, folds: int = 10,
             stride: int = 1, n_lambda: int = 50) -> TestOutcome:
    """Estimate nuisances (unless given), scan, and compare the maximum to
    the critical value at level ``alpha``."""
    if table is None:
        table = cached_table(zeta)
    if abs(table.zeta - zeta) > 1e-12:
        raise DomainError(f"table is for zeta={table.zeta}, test uses zeta={zeta}")
    cv_seed, xi_seed = derive_seeds(seed)
    nu = overrides if overrides is not None else estimate_nuisance(
        data, zeta, folds=folds, seed=cv_seed, n_lambda=n_lambda)
    if not nu.sigma_xi > 0:
        raise DegenerateVarianceError(
            "randomization scale is zero (no selected coefficients); the test is undefined")
    res = scan(data, ScanConfig(lam=nu.lam, sigma_eps=nu.sigma_eps_hat, sigma_xi=nu.sigma_xi,
                                zeta=zeta, stride=stride, xi_seed=xi_seed))
    crit = table.critical_value(alpha)
    pval = table.p_value(res.max_stat) if table.draws is not None else float("nan")
    return TestOutcome(max_stat=res.max_stat, critical_value=crit, alpha=alpha,
                       reject=bool(res.max_stat > crit), p_value=pval, argmax_t=res.argmax_t,
                       nuisance=nu, seed=seed, table_digest=table.digest, scan=res)
