"""Synthetic high-dimensional regression data with and without breaks.

Covariance structures, the normalized sparse coefficient vector, single
and epidemic change patterns, and independent / AR(1) / MA(1) dynamics
for both covariates and noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

from .data import Dataset
from .errors import DomainError, NumericError

SIGMA_KINDS = ("toeplitz", "cs", "identity")
DEPENDENCE = ("independent", "ar", "ma")
PATTERNS = ("none", "single", "epidemic")

TOEPLITZ_RHO = 0.6
CS_RHO = 0.3
AR_PHI = 0.3
MA_THETA = 0.4


def build_sigma(kind: str, p: int) -> np.ndarray:
    """Population covariance of the covariates.

    ``toeplitz``: ``0.6**|i-j|``; ``cs``: 1 on the diagonal, 0.3 off it;
    ``identity``: ``I_p``.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    kind = kind.lower()
    if kind == "toeplitz":
        return toeplitz(TOEPLITZ_RHO ** np.arange(p))
    if kind == "cs":
        return np.full((p, p), CS_RHO) + (1.0 - CS_RHO) * np.eye(p)
    if kind == "identity":
        return np.eye(p)
    raise DomainError(f"unknown sigma kind {kind!r}; expected one of {SIGMA_KINDS}")


def build_beta(s: int, p: int, sigma: np.ndarray) -> np.ndarray:
    """Coefficients ``i/s`` on the first ``s`` coordinates, rescaled so that
    ``beta' Sigma beta = 9``."""
    if not 1 <= s <= p:
        raise DomainError(f"need 1 <= s <= p, got s={s}, p={p}")
    b = np.zeros(p)
    b[:s] = np.arange(1, s + 1) / s
    q = float(b @ sigma @ b)
    if not q > 0:
        raise NumericError("beta' Sigma beta is not positive")
    return 3.0 * b / np.sqrt(q)


@dataclass(frozen=True)
class ChangePattern:
    kind: str = "none"
    frac: float = 0.5
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in PATTERNS:
            raise DomainError(f"unknown change pattern {self.kind!r}")
        if not 0 < self.frac < 1:
            raise DomainError("change fraction must lie in (0, 1)")
        if self.kappa < 0:
            raise DomainError("kappa must be >= 0")

    @classmethod
    def from_obj(cls, obj) -> "ChangePattern":
        if obj is None:
            return cls()
        if isinstance(obj, str):
            return cls(kind=obj)
        if isinstance(obj, ChangePattern):
            return obj
        obj = dict(obj)
        if "kappa2" in obj:
            if "kappa" in obj:
                raise DomainError("give either kappa or kappa2, not both")
            k2 = float(obj.pop("kappa2"))
            if k2 < 0:
                raise DomainError("kappa2 must be >= 0")
            obj["kappa"] = float(np.sqrt(k2))
        return cls(**obj)


@dataclass(frozen=True)
class ScenarioSpec:
    n: int
    p: int
    s: int
    sigma_kind: str = "toeplitz"
    dependence: str = "independent"
    change_pattern: ChangePattern = field(default_factory=ChangePattern)
    sigma_eps: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "change_pattern", ChangePattern.from_obj(self.change_pattern))
        object.__setattr__(self, "sigma_kind", self.sigma_kind.lower())
        object.__setattr__(self, "dependence", self.dependence.lower())
        if self.n < 2 or self.p < 1:
            raise DomainError("need n >= 2 and p >= 1")
        if not 1 <= self.s <= self.p:
            raise DomainError(f"need 1 <= s <= p, got s={self.s}, p={self.p}")
        if self.sigma_kind not in SIGMA_KINDS:
            raise DomainError(f"unknown sigma kind {self.sigma_kind!r}")
        if self.dependence not in DEPENDENCE:
            raise DomainError(f"unknown dependence {self.dependence!r}")
        if not self.sigma_eps > 0:
            raise DomainError("sigma_eps must be positive")

    @property
    def kappa(self) -> float:
        return self.change_pattern.kappa

    def with_seed(self, seed: int) -> "ScenarioSpec":
        d = self.to_dict()
        d["seed"] = int(seed)
        return ScenarioSpec.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["change_pattern"] = ChangePattern.from_obj(d.get("change_pattern"))
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def sigma(self) -> np.ndarray:
        return build_sigma(self.sigma_kind, self.p)

    def changepoints(self) -> list[int]:
        """Break locations ``floor(n * fraction)`` (empty when kappa is 0)."""
        cp = self.change_pattern
        if cp.kind == "none" or cp.kappa == 0:
            return []
        if cp.kind == "single":
            return [int(np.floor(self.n * cp.frac))]
        return [self.n // 3, (2 * self.n) // 3]

    def beta_sequence(self) -> np.ndarray:
        """True coefficient for every observation, shape ``(n, p)``."""
        base = build_beta(self.s, self.p, self.sigma())
        betas = np.tile(base, (self.n, 1))
        cp = self.change_pattern
        if cp.kind == "single" and cp.kappa > 0:
            eta = self.changepoints()[0]
            betas[eta:] *= 1.0 + cp.kappa
        elif cp.kind == "epidemic" and cp.kappa > 0:
            a, b = self.changepoints()
            betas[a:b] *= 1.0 + cp.kappa
        return betas


@dataclass(frozen=True)
class GeneratedSample:
    data: Dataset
    true_beta: np.ndarray  # (n, p), row i is beta*_{i+1}
    true_changepoints: list
    spec: ScenarioSpec


def _dynamics(e: np.ndarray, dependence: str) -> np.ndarray:
    """Apply the time-series recursion to innovations ``e`` (n+1 rows).

    Row 0 is the pre-sample innovation: the stationary start for AR and the
    lagged innovation for MA.  Marginal covariance is preserved.
    """
    if dependence == "independent":
        return e[1:]
    if dependence == "ar":
        out = np.empty_like(e)
        out[0] = e[0]
        scale = np.sqrt(1.0 - AR_PHI ** 2)
        for i in range(1, e.shape[0]):
            out[i] = AR_PHI * out[i - 1] + scale * e[i]
        return out[1:]
    return (e[1:] + MA_THETA * e[:-1]) / np.sqrt(1.0 + MA_THETA ** 2)


def generate(spec: ScenarioSpec) -> GeneratedSample:
    """Draw one dataset.

    Covariate innovations are ``N(0, Sigma)`` through the Cholesky factor of
    ``Sigma``, so ``Cov(x_i) = Sigma`` under every dependence mode.  The random
    stream does not depend on the change pattern: two specs that differ
    only in ``change_pattern`` share ``x`` and ``eps`` exactly.
    """
    rng = np.random.default_rng(spec.seed)
    chol = np.linalg.cholesky(spec.sigma())
    z = rng.standard_normal((spec.n + 1, spec.p))
    e_eps = rng.standard_normal(spec.n + 1)
    x = _dynamics(z @ chol.T, spec.dependence)
    eps = spec.sigma_eps * _dynamics(e_eps, spec.dependence)
    betas = spec.beta_sequence()
    y = np.einsum("ij,ij->i", x, betas) + eps
    return GeneratedSample(Dataset(y=y, x=x), betas, spec.changepoints(), spec)
