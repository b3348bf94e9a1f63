"""Dataset container, index intervals, sample covariance and CSV I/O.

Intervals follow the half-open ``(lo, hi]`` convention on 1-based
observation indices: ``Interval(lo, hi)`` holds observations
``lo+1, ..., hi``, which are rows ``lo .. hi-1`` of the stored arrays,
i.e. exactly the Python slice ``[lo:hi]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InsufficientDataError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (length n) and covariates ``x`` (n x p).

    Covariates are used as given; no centering or scaling is applied.
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim != 1 or x.ndim != 2:
            raise DomainError("y must be a vector and x a matrix")
        if x.shape[0] != y.shape[0]:
            raise DomainError(
                f"y has {y.shape[0]} entries but x has {x.shape[0]} rows"
            )
        if y.shape[0] < 2:
            raise InsufficientDataError(f"need n >= 2 observations, got {y.shape[0]}")
        if x.shape[1] < 1:
            raise DomainError("x must have at least one column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DomainError("dataset contains NaN or Inf")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def full(self) -> "Interval":
        return Interval(0, self.n)

    def subset(self, interval: "Interval") -> tuple[np.ndarray, np.ndarray]:
        interval.check(self.n)
        sl = interval.slice
        return self.x[sl], self.y[sl]


@dataclass(frozen=True)
class Interval:
    """Index interval ``(lo, hi]`` with ``0 <= lo < hi``."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise DomainError(f"empty or invalid interval ({self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo

    def __len__(self) -> int:
        return self.size

    @property
    def slice(self) -> slice:
        return slice(self.lo, self.hi)

    def check(self, n: int) -> None:
        if self.hi > n:
            raise DomainError(f"interval ({self.lo}, {self.hi}] exceeds n={n}")

    def split(self, t: int) -> tuple["Interval", "Interval"]:
        """Split into ``(lo, t]`` and ``(t, hi]``."""
        return Interval(self.lo, t), Interval(t, self.hi)


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_hat: np.ndarray
    interval: Interval


def sample_covariance(data: Dataset, interval: Interval) -> CovarianceEstimate:
    """Uncentered second-moment matrix ``(1/|I|) sum_{i in I} x_i x_i^T``."""
    x, _ = data.subset(interval)
    s = x.T @ x / interval.size
    # symmetrize exactly; BLAS may differ in the last bit across triangles
    s = 0.5 * (s + s.T)
    return CovarianceEstimate(sigma_hat=s, interval=interval)


def load_csv(path, has_header: bool = False) -> Dataset:
    """Read a comma-separated file whose first column is the response.

    Errors carry 1-based line numbers.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open file ({exc.strerror})", path=path) from exc

    rows = []
    width = None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError(
                        "need at least 2 columns (y and one covariate)",
                        path=path, line=lineno,
                    )
            elif len(row) != width:
                raise ParseError(
                    f"expected {width} columns, found {len(row)}",
                    path=path, line=lineno,
                )
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"non-numeric value {cell!r}", path=path, line=lineno, column=col
                    ) from None
            rows.append(vals)

    if len(rows) < 2:
        raise InsufficientDataError(f"{path}: need at least 2 data rows, got {len(rows)}")
    arr = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ParseError(
            "non-finite value", path=path,
            line=int(bad[0]) + 1 + int(has_header), column=int(bad[1]) + 1,
        )
    return Dataset(y=arr[:, 0], x=arr[:, 1:])


def write_csv(data: Dataset, path, header: bool = False) -> None:
    """Write ``data`` so that :func:`load_csv` reads back identical floats."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["y"] + [f"x{j + 1}" for j in range(data.p)])
        for yi, xi in zip(data.y, data.x):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])
