"""Multi-replicate simulation experiments: empirical size, power curves and
the distribution of the change-point estimate."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .calibration import CriticalValueTable, cached_table, derive_seeds, estimate_nuisance, run_test
from .datagen import ScenarioSpec, generate
from .errors import DomainError, ExperimentError, QFCusumError
from .scan import ScanConfig, localize

MODES = ("size", "power", "localize")
MAX_FAIL_SHARE = 0.05
HIST_EDGES = np.linspace(0.0, 1.0, 41)
LOCALIZE_TOLERANCE = 0.05

CSV_COLUMNS = ["scenario_id", "n", "p", "s", "sigma_kind", "dependence", "change", "kappa2",
               "reps", "failures", "rate", "mc_standard_error", "size_adjusted_power",
               "mean_max_stat"]


def replicate_seed(master_seed: int, scenario: int, replicate: int) -> int:
    """Stable 63-bit seed for one replicate."""
    h = hashlib.blake2b(struct.pack("<qqq", master_seed, scenario, replicate), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass
class ExperimentPlan:
    scenarios: list
    reps: int = 500
    alpha: float = 0.05
    zeta: float = 0.15
    master_seed: int = 0
    mode: str = "size"
    stride: int = 1
    table_grid: int = 2000
    table_reps: int = 100_000
    table_seed: int = 0
    name: str = "experiment"

    def __post_init__(self):
        self.scenarios = [s if isinstance(s, ScenarioSpec) else ScenarioSpec.from_dict(s)
                          for s in self.scenarios]
        self.mode = self.mode.lower()
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        if not self.scenarios:
            raise DomainError("plan has no scenarios")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.stride < 1:
            raise DomainError("stride must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = [s.to_dict() for s in self.scenarios]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        defaults = d.pop("defaults", {})
        d["scenarios"] = [ScenarioSpec.from_dict({**defaults, **s}) for s in d["scenarios"]]
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ReplicateResult:
    ok: bool
    reject: bool = False
    max_stat: float = float("nan")
    eta_frac: float = float("nan")
    seconds: float = 0.0
    error: str = ""


def _run_replicate(plan: ExperimentPlan, table: CriticalValueTable, k: int, r: int) -> ReplicateResult:
    spec = plan.scenarios[k]
    seed = replicate_seed(plan.master_seed, k, r)
    start = time.perf_counter()
    try:
        sample = generate(spec.with_seed(seed))
        test_seed = replicate_seed(plan.master_seed, k, r + (1 << 40))
        if plan.mode == "localize":
            cv_seed, _ = derive_seeds(test_seed)
            nu = estimate_nuisance(sample.data, plan.zeta, seed=cv_seed)
            cfg = ScanConfig(lam=nu.lam, sigma_eps=nu.sigma_eps_hat, sigma_xi=0.0,
                             zeta=plan.zeta, stride=plan.stride)
            eta = localize(sample.data, cfg)
            return ReplicateResult(True, eta_frac=eta / spec.n,
                                   seconds=time.perf_counter() - start)
        out = run_test(sample.data, plan.zeta, plan.alpha, table, seed=test_seed,
                       stride=plan.stride)
        return ReplicateResult(True, reject=out.reject, max_stat=out.max_stat,
                               eta_frac=out.argmax_t / spec.n,
                               seconds=time.perf_counter() - start)
    except (QFCusumError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return ReplicateResult(False, seconds=time.perf_counter() - start,
                               error=f"{type(exc).__name__}: {exc}")


_WORKER = {}


def _init_worker(plan_dict, table):
    _WORKER["plan"] = ExperimentPlan.from_dict(plan_dict)
    _WORKER["table"] = table


def _worker_task(kr):
    k, r = kr
    return _run_replicate(_WORKER["plan"], _WORKER["table"], k, r)


@dataclass
class ScenarioRow:
    scenario_id: int
    n: int
    p: int
    s: int
    sigma_kind: str
    dependence: str
    change: str
    kappa2: float
    reps: int
    failures: int
    rate: float
    mc_standard_error: float
    size_adjusted_power: float = float("nan")
    mean_max_stat: float = float("nan")
    histogram: Optional[list] = None


@dataclass
class ExperimentReport:
    rows: list
    plan: dict
    table_digest: str
    critical_value: float
    replicates: dict = field(default_factory=dict)  # scenario id -> statistic or eta/n list
    errors: dict = field(default_factory=dict)
    wall_time: float = 0.0
    mean_runtime: dict = field(default_factory=dict)

    def row(self, scenario_id: int) -> ScenarioRow:
        for r in self.rows:
            if r.scenario_id == scenario_id:
                return r
        raise KeyError(scenario_id)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {"rows": [asdict(r) for r in self.rows], "plan": self.plan,
             "table_digest": self.table_digest, "critical_value": self.critical_value,
             "replicates": {str(k): v for k, v in self.replicates.items()},
             "errors": {str(k): v for k, v in self.errors.items()}}
        if include_timing:
            d["wall_time"] = self.wall_time
            d["mean_runtime"] = {str(k): v for k, v in self.mean_runtime.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(rows=[ScenarioRow(**r) for r in d["rows"]], plan=d["plan"],
                   table_digest=d["table_digest"], critical_value=d["critical_value"],
                   replicates={int(k): v for k, v in d.get("replicates", {}).items()},
                   errors={int(k): v for k, v in d.get("errors", {}).items()},
                   wall_time=d.get("wall_time", 0.0),
                   mean_runtime={int(k): v for k, v in d.get("mean_runtime", {}).items()})


def _base_key(spec: ScenarioSpec):
    return (spec.n, spec.p, spec.s, spec.sigma_kind, spec.dependence, spec.sigma_eps,
            spec.change_pattern.kind, spec.change_pattern.frac)


def _aggregate(plan: ExperimentPlan, results, table: CriticalValueTable) -> ExperimentReport:
    rows, reps_out, errors = [], {}, {}
    null_stats = {}
    for k, spec in enumerate(plan.scenarios):
        if k not in results:
            continue
        ok = [r for r in results[k] if r.ok]
        fails = [r.error for r in results[k] if not r.ok]
        if len(fails) > MAX_FAIL_SHARE * plan.reps:
            raise ExperimentError(
                f"scenario {k}: {len(fails)} of {plan.reps} replicates failed; first: {fails[0]}")
        if fails:
            errors[k] = fails
        if plan.mode == "power" and spec.kappa == 0:
            null_stats[_base_key(spec)] = np.array([r.max_stat for r in ok])

    for k, spec in enumerate(plan.scenarios):
        if k not in results:
            continue
        ok = [r for r in results[k] if r.ok]
        m = len(ok)
        hist = None
        mean_stat = float("nan")
        adj = float("nan")
        if plan.mode == "localize":
            fr = np.array([r.eta_frac for r in ok])
            cps = spec.changepoints()
            target = cps[0] / spec.n if cps else 0.5
            rate = float(np.mean(np.abs(fr - target) <= LOCALIZE_TOLERANCE + 1e-12)) if m else float("nan")
            hist = np.histogram(fr, bins=HIST_EDGES)[0].tolist()
            reps_out[k] = fr.tolist()
        else:
            stats = np.array([r.max_stat for r in ok])
            rate = float(np.mean([r.reject for r in ok])) if m else float("nan")
            mean_stat = float(stats.mean()) if m else float("nan")
            reps_out[k] = stats.tolist()
            nulls = null_stats.get(_base_key(spec))
            if plan.mode == "power" and nulls is not None and nulls.size:
                crit = float(np.quantile(nulls, 1.0 - plan.alpha, method="higher"))
                adj = float(np.mean(stats > crit))
        se = float(np.sqrt(rate * (1.0 - rate) / m)) if m else float("nan")
        cp = spec.change_pattern
        rows.append(ScenarioRow(k, spec.n, spec.p, spec.s, spec.sigma_kind, spec.dependence,
                                cp.kind, round(float(cp.kappa ** 2), 12), m, plan.reps - m, rate, se,
                                adj, mean_stat, hist))
    if plan.mode == "power":
        rows.sort(key=lambda r: (_base_key(plan.scenarios[r.scenario_id]), r.kappa2,
                                 r.scenario_id))
    return ExperimentReport(rows=rows, plan=plan.to_dict(), table_digest=table.digest,
                            critical_value=table.critical_value(plan.alpha),
                            replicates=reps_out, errors=errors)


def run_experiment(plan: ExperimentPlan, table: Optional[CriticalValueTable] = None,
                   threads: int = 1,
                   progress: Optional[Callable[[str], None]] = None,
                   select: Optional[Sequence[int]] = None) -> ExperimentReport:
    """Run every scenario of ``plan`` and aggregate in replicate order.

    Replicate ``r`` of scenario ``k`` draws its data from
    ``replicate_seed(master_seed, k, r)``, so the report does not depend on
    ``threads``.  Failed replicates are dropped from the denominator and
    listed in ``report.errors``; more than 5% failures in a scenario raise
    :class:`ExperimentError`.  ``select`` restricts the run to the given
    scenario indices while keeping their seeds.
    """
    if table is None:
        table = cached_table(plan.zeta, plan.table_grid, plan.table_reps, plan.table_seed,
                             alphas=(plan.alpha,))
    if abs(table.zeta - plan.zeta) > 1e-12:
        raise DomainError(f"table is for zeta={table.zeta}, plan uses zeta={plan.zeta}")
    start = time.perf_counter()
    results = {}
    runtime = {}
    pool = None
    if threads > 1:
        pool = ProcessPoolExecutor(threads, initializer=_init_worker,
                                   initargs=(plan.to_dict(), table))
    try:
        chosen = range(len(plan.scenarios)) if select is None else sorted(set(select))
        for k in chosen:
            spec = plan.scenarios[k]
            tasks = [(k, r) for r in range(plan.reps)]
            if pool is None:
                res = [_run_replicate(plan, table, k, r) for k, r in tasks]
            else:
                res = list(pool.map(_worker_task, tasks, chunksize=max(1, plan.reps // (4 * threads))))
            results[k] = res
            runtime[k] = float(np.mean([r.seconds for r in res]))
            if progress is not None:
                ok = [r for r in res if r.ok]
                if plan.mode == "localize":
                    summary = f"median eta/n {np.median([r.eta_frac for r in ok]):.3f}" if ok else "no successes"
                else:
                    summary = f"rate {np.mean([r.reject for r in ok]):.4f}" if ok else "no successes"
                cp = spec.change_pattern
                progress(f"scenario {k}: n={spec.n} p={spec.p} s={spec.s} {spec.sigma_kind} "
                         f"{spec.dependence} {cp.kind} kappa2={cp.kappa ** 2:g} "
                         f"{summary} failures={plan.reps - len(ok)} "
                         f"({runtime[k]:.2f}s/rep)")
    finally:
        if pool is not None:
            pool.shutdown()
    report = _aggregate(plan, results, table)
    report.wall_time = time.perf_counter() - start
    report.mean_runtime = runtime
    return report


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: ExperimentReport, path, fmt: str = "csv",
                 include_timing: bool = False) -> None:
    """Write one CSV row per scenario, or the full JSON report.

    Timing fields are left out unless ``include_timing`` is set, so that
    repeated runs produce byte-identical files.
    """
    path = Path(path)
    fmt = fmt.lower()
    try:
        if fmt == "json":
            path.write_text(json.dumps(report.to_dict(include_timing), indent=2, sort_keys=True))
        elif fmt == "csv":
            cols = CSV_COLUMNS + (["mean_runtime"] if include_timing else [])
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for r in report.rows:
                    d = asdict(r)
                    if include_timing:
                        d["mean_runtime"] = report.mean_runtime.get(r.scenario_id, float("nan"))
                    w.writerow([_fmt(d[c]) for c in cols])
        else:
            raise DomainError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def write_histogram(report: ExperimentReport, path) -> None:
    """Histogram of ``eta_hat / n`` for every localization scenario."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "bin_lo", "bin_hi", "count", "density"])
        width = HIST_EDGES[1] - HIST_EDGES[0]
        for r in report.rows:
            if r.histogram is None:
                continue
            total = max(sum(r.histogram), 1)
            for lo, hi, c in zip(HIST_EDGES[:-1], HIST_EDGES[1:], r.histogram):
                w.writerow([r.scenario_id, repr(float(lo)), repr(float(hi)), c,
                            repr(c / (total * width))])
