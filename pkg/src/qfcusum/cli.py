"""Command-line front end: ``qfcusum test|localize|calibrate|simulate``.

Exit codes: 0 on a completed run, 2 for usage or plan errors, 3 for data
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import calibration, harness
from .data import load_csv
from .errors import DataError, DomainError, NumericError, QFCusumError
from .scan import ScanConfig, localize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _alphas(text: str):
    try:
        return tuple(float(a) for a in text.split(",") if a.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qfcusum", description="Change-point test for high-dimensional regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test a dataset for a change point")
    t.add_argument("--data", required=True, help="CSV with y in the first column, x after")
    t.add_argument("--header", action="store_true", help="first CSV row is a header")
    t.add_argument("--zeta", type=float, default=0.15)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--table", help="critical-value table JSON from 'calibrate'")
    t.add_argument("--out", help="write the outcome JSON here as well")

    lo = sub.add_parser("localize", help="estimate the change-point location")
    lo.add_argument("--data", required=True)
    lo.add_argument("--header", action="store_true")
    lo.add_argument("--zeta", type=float, default=0.15)
    lo.add_argument("--seed", type=int, default=0)
    lo.add_argument("--out")

    c = sub.add_parser("calibrate", help="simulate critical values")
    c.add_argument("--zeta", type=float, default=0.15)
    c.add_argument("--alphas", type=_alphas, default=calibration.DEFAULT_ALPHAS)
    c.add_argument("--grid", type=int, default=2000)
    c.add_argument("--reps", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="run a simulation plan")
    s.add_argument("--plan", required=True, help="plan JSON, or the name of a bundled plan")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=1)
    return p


def _echo(args) -> None:
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()}
    print("config: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)
    if "seed" in cfg:
        print(f"seed: {cfg['seed']}", file=sys.stderr)


def _resolve_plan(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = Path(__file__).parent / "plans" / (name if name.endswith(".json") else name + ".json")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(name)


def _table_for(args) -> calibration.CriticalValueTable:
    if args.table:
        table = calibration.CriticalValueTable.load(args.table)
    else:
        table = calibration.cached_table(args.zeta, alphas=(args.alpha,))
    return table


def cmd_test(args) -> int:
    data = load_csv(args.data, has_header=args.header)
    table = _table_for(args)
    out = calibration.run_test(data, zeta=args.zeta, alpha=args.alpha, table=table, seed=args.seed)
    text = json.dumps(out.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_localize(args) -> int:
    data = load_csv(args.data, has_header=args.header)
    cv_seed, _ = calibration.derive_seeds(args.seed)
    nu = calibration.estimate_nuisance(data, args.zeta, seed=cv_seed)
    eta = localize(data, ScanConfig(lam=nu.lam, sigma_eps=nu.sigma_eps_hat, sigma_xi=0.0,
                                    zeta=args.zeta))
    text = json.dumps({"eta_hat": eta, "eta_frac": eta / data.n, "n": data.n,
                       "lam": nu.lam, "sigma_eps_hat": nu.sigma_eps_hat, "seed": args.seed},
                      indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    table = calibration.simulate_critical_values(args.zeta, args.alphas, args.grid, args.reps,
                                                 args.seed, workers=args.threads)
    table.save(args.out)
    print(json.dumps(table.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        plan = harness.ExperimentPlan.from_json(_resolve_plan(args.plan))
    except FileNotFoundError:
        raise _UsageError(f"plan not found: {args.plan}")
    except (ValueError, TypeError, KeyError) as exc:
        raise _UsageError(f"invalid plan {args.plan}: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"plan: {plan.name} mode={plan.mode} reps={plan.reps} master_seed={plan.master_seed}",
          file=sys.stderr)
    report = harness.run_experiment(plan, threads=args.threads,
                                    progress=lambda line: print(line, file=sys.stderr))
    harness.write_report(report, out / "report.csv", "csv")
    harness.write_report(report, out / "report.json", "json")
    if plan.mode == "localize":
        harness.write_histogram(report, out / "histogram.csv")
    (out / "timing.json").write_text(json.dumps(
        {"wall_time": report.wall_time,
         "mean_runtime": {str(k): v for k, v in report.mean_runtime.items()}}, indent=2))
    print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "localize": cmd_localize, "calibrate": cmd_calibrate,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _echo(args)
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"qfcusum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, NumericError) as exc:
        print(f"qfcusum: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, QFCusumError) as exc:
        print(f"qfcusum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qfcusum: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
