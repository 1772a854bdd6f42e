"""Command-line entry point: ``l1tst {bench,test,landscape,null}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, nulldist
from .optimizer import Theta, init_theta
from .problems import ProblemSpec, sample_problem

OUTPUT_ENV = "L1TST_OUTPUT_DIR"

log = logging.getLogger("l1tst")


def _output_path(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if not hasattr(args, key):
                raise SystemExit(f"unknown config key {key!r} in {args.config}")
            setattr(args, key, value)
    return args


def _as_list(value):
    return value if isinstance(value, list) else [value]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tests", nargs="+", default=list(harness.TEST_NAMES), help="registered test names")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--J", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=200)
    p.add_argument("--n-perm", dest="n_perm", type=int, default=200)
    p.add_argument("--format", choices=("json-lines", "csv"), default="json-lines")
    p.add_argument("--output", default=None)
    p.add_argument("--config", default=None, help="JSON file whose keys override the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1tst", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="synthetic sweep over test sample size or dimension")
    _common(b)
    b.add_argument("--problem", default="SG", choices=("SG", "GMD", "GVD", "Blobs"))
    b.add_argument("--dim", type=int, nargs="+", default=[50])
    b.add_argument("--nte", type=int, nargs="+", default=[1000])
    b.add_argument("--trials", type=int, default=500)
    b.add_argument("--data", nargs=2, default=None, metavar=("X.csv", "Y.csv"),
                   help="use two data files (re-split every trial) instead of a synthetic problem")
    b.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("test", help="run tests once on two CSV files")
    _common(t)
    t.add_argument("x_csv")
    t.add_argument("y_csv")
    t.set_defaults(tests=["L1-opt-ME"])

    ls = sub.add_parser("landscape", help="dump the proxy over a 2-d grid for one moving location")
    ls.add_argument("--problem", default="GMD", choices=("SG", "GMD", "GVD", "Blobs"))
    ls.add_argument("--n", type=int, default=500)
    ls.add_argument("--family", default="ME", choices=("ME", "SCF"))
    ls.add_argument("--fixed", type=float, nargs="*", default=[],
                    help="coordinates of the fixed locations, flattened (x1 y1 x2 y2 ...)")
    ls.add_argument("--sigma", type=float, default=None)
    ls.add_argument("--lim", type=float, nargs=4, default=[-4, 5, -4, 4], metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    ls.add_argument("--steps", type=int, default=41)
    ls.add_argument("--seed", type=int, default=0)
    ls.add_argument("--format", choices=("json-lines", "csv"), default="json-lines")
    ls.add_argument("--output", default=None)
    ls.add_argument("--config", default=None)

    nl = sub.add_parser("null", help="Naka(1/2, 1, J) and chi-squared threshold table")
    nl.add_argument("--J", type=int, nargs="+", default=[1, 2, 5, 10])
    nl.add_argument("--alpha", type=float, nargs="+", default=[0.01, 0.05])
    nl.add_argument("--n-mc", dest="n_mc", type=int, default=nulldist.DEFAULT_N_MC)
    nl.add_argument("--seed", type=int, default=0)
    nl.add_argument("--output", default=None)
    nl.add_argument("--config", default=None)
    return parser


def cmd_bench(args) -> int:
    path = _output_path(args.output, f"bench_{args.problem}.{'csv' if args.format == 'csv' else 'jsonl'}")
    reports = []
    for d in _as_list(args.dim):
        for n_te in _as_list(args.nte):
            config = harness.ExperimentConfig(
                problem=args.problem, d=d, data_files=args.data, tests=args.tests, n_te=n_te,
                n_trials=args.trials, alpha=args.alpha, J=args.J, seed=args.seed,
                max_iters=args.max_iters, n_perm=args.n_perm, output=str(path),
            )
            log.info("running %s d=%d n_te=%d (%d trials)", args.problem, d, n_te, args.trials)
            report = harness.run_experiment(config, workers=args.workers)
            for t, r in report.rejection_rate.items():
                log.info("  %-13s rejection rate %.3f", t, r)
            reports.append(report)
    harness.emit_results(reports, path, args.format)
    print(path)
    return 0


def cmd_test(args) -> int:
    X = harness.load_csv(args.x_csv)
    Y = harness.load_csv(args.y_csv, expected_d=X.d)
    outcomes = harness.single_test(X, Y, tests=args.tests, alpha=args.alpha, J=args.J, seed=args.seed,
                                   max_iters=args.max_iters, n_perm=args.n_perm)
    records = [o.to_dict() for o in outcomes]
    text = "\n".join(json.dumps(r) for r in records) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_landscape(args) -> int:
    spec = ProblemSpec(args.problem, 2)
    X = sample_problem(spec, args.n, "P", args.seed).data
    Y = sample_problem(spec, args.n, "Q", args.seed).data
    fixed = np.asarray(args.fixed, dtype=float).reshape(-1, 2)
    start = init_theta(X, Y, 1, args.family, args.seed)
    sigma = args.sigma if args.sigma else start.sigma
    theta = Theta(np.vstack([fixed, np.zeros((1, 2))]), np.log(sigma))
    xs = np.linspace(args.lim[0], args.lim[1], args.steps)
    ys = np.linspace(args.lim[2], args.lim[3], args.steps)
    grid = harness.objective_landscape(X, Y, theta, fixed.shape[0], xs, ys, args.family)
    path = _output_path(args.output, f"landscape_{args.problem}.{'csv' if args.format == 'csv' else 'jsonl'}")
    harness.emit_landscape(grid, xs, ys, path, args.format)
    print(path)
    return 0


def cmd_null(args) -> int:
    rows = []
    for J in _as_list(args.J):
        for alpha in _as_list(args.alpha):
            q = nulldist.naka_sum_quantile(J, alpha, args.n_mc, args.seed)
            rows.append({
                "J": J, "alpha": alpha, "naka_threshold": q.threshold, "dkw_eps": q.dkw_eps,
                "naka_threshold_2J": nulldist.naka_sum_quantile(2 * J, alpha, args.n_mc, args.seed).threshold,
                "chi2_threshold": nulldist.chi2_quantile(J, alpha),
                "chi2_threshold_2J": nulldist.chi2_quantile(2 * J, alpha),
            })
    text = "\n".join(json.dumps(r) for r in rows) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"bench": cmd_bench, "test": cmd_test, "landscape": cmd_landscape, "null": cmd_null}


def main(argv=None) -> int:
    args = _apply_config_file(build_parser().parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
