"""Experiment orchestration: trials, train/test splits, aggregation and output."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from . import nulldist
from .kernels import gaussian_gram, median_heuristic
from .optimizer import (
    MATRIX_ERRORS,
    OptimizerConfig,
    Theta,
    grid_search_sigma,
    init_theta,
    optimize_theta,
    power_proxy,
)
from .problems import ProblemSpec, sample_problem
from .statistics import (
    DEFAULT_GAMMA,
    SampleSet,
    TestOutcome,
    hoeffding_test,
    location_statistic,
    mmd2_from_gram,
    mmd_linear_terms,
)

log = logging.getLogger(__name__)

TEST_NAMES = (
    "L1-opt-ME",
    "L1-grid-ME",
    "L1-opt-SCF",
    "L1-grid-SCF",
    "ME-full",
    "SCF-full",
    "MMD-quad",
    "MMD-lin",
    "Hoeffding-L1",
)

RESULT_FIELDS = (
    "test", "problem", "d", "J", "n_te", "alpha", "n_trials",
    "rejection_rate", "mean_runtime_ms", "seed", "n_rejections",
)


class DataTooSmallError(ValueError):
    """A data file has fewer rows than the requested split needs."""


@dataclass
class ExperimentConfig:
    problem: str | None = "SG"
    d: int = 50
    data_files: tuple[str, str] | None = None
    tests: tuple[str, ...] = TEST_NAMES
    n_te: int | None = 1000
    n_trials: int = 500
    alpha: float = 0.01
    J: int = 5
    seed: int = 0
    gamma: float = DEFAULT_GAMMA
    max_iters: int = 200
    n_perm: int = 200
    n_mc: int = nulldist.DEFAULT_N_MC
    output: str | None = None

    def __post_init__(self):
        self.tests = tuple(self.tests)
        unknown = [t for t in self.tests if t not in TEST_NAMES]
        if unknown:
            raise ValueError(f"unknown tests {unknown}; registered: {TEST_NAMES}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.data_files is None and self.problem is None:
            raise ValueError("need a synthetic problem or a pair of data files")
        if self.data_files is None and (self.n_te is None or self.n_te < 2):
            raise ValueError("synthetic problems need n_te >= 2")
        if self.data_files is not None:
            self.data_files = tuple(self.data_files)

    @property
    def spec(self) -> ProblemSpec | None:
        return None if self.data_files else ProblemSpec(self.problem, self.d)

    @property
    def h0_holds(self) -> bool | None:
        return self.spec.h0_holds if self.spec else None

    def problem_label(self) -> str:
        return self.spec.name if self.spec else "files:" + ",".join(Path(p).name for p in self.data_files)

    def dimension(self) -> int:
        return self.spec.d if self.spec else load_csv(self.data_files[0]).d


@dataclass
class TrialData:
    Xtr: np.ndarray
    Ytr: np.ndarray
    Xte: np.ndarray
    Yte: np.ndarray
    # row indices into the source sample (file data only)
    train_idx: tuple = field(default=(None, None), repr=False)
    test_idx: tuple = field(default=(None, None), repr=False)


@dataclass
class TrialReport:
    config: dict
    trials: list
    rejection_rate: dict
    n_rejections: dict
    mean_runtime_ms: dict
    n_trials: int
    h0_holds: bool | None = None

    def error_rates(self) -> dict:
        """Type-I error under H0, type-II error (1 - power) otherwise."""
        if self.h0_holds is None:
            return {}
        key = "type_i_error" if self.h0_holds else "type_ii_error"
        return {t: {key: r if self.h0_holds else 1.0 - r} for t, r in self.rejection_rate.items()}


# -- seeding -------------------------------------------------------------------


def derive_seed(*keys) -> int:
    words = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# -- data ----------------------------------------------------------------------


def load_csv(path, expected_d: int | None = None) -> SampleSet:
    """Numeric CSV with an optional single header row -> SampleSet."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric value in row {row!r}") from None
            if rows and len(vals) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if expected_d is not None and data.shape[1] != expected_d:
        raise ValueError(f"{path}: expected {expected_d} columns, got {data.shape[1]}")
    return SampleSet(data, label=str(path))


def save_csv(sample, path, header: list[str] | None = None) -> None:
    data = sample.data if isinstance(sample, SampleSet) else np.asarray(sample, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def split_file_data(X: np.ndarray, Y: np.ndarray, n_te: int | None, rng: np.random.Generator) -> TrialData:
    """Random train/test split of each sample; train and test have the same size."""
    parts = []
    for Z in (X, Y):
        n = Z.shape[0]
        size = n // 2 if n_te is None else n_te
        if size < 2 or 2 * size > n:
            raise DataTooSmallError(f"sample with {n} rows cannot give train/test splits of {size}")
        perm = rng.permutation(n)
        parts.append((perm[:size], perm[size:2 * size]))
    (xtr, xte), (ytr, yte) = parts
    return TrialData(X[xtr], Y[ytr], X[xte], Y[yte], (xtr, ytr), (xte, yte))


def equalize(X: np.ndarray, Y: np.ndarray, rng: np.random.Generator):
    """Randomly subsample the larger sample to the size of the smaller one."""
    n = min(X.shape[0], Y.shape[0])
    if X.shape[0] > n:
        X = X[np.sort(rng.choice(X.shape[0], n, replace=False))]
    if Y.shape[0] > n:
        Y = Y[np.sort(rng.choice(Y.shape[0], n, replace=False))]
    return X, Y


def trial_data(config: ExperimentConfig, trial_index: int, _files=None) -> TrialData:
    data_seed = derive_seed(config.seed, trial_index, "data")
    if config.data_files:
        X, Y = _files if _files is not None else [load_csv(p).data for p in config.data_files]
        return split_file_data(X, Y, config.n_te, np.random.default_rng(data_seed))
    n = config.n_te
    P = sample_problem(config.spec, 2 * n, "P", data_seed).data
    Q = sample_problem(config.spec, 2 * n, "Q", data_seed).data
    return TrialData(P[:n], Q[:n], P[n:], Q[n:])


# -- registered tests -----------------------------------------------------------


@dataclass
class TestContext:
    __test__ = False

    alpha: float
    J: int
    seed: int
    gamma: float = DEFAULT_GAMMA
    max_iters: int = 200
    n_perm: int = 200
    n_mc: int = nulldist.DEFAULT_N_MC

    @property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(max_iters=self.max_iters, gamma=self.gamma, seed=self.seed)


def _naka_threshold(dof: int, ctx: TestContext) -> float:
    return nulldist.naka_sum_quantile(dof, ctx.alpha, ctx.n_mc).threshold


def _location_outcome(name, theta: Theta, data: TrialData, family, norm, ctx, threshold, X=None, Y=None):
    X = data.Xte if X is None else X
    Y = data.Yte if Y is None else Y
    locs = theta.to_locations()
    try:
        stat = location_statistic(X, Y, locs, family, norm, ctx.gamma).value
    except MATRIX_ERRORS as exc:
        log.warning("%s: statistic undefined on the test split (%s)", name, exc)
        stat = float("nan")
    return TestOutcome(stat, threshold, ctx.alpha, bool(stat > threshold), name, locs)


def _l1_opt(family):
    def run(data: TrialData, ctx: TestContext) -> TestOutcome:
        res = optimize_theta(data.Xtr, data.Ytr, ctx.J, family, ctx.optimizer_config())
        dof = ctx.J if family == "ME" else 2 * ctx.J
        return _location_outcome(f"L1-opt-{family}", res.theta, data, family, "L1", ctx,
                                 _naka_threshold(dof, ctx))
    return run


def _l1_grid(family):
    def run(data: TrialData, ctx: TestContext) -> TestOutcome:
        theta0 = init_theta(data.Xtr, data.Ytr, ctx.J, family, ctx.seed)
        theta = grid_search_sigma(theta0.locations, data.Xtr, data.Ytr, family, ctx.gamma,
                                  sigma0=theta0.sigma)
        dof = ctx.J if family == "ME" else 2 * ctx.J
        return _location_outcome(f"L1-grid-{family}", theta, data, family, "L1", ctx,
                                 _naka_threshold(dof, ctx))
    return run


def _full(family):
    def run(data: TrialData, ctx: TestContext) -> TestOutcome:
        rng = ctx.rng
        Xtr, Ytr = equalize(data.Xtr, data.Ytr, rng)
        Xte, Yte = equalize(data.Xte, data.Yte, rng)
        res = optimize_theta(Xtr, Ytr, ctx.J, family, ctx.optimizer_config(), norm="L2")
        dof = ctx.J if family == "ME" else 2 * ctx.J
        return _location_outcome(f"{family}-full", res.theta, data, family, "L2", ctx,
                                 nulldist.chi2_quantile(dof, ctx.alpha), Xte, Yte)
    return run


def mmd_bandwidth(Xtr, Ytr, rng, powers=range(-2, 3)) -> float:
    """Median-heuristic multiple maximizing the linear-time power criterion
    ``mean(h) / std(h)`` on the training split."""
    X, Y = equalize(Xtr, Ytr, rng)
    med = median_heuristic(np.vstack([X, Y]))
    med = med if med > 0 else 1.0
    best, best_crit = med, -np.inf
    for k in powers:
        sigma = med * 2.0**k
        h = mmd_linear_terms(X, Y, sigma)
        crit = h.mean() / (h.std(ddof=1) + 1e-8) if h.size > 1 else h.mean()
        if crit > best_crit:
            best, best_crit = sigma, crit
    return best


def _mmd_quad(data: TrialData, ctx: TestContext) -> TestOutcome:
    sigma = mmd_bandwidth(data.Xtr, data.Ytr, ctx.rng)
    n1 = data.Xte.shape[0]
    Z = np.vstack([data.Xte, data.Yte])
    K = gaussian_gram(Z, Z, sigma)
    stat = mmd2_from_gram(K, n1)
    null = nulldist.mmd2_permutation_null(K, n1, ctx.n_perm, derive_seed(ctx.seed, "perm"))
    thr = nulldist.order_statistic_threshold(null, ctx.alpha)
    return TestOutcome(stat, thr, ctx.alpha, bool(stat > thr), "MMD-quad")


def _mmd_lin(data: TrialData, ctx: TestContext) -> TestOutcome:
    rng = ctx.rng
    sigma = mmd_bandwidth(data.Xtr, data.Ytr, rng)
    X, Y = equalize(data.Xte, data.Yte, rng)
    h = mmd_linear_terms(X, Y, sigma)
    stat = float(h.mean())
    # asymptotically normal null with variance var(h) / m
    thr = float(special.ndtri(1.0 - ctx.alpha) * h.std(ddof=1) / np.sqrt(h.size))
    return TestOutcome(stat, thr, ctx.alpha, bool(stat > thr), "MMD-lin")


def _hoeffding(data: TrialData, ctx: TestContext) -> TestOutcome:
    theta = init_theta(data.Xtr, data.Ytr, ctx.J, "ME", ctx.seed)
    out = hoeffding_test(data.Xte, data.Yte, theta.to_locations(), ctx.alpha)
    return out


REGISTRY: dict[str, Callable[[TrialData, TestContext], TestOutcome]] = {
    "L1-opt-ME": _l1_opt("ME"),
    "L1-grid-ME": _l1_grid("ME"),
    "L1-opt-SCF": _l1_opt("SCF"),
    "L1-grid-SCF": _l1_grid("SCF"),
    "ME-full": _full("ME"),
    "SCF-full": _full("SCF"),
    "MMD-quad": _mmd_quad,
    "MMD-lin": _mmd_lin,
    "Hoeffding-L1": _hoeffding,
}


def run_test(name: str, data: TrialData, ctx: TestContext) -> TestOutcome:
    start = time.perf_counter()
    out = REGISTRY[name](data, ctx)
    out.elapsed = time.perf_counter() - start
    return out


def run_trial(config: ExperimentConfig, trial_index: int, _files=None) -> list[TestOutcome]:
    """Fresh data (or a fresh split) for one trial, then every configured test."""
    data = trial_data(config, trial_index, _files)
    outcomes = []
    for name in config.tests:
        ctx = TestContext(config.alpha, config.J, derive_seed(config.seed, trial_index, name),
                          config.gamma, config.max_iters, config.n_perm, config.n_mc)
        outcomes.append(run_test(name, data, ctx))
    return outcomes


def aggregate(config: ExperimentConfig, trials: list[list[TestOutcome]]) -> TrialReport:
    if not trials:
        raise ValueError("no completed trials to aggregate")
    counts, times = {}, {}
    for outcomes in trials:
        for o in outcomes:
            counts[o.test_name] = counts.get(o.test_name, 0) + int(o.reject)
            times.setdefault(o.test_name, []).append(o.elapsed)
    n = len(trials)
    return TrialReport(
        config=config_dict(config),
        trials=trials,
        rejection_rate={t: c / n for t, c in counts.items()},
        n_rejections=counts,
        mean_runtime_ms={t: 1000.0 * float(np.mean(v)) for t, v in times.items()},
        n_trials=n,
        h0_holds=config.h0_holds,
    )


def config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["tests"] = list(config.tests)
    if config.data_files:
        d["data_files"] = list(config.data_files)
    return d


def _run_trial_job(args):
    config, i = args
    return run_trial(config, i)


def run_experiment(config: ExperimentConfig, workers: int = 1, progress: Callable | None = None) -> TrialReport:
    """All trials of an experiment; results do not depend on ``workers``."""
    files = [load_csv(p).data for p in config.data_files] if config.data_files else None
    trials = []
    if workers > 1 and files is None:
        with ProcessPoolExecutor(workers) as pool:
            for i, outcomes in enumerate(pool.map(_run_trial_job, [(config, i) for i in range(config.n_trials)])):
                trials.append(outcomes)
                if progress:
                    progress(i)
    else:
        for i in range(config.n_trials):
            try:
                trials.append(run_trial(config, i, files))
            except DataTooSmallError as exc:
                log.error("trial %d skipped: %s", i, exc)
                continue
            if progress:
                progress(i)
    return aggregate(config, trials)


# -- output --------------------------------------------------------------------


def result_records(report: TrialReport) -> list[dict]:
    cfg = report.config
    problem = cfg["problem"] if not cfg.get("data_files") else "files"
    d = cfg["d"]
    return [
        {
            "test": t,
            "problem": problem,
            "d": d,
            "J": cfg["J"],
            "n_te": cfg["n_te"],
            "alpha": cfg["alpha"],
            "n_trials": report.n_trials,
            "rejection_rate": report.rejection_rate[t],
            "mean_runtime_ms": report.mean_runtime_ms[t],
            "seed": cfg["seed"],
            "n_rejections": report.n_rejections[t],
        }
        for t in cfg["tests"]
        if t in report.rejection_rate
    ]


def emit_results(report: TrialReport | list[TrialReport], path, fmt: str = "json-lines", append: bool = False) -> None:
    """Write one record per (test, n_te) as JSON lines or CSV."""
    reports = report if isinstance(report, list) else [report]
    records = [r for rep in reports for r in result_records(rep)]
    path = Path(path)
    mode = "a" if append else "w"
    try:
        fh = open(path, mode, newline="")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    with fh:
        if fmt == "json-lines":
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        elif fmt == "csv":
            w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
            if not append or fh.tell() == 0:
                w.writeheader()
            w.writerows(records)
        else:
            raise ValueError(f"unknown format {fmt!r}; use 'json-lines' or 'csv'")


def read_results(path, fmt: str = "json-lines") -> list[dict]:
    with open(path, newline="") as fh:
        if fmt == "json-lines":
            return [json.loads(line) for line in fh if line.strip()]
        return list(csv.DictReader(fh))


def objective_landscape(Xtr, Ytr, theta: Theta, index: int, xs, ys, family: str = "ME",
                        gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Proxy value as location ``index`` sweeps a grid over the first two
    coordinates; entry ``[i, j]`` corresponds to ``(xs[j], ys[i])``."""
    grid = np.full((len(ys), len(xs)), np.nan)
    locs = theta.locations.copy()
    for i, yv in enumerate(ys):
        for j, xv in enumerate(xs):
            locs[index, 0] = xv
            locs[index, 1] = yv
            try:
                grid[i, j] = power_proxy(Theta(locs, theta.log_sigma), Xtr, Ytr, family, gamma)
            except MATRIX_ERRORS:
                pass
    return grid


def emit_landscape(grid: np.ndarray, xs, ys, path, fmt: str = "json-lines") -> None:
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh)
            w.writerow(["x", "y", "proxy"])
            for i, yv in enumerate(ys):
                for j, xv in enumerate(xs):
                    w.writerow([xv, yv, grid[i, j]])
        else:
            for i, yv in enumerate(ys):
                for j, xv in enumerate(xs):
                    fh.write(json.dumps({"x": float(xv), "y": float(yv), "proxy": float(grid[i, j])}) + "\n")


def single_test(X, Y, tests=("L1-opt-ME",), alpha: float = 0.01, J: int = 5, seed: int = 0,
                **kwargs) -> list[TestOutcome]:
    """Split two samples in half (train/test) and run the requested tests once."""
    X = X.data if isinstance(X, SampleSet) else np.asarray(X, dtype=float)
    Y = Y.data if isinstance(Y, SampleSet) else np.asarray(Y, dtype=float)
    config = ExperimentConfig(problem=None, data_files=("<X>", "<Y>"), tests=tests, n_te=None,
                              n_trials=1, alpha=alpha, J=J, seed=seed, **kwargs)
    return run_trial(config, 0, (X, Y))


__all__ = [
    "ExperimentConfig", "TrialReport", "TrialData", "TEST_NAMES", "RESULT_FIELDS",
    "DataTooSmallError", "load_csv", "save_csv", "run_trial", "run_experiment", "aggregate",
    "emit_results", "read_results", "objective_landscape", "emit_landscape", "single_test",
]
