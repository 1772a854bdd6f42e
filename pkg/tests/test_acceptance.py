"""End-to-end acceptance checks, one test per criterion.

These are slow (tens of minutes in total on one core). Deselect them with
``pytest -m "not acceptance"``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from l1tst.harness import ExperimentConfig, derive_seed, run_experiment
from l1tst.kernels import (
    TestLocations,
    feature_map,
    gaussian_gram,
    gaussian_kernel,
    me_features,
    median_heuristic,
)
from l1tst.matops import empirical_covariance, regularized_inv_sqrt
from l1tst.nulldist import (
    EmpiricalCdf,
    linear_features_permutation_null,
    mmd2_permutation_null,
    naka_sum_draws,
    naka_sum_quantile,
    order_statistic_threshold,
    permutation_threshold,
)
from l1tst.optimizer import Theta, power_proxy, proxy_gradient, proxy_value_and_grad
from l1tst.problems import sample_gmd_shift
from l1tst.statistics import (
    l1_me_statistic,
    mmd2_from_gram,
    mmd2_unbiased,
    normalized_vector,
    unnormalized_statistics,
)

pytestmark = pytest.mark.acceptance


def normal_quantile(p):
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fmt_rates(rates):
    return ", ".join(f"{k}={v:.3f}" for k, v in rates.items())


def test_criterion_1_size_control(acceptance):
    cfg = ExperimentConfig(problem="SG", d=50, J=5, n_te=1000, n_trials=500, alpha=0.01, seed=1)
    start = time.perf_counter()
    rep = run_experiment(cfg)
    wall = time.perf_counter() - start
    wall_ex_mmd = wall - rep.mean_runtime_ms["MMD-quad"] * rep.n_trials / 1000.0
    rates = rep.rejection_rate
    ok = all(r <= 0.03 for r in rates.values()) and wall_ex_mmd < 600.0
    acceptance(1, ok, f"{fmt_rates(rates)}; wall time excluding MMD-quad {wall_ex_mmd:.0f} s")
    assert all(r <= 0.03 for r in rates.values()), rates
    assert wall_ex_mmd < 600.0


def test_criterion_2_gmd_power(acceptance):
    tests = ("L1-opt-ME", "L1-grid-ME", "L1-opt-SCF", "L1-grid-SCF")
    cfg = ExperimentConfig(problem="GMD", d=100, J=5, n_te=2500, n_trials=100, alpha=0.01, seed=2, tests=tests)
    r = run_experiment(cfg).rejection_rate
    ok = (r["L1-opt-ME"] >= 0.9 and r["L1-opt-SCF"] >= 0.9
          and r["L1-opt-ME"] > r["L1-grid-ME"] and r["L1-opt-SCF"] > r["L1-grid-SCF"])
    acceptance(2, ok, fmt_rates(r))
    assert ok, r


def test_criterion_3_blobs_family_ordering(acceptance):
    me = ("L1-opt-ME", "L1-grid-ME", "ME-full")
    scf = ("L1-opt-SCF", "L1-grid-SCF", "SCF-full")
    cfg = ExperimentConfig(problem="Blobs", J=5, n_te=3000, n_trials=100, alpha=0.01, seed=3, tests=me + scf)
    r = run_experiment(cfg).rejection_rate
    me_power = float(np.mean([r[t] for t in me]))
    scf_power = float(np.mean([r[t] for t in scf]))
    ok = scf_power > me_power
    acceptance(3, ok, f"ME family {me_power:.3f}, SCF family {scf_power:.3f}; {fmt_rates(r)}")
    assert ok, r


def test_criterion_4_naka_threshold(acceptance):
    q = naka_sum_quantile(1, 0.01, 100_000, seed=0)
    target = normal_quantile(0.995)
    ok = abs(q.threshold - target) < 0.02 and abs(q.dkw_eps - 0.00515) < 5e-6
    acceptance(4, ok, f"threshold {q.threshold:.4f} vs {target:.5f}, dkw_eps {q.dkw_eps:.6f}")
    assert ok


def test_criterion_5_null_calibration(acceptance):
    d, n, J, sims = 5, 2000, 5, 2000
    rng = np.random.default_rng(55)
    pilot = rng.standard_normal((1000, d))
    locs = TestLocations(rng.standard_normal((J, d)), median_heuristic(pilot))
    stats = np.empty(sims)
    for i in range(sims):
        seed = derive_seed(5, i)
        X = sample_gmd_shift(0.0, d, n, "P", seed).data
        Y = sample_gmd_shift(0.0, d, n, "Q", seed).data
        stats[i] = l1_me_statistic(X, Y, locs).value
    ok, parts = True, []
    for alpha in (0.01, 0.05):
        thr = naka_sum_quantile(J, alpha).threshold
        rate = float(np.mean(stats > thr))
        se = math.sqrt(alpha * (1 - alpha) / sims)
        ok &= rate <= alpha + 3 * se
        parts.append(f"alpha={alpha}: rate {rate:.4f} (bound {alpha + 3 * se:.4f})")
    acceptance(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_l1_dominates_l2(acceptance):
    d, J, alpha, trials, n_perm = 10, 5, 0.05, 500, 200
    rng = np.random.default_rng(66)
    pilot = np.vstack([rng.standard_normal((500, d)), rng.standard_normal((500, d)) + np.eye(d)[0]])
    locs = TestLocations(rng.standard_normal((J, d)), median_heuristic(pilot))
    fractions, powers = {}, {}
    for n in (500, 2000, 8000):
        only_l2, rej1, rej2 = 0, 0, 0
        for trial in range(trials):
            seed = derive_seed(6, n, trial)
            X = sample_gmd_shift(1.0, d, n, "P", seed).data
            Y = sample_gmd_shift(1.0, d, n, "Q", seed).data
            Zx, Zy = me_features(X, locs), me_features(Y, locs)
            S = Zx.mean(axis=0) - Zy.mean(axis=0)
            l1, l2 = math.sqrt(n) * np.abs(S).sum(), n * float(S @ S)
            if trial == 0:
                assert (l1, l2) == pytest.approx(unnormalized_statistics(X, Y, locs), rel=1e-12)
            # both tests share the same relabelings
            null = linear_features_permutation_null(Zx, Zy, n_perm, seed)
            thr1 = order_statistic_threshold(math.sqrt(n) * np.abs(null).sum(axis=1), alpha)
            thr2 = order_statistic_threshold(n * (null**2).sum(axis=1), alpha)
            r1, r2 = l1 > thr1, l2 > thr2
            rej1 += r1
            rej2 += r2
            only_l2 += r2 and not r1
        fractions[n] = only_l2 / trials
        powers[n] = (rej1 / trials, rej2 / trials)
    f = list(fractions.values())
    ok = f[0] >= f[1] >= f[2] and f[2] <= 0.02
    detail = "; ".join(f"n={n}: l2-only {fractions[n]:.3f}, power l1 {powers[n][0]:.3f} l2 {powers[n][1]:.3f}"
                       for n in fractions)
    acceptance(6, ok, detail)
    assert ok, fractions


def test_criterion_7_quantile_domination(acceptance):
    n_mc, worst = 100_000, math.inf
    ok = True
    for J in range(1, 11):
        Z = np.random.default_rng(J).standard_normal((n_mc, J))
        l1 = np.abs(Z).sum(axis=1)
        l2 = np.sqrt((Z**2).sum(axis=1))
        np.testing.assert_array_equal(l1, naka_sum_draws(J, n_mc, seed=J))
        ok &= bool(np.all(l1 >= l2))
        c1, c2 = EmpiricalCdf(l1), EmpiricalCdf(l2)
        for alpha in (0.01, 0.05):
            gap = c1.quantile(1 - alpha) - c2.quantile(1 - alpha)
            worst = min(worst, gap)
            ok &= gap >= 0
    acceptance(7, ok, f"smallest l1 - l2 quantile gap {worst:.4f}")
    assert ok


def test_criterion_8_oracles(acceptance):
    rng = np.random.default_rng(88)
    checks = {}

    X, Y = rng.standard_normal((30, 3)), rng.standard_normal((25, 3)) + 0.4
    xx = sum(gaussian_kernel(X[i], X[j], 1.2) for i in range(30) for j in range(30) if i != j) / (30 * 29)
    yy = sum(gaussian_kernel(Y[i], Y[j], 1.2) for i in range(25) for j in range(25) if i != j) / (25 * 24)
    xy = sum(gaussian_kernel(x, y, 1.2) for x in X for y in Y) / (30 * 25)
    checks["mmd"] = abs(mmd2_unbiased(X, Y, 1.2) - (xx + yy - 2 * xy))

    a, b = np.array([0.3, 1.7, -0.4]), np.array([2.2, 0.9, 1.1])
    z = np.concatenate([a, b])
    stat = lambda p, q: float(p.mean() - q.mean())
    exhaustive = sorted(stat(z[list(c)], z[[i for i in range(6) if i not in c]])
                        for c in itertools.combinations(range(6), 3))
    alpha = 0.23
    exact = exhaustive[math.ceil((1 - alpha) * 20) - 1]
    checks["permutation"] = abs(permutation_threshold(a, b, stat, 20_000, alpha, seed=8) - exact)

    A = rng.standard_normal((5, 5))
    m = A @ A.T + 0.1 * np.eye(5)
    R = regularized_inv_sqrt(m, 1e-5)
    checks["inv_sqrt"] = np.linalg.norm(R @ R @ (m + 1e-5 * np.eye(5)) - np.eye(5)) / np.linalg.norm(np.eye(5))

    Z = rng.standard_normal((50, 3))
    mean = [sum(r[j] for r in Z) / 50 for j in range(3)]
    two_pass = np.array([[sum((r[p] - mean[p]) * (r[q] - mean[q]) for r in Z) / 49 for q in range(3)]
                         for p in range(3)])
    checks["covariance"] = float(np.abs(empirical_covariance(Z) - two_pass).max())

    Zp = np.vstack([X, Y])
    K = gaussian_gram(Zp, Zp, 1.2)
    null = mmd2_permutation_null(K, 30, 20, seed=1)
    A_idx = np.random.default_rng(1)
    loop = []
    for _ in range(20):
        perm = A_idx.permutation(55)
        idx = np.concatenate([np.sort(perm[:30]), np.sort(perm[30:])])
        loop.append(mmd2_from_gram(K[np.ix_(idx, idx)], 30))
    checks["mmd_perm"] = float(np.abs(null - np.array(loop)).max())

    ok = (checks["mmd"] < 1e-12 and checks["permutation"] < 1e-12 and checks["inv_sqrt"] < 1e-8
          and checks["covariance"] < 1e-12 and checks["mmd_perm"] < 1e-12)
    acceptance(8, ok, ", ".join(f"{k} err {v:.1e}" for k, v in checks.items()))
    assert ok, checks


def test_criterion_9_gradient_contract(acceptance):
    d, J, n, fd_step = 5, 3, 300, 1e-4
    worst, used, skipped = 0.0, 0, 0
    for k in range(100):
        family = "ME" if k % 2 == 0 else "SCF"
        # GMD in d=5 is the unit mean shift along the first axis
        Xtr = sample_gmd_shift(1.0, d, n, "P", k).data
        Ytr = sample_gmd_shift(1.0, d, n, "Q", k).data
        rng = np.random.default_rng(900 + k)
        theta = Theta(rng.standard_normal((J, d)) + [0.5, 0, 0, 0, 0], rng.uniform(0.0, 1.5))
        # skip points near an |.| kink of the l1 objective
        locs = theta.to_locations()
        fm = feature_map(family)
        v, S = normalized_vector(fm(Xtr, locs), fm(Ytr, locs), 1e-5)
        if np.min(np.abs(S)) < 10 * fd_step or np.min(np.abs(v)) < 10 * fd_step:
            skipped += 1
            continue
        value, grad = proxy_value_and_grad(theta, Xtr, Ytr, family)
        assert value == pytest.approx(power_proxy(theta, Xtr, Ytr, family), rel=1e-12)
        fd = proxy_gradient(theta, Xtr, Ytr, family, fd_step=fd_step)
        # relative error with a floor at 1e-3 of the largest component
        scale = np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max())
        worst = max(worst, float(np.max(np.abs(grad - fd) / scale)))
        used += 1
    ok = worst <= 1e-4 and used >= 80
    acceptance(9, ok, f"max relative error {worst:.1e} over {used} points ({skipped} near a kink)")
    assert ok


def best_time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def test_criterion_10_runtime_scaling(acceptance):
    rng = np.random.default_rng(10)
    locs = TestLocations(rng.standard_normal((5, 10)), 3.0)
    data = {n: (rng.standard_normal((n, 10)), rng.standard_normal((n, 10)) + 0.1) for n in (100_000, 200_000)}
    l1 = {n: best_time(lambda: l1_me_statistic(*data[n], locs), 7) for n in data}
    l1_ratio = l1[200_000] / l1[100_000]

    def mmd_quad(X, Y):
        Z = np.vstack([X, Y])
        K = gaussian_gram(Z, Z, 3.0)
        mmd2_from_gram(K, X.shape[0])
        mmd2_permutation_null(K, X.shape[0], 200, seed=0)

    mdata = {n: (rng.standard_normal((n, 10)), rng.standard_normal((n, 10))) for n in (2000, 4000)}
    mm = {n: best_time(lambda: mmd_quad(*mdata[n]), 3) for n in mdata}
    mmd_ratio = mm[4000] / mm[2000]
    ok = 1.5 <= l1_ratio <= 3.0 and 3.0 <= mmd_ratio <= 6.0
    acceptance(10, ok, f"L1-ME ratio {l1_ratio:.2f} ({l1[100_000] * 1e3:.0f} ms -> {l1[200_000] * 1e3:.0f} ms), "
                       f"MMD-quad ratio {mmd_ratio:.2f} ({mm[2000]:.2f} s -> {mm[4000]:.2f} s)")
    assert ok
