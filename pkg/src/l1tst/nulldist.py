"""Null-distribution thresholds.

Monte-Carlo quantiles of a sum of J i.i.d. Nakagami(1/2, 1) variables (that is
``sum_j |Z_j|`` for standard normal ``Z``) certified by the DKW inequality,
chi-squared quantiles, and permutation thresholds.
"""

from __future__ import annotations

import math
import threading
import warnings
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize, special

DEFAULT_N_MC = 100_000
DKW_CONFIDENCE = 0.99


class UnderResolvedQuantileWarning(UserWarning):
    """Too few Monte-Carlo draws land beyond the requested quantile."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def dkw_epsilon(n: int, confidence: float = DKW_CONFIDENCE) -> float:
    """Uniform CDF error bound holding with probability ``confidence``."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


class EmpiricalCdf:
    """Sorted Monte-Carlo draws with quantile and CDF queries."""

    def __init__(self, draws, seed: int | None = None):
        self.draws = np.sort(np.asarray(draws, dtype=float).ravel())
        if self.draws.size == 0:
            raise ValueError("empirical CDF needs at least one draw")
        self.seed = seed

    @property
    def n_draws(self) -> int:
        return self.draws.size

    def quantile(self, q: float) -> float:
        # linear interpolation between order statistics
        if not 0.0 < q < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        return float(np.quantile(self.draws, q))

    def __call__(self, x) -> np.ndarray | float:
        out = np.searchsorted(self.draws, x, side="right") / self.n_draws
        return float(out) if np.ndim(out) == 0 else out

    def dkw_epsilon(self, confidence: float = DKW_CONFIDENCE) -> float:
        return dkw_epsilon(self.n_draws, confidence)


def naka_sum_draws(J: int, n_mc: int = DEFAULT_N_MC, seed: int = 0) -> np.ndarray:
    """``n_mc`` draws of ``sum_{j<=J} |Z_j|`` with ``Z`` standard normal."""
    if J < 1:
        raise ValueError("J must be at least 1")
    Z = np.random.default_rng(seed).standard_normal((n_mc, J))
    return np.abs(Z).sum(axis=1)


def naka_sum_cdf(J: int, n_mc: int = DEFAULT_N_MC, seed: int = 0) -> EmpiricalCdf:
    return EmpiricalCdf(naka_sum_draws(J, n_mc, seed), seed=seed)


class NakaQuantile(NamedTuple):
    threshold: float
    dkw_eps: float


_cache: dict[tuple, NakaQuantile] = {}
_cache_lock = threading.Lock()


def naka_sum_quantile(J: int, alpha: float = 0.01, n_mc: int = DEFAULT_N_MC, seed: int = 0) -> NakaQuantile:
    """(1 - alpha)-quantile of the Naka(1/2, 1, J) law by Monte Carlo.

    Results are cached per ``(J, alpha, n_mc, seed)``.
    """
    alpha = _check_alpha(alpha)
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    if n_mc * alpha < 10:
        warnings.warn(
            f"only {n_mc * alpha:.1f} expected draws beyond the {1 - alpha} quantile",
            UnderResolvedQuantileWarning,
            stacklevel=2,
        )
    key = (int(J), alpha, int(n_mc), seed)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    cdf = naka_sum_cdf(J, n_mc, seed)
    result = NakaQuantile(cdf.quantile(1.0 - alpha), cdf.dkw_epsilon())
    with _cache_lock:
        _cache.setdefault(key, result)
    return result


def chi2_quantile(dof: int, alpha: float, tol: float = 1e-10) -> float:
    """(1 - alpha)-quantile of chi^2(dof) by root-finding on the regularized
    upper incomplete gamma function."""
    alpha = _check_alpha(alpha)
    if dof < 1:
        raise ValueError("dof must be at least 1")
    a = dof / 2.0

    def tail(x):
        return special.gammaincc(a, x / 2.0) - alpha

    hi = max(2.0 * dof, 1.0)
    while tail(hi) > 0:
        hi *= 2.0
    return float(optimize.brentq(tail, 0.0, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


def order_statistic_threshold(null_values, alpha: float) -> float:
    """The ``ceil((1 - alpha)(m + 1))``-th smallest of ``m`` null values.

    Returns ``inf`` when that index exceeds ``m`` (too few permutations to
    ever reject at this level).
    """
    alpha = _check_alpha(alpha)
    vals = np.sort(np.asarray(null_values, dtype=float).ravel())
    m = vals.size
    k = math.ceil((1.0 - alpha) * (m + 1) - 1e-12)
    if k > m:
        return math.inf
    return float(vals[k - 1])


def permutation_null(X, Y, stat: Callable[[np.ndarray, np.ndarray], float], n_perm: int = 200,
                     seed: int = 0) -> np.ndarray:
    """Statistic recomputed on ``n_perm`` random relabelings of the pooled sample."""
    if n_perm < 1:
        raise ValueError("n_perm must be at least 1")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X, Y = X[:, None], Y[:, None]
    n1 = X.shape[0]
    Z = np.vstack([X, Y])
    rng = np.random.default_rng(seed)
    out = np.empty(n_perm)
    for b in range(n_perm):
        idx = rng.permutation(Z.shape[0])
        out[b] = stat(Z[idx[:n1]], Z[idx[n1:]])
    return out


def permutation_threshold(X, Y, stat: Callable[[np.ndarray, np.ndarray], float], n_perm: int = 200,
                          alpha: float = 0.01, seed: int = 0) -> float:
    """(1 - alpha) permutation quantile of ``stat`` by the order-statistic convention."""
    return order_statistic_threshold(permutation_null(X, Y, stat, n_perm, seed), alpha)


def permutation_indicators(n1: int, n2: int, n_perm: int, seed: int = 0) -> np.ndarray:
    """``(n1 + n2) x n_perm`` 0/1 matrix; column b marks the rows relabeled as X."""
    rng = np.random.default_rng(seed)
    A = np.zeros((n1 + n2, n_perm))
    for b in range(n_perm):
        A[rng.permutation(n1 + n2)[:n1], b] = 1.0
    return A


def mmd2_permutation_null(K: np.ndarray, n1: int, n_perm: int = 200, seed: int = 0) -> np.ndarray:
    """Unbiased MMD^2 under ``n_perm`` relabelings, from the pooled kernel matrix.

    All permutations are evaluated with a single ``K @ A`` product.
    """
    N = K.shape[0]
    n2 = N - n1
    A = permutation_indicators(n1, n2, n_perm, seed)
    B = 1.0 - A
    diag = np.diag(K)
    KA = K @ A
    total = K.sum()
    colsum = K.sum(axis=0)
    s_xx = np.einsum("ib,ib->b", A, KA)
    s_xy = colsum @ A - s_xx
    s_yy = total - 2.0 * s_xy - s_xx
    tr_x = diag @ A
    tr_y = diag @ B
    return (s_xx - tr_x) / (n1 * (n1 - 1)) + (s_yy - tr_y) / (n2 * (n2 - 1)) - 2.0 * s_xy / (n1 * n2)


def linear_features_permutation_null(Zx: np.ndarray, Zy: np.ndarray, n_perm: int = 200,
                                     seed: int = 0) -> np.ndarray:
    """Difference of feature means under ``n_perm`` relabelings; ``n_perm x k``."""
    n1, n2 = Zx.shape[0], Zy.shape[0]
    Z = np.vstack([Zx, Zy])
    A = permutation_indicators(n1, n2, n_perm, seed)
    sum_x = A.T @ Z
    return sum_x / n1 - (Z.sum(axis=0) - sum_x) / n2
