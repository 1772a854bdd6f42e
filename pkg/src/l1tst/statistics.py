"""Two-sample test statistics.

Normalized location statistics (L1-ME, L1-SCF, ME, SCF), their unnormalized
counterparts, the finite-sample Hoeffding test and the MMD baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import TestLocations, check_bandwidth, feature_map, gaussian_gram, me_features
from .matops import empirical_covariance, pooled_covariance, regularized_inv_sqrt

DEFAULT_GAMMA = 1e-5


class UnsupportedPairingError(ValueError):
    """Paired statistics need samples of equal size."""


@dataclass(frozen=True)
class SampleSet:
    """An n x d matrix of observations plus a provenance label."""

    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("a sample needs at least one row of an n x d matrix")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class LocationStatistic:
    value: float
    s_vector: np.ndarray
    family: str
    norm: str
    normalized: bool
    n1: int
    n2: int
    # the vector whose norm is ``value``; equals sqrt(t) R S when normalized
    scaled_vector: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return float(self.value)


@dataclass
class TestOutcome:
    __test__ = False

    statistic: float
    threshold: float
    alpha: float
    reject: bool
    test_name: str
    locations_used: TestLocations | None = None
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "elapsed": self.elapsed,
        }


def as_data(sample) -> np.ndarray:
    if isinstance(sample, SampleSet):
        return sample.data
    return SampleSet(sample).data


def _check_pair(X, Y):
    X, Y = as_data(X), as_data(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"samples have different dimensions ({X.shape[1]} vs {Y.shape[1]})")
    return X, Y


def mean_embedding_at(sample, locations: TestLocations) -> np.ndarray:
    """Empirical mean embedding ``(1/n) sum_i k(x_i, T_j)`` at each location."""
    return me_features(as_data(sample), locations).mean(axis=0)


def normalized_vector(Zx: np.ndarray, Zy: np.ndarray, gamma: float = DEFAULT_GAMMA):
    """Shared pipeline for the pooled-covariance statistics.

    Returns ``(v, S)`` where ``S`` is the difference of feature means and
    ``v = sqrt(t) (Sigma + gamma I)^{-1/2} S``.
    """
    n1, n2 = Zx.shape[0], Zy.shape[0]
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least 2 points")
    S = Zx.mean(axis=0) - Zy.mean(axis=0)
    Sigma = pooled_covariance(empirical_covariance(Zx), empirical_covariance(Zy), n1, n2)
    R = regularized_inv_sqrt(Sigma, gamma)
    return np.sqrt(n1 + n2) * (R @ S), S


def paired_vector(Zx: np.ndarray, Zy: np.ndarray, gamma: float = DEFAULT_GAMMA):
    """Paired-difference pipeline: ``v = sqrt(n) (Sigma_n + gamma I)^{-1/2} S_n``."""
    if Zx.shape[0] != Zy.shape[0]:
        raise UnsupportedPairingError(
            f"paired statistic needs equal sample sizes, got {Zx.shape[0]} and {Zy.shape[0]}"
        )
    n = Zx.shape[0]
    if n < 2:
        raise ValueError("need at least 2 pairs")
    z = Zx - Zy
    S = z.mean(axis=0)
    R = regularized_inv_sqrt(empirical_covariance(z), gamma)
    return np.sqrt(n) * (R @ S), S


def location_statistic(X, Y, locations: TestLocations, family: str = "ME", norm: str = "L1",
                       gamma: float = DEFAULT_GAMMA) -> LocationStatistic:
    """Normalized location statistic.

    ``norm="L1"`` gives the pooled-covariance L1 statistic (any sample sizes);
    ``norm="L2"`` gives the squared-l2 paired statistic of the prior-art ME/SCF
    tests (equal sample sizes).
    """
    X, Y = _check_pair(X, Y)
    feats = feature_map(family)
    Zx, Zy = feats(X, locations), feats(Y, locations)
    norm = norm.upper()
    if norm == "L1":
        v, S = normalized_vector(Zx, Zy, gamma)
        value = float(np.abs(v).sum())
    elif norm == "L2":
        v, S = paired_vector(Zx, Zy, gamma)
        value = float(v @ v)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return LocationStatistic(value, S, family.upper(), norm, True, X.shape[0], Y.shape[0], v)


def l1_me_statistic(X, Y, locations, gamma=DEFAULT_GAMMA) -> LocationStatistic:
    return location_statistic(X, Y, locations, "ME", "L1", gamma)


def l1_scf_statistic(X, Y, locations, gamma=DEFAULT_GAMMA) -> LocationStatistic:
    return location_statistic(X, Y, locations, "SCF", "L1", gamma)


def me_statistic_l2(X, Y, locations, gamma=DEFAULT_GAMMA) -> LocationStatistic:
    return location_statistic(X, Y, locations, "ME", "L2", gamma)


def scf_statistic_l2(X, Y, locations, gamma=DEFAULT_GAMMA) -> LocationStatistic:
    return location_statistic(X, Y, locations, "SCF", "L2", gamma)


def unnormalized_statistics(X, Y, locations: TestLocations, family: str = "ME"):
    """``(sqrt(n) ||S||_1, n ||S||_2^2)`` for equal-size samples.

    ``S`` is the difference of mean embeddings (ME) or of mean SCF features.
    """
    X, Y = _check_pair(X, Y)
    if X.shape[0] != Y.shape[0]:
        raise UnsupportedPairingError("unnormalized statistics need equal sample sizes")
    feats = feature_map(family)
    S = feats(X, locations).mean(axis=0) - feats(Y, locations).mean(axis=0)
    n = X.shape[0]
    return float(np.sqrt(n) * np.abs(S).sum()), float(n * (S @ S))


def hoeffding_threshold(n1: int, n2: int, J: int, alpha: float, K: float = 2.0) -> float:
    """Closed-form acceptance bound ``K sqrt((n1+n2)/(n1 n2)) sqrt(2 log(J/alpha))``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return K * np.sqrt((n1 + n2) / (n1 * n2)) * np.sqrt(2.0 * np.log(J / alpha))


def hoeffding_test(X, Y, locations: TestLocations, alpha: float = 0.01, K: float = 2.0) -> TestOutcome:
    """Finite-sample test on ``(1/J) ||S||_1`` with a Hoeffding/union-bound threshold."""
    X, Y = _check_pair(X, Y)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    S = mean_embedding_at(X, locations) - mean_embedding_at(Y, locations)
    stat = float(np.abs(S).sum() / locations.J)
    thresh = float(hoeffding_threshold(X.shape[0], Y.shape[0], locations.J, alpha, K))
    return TestOutcome(stat, thresh, alpha, stat > thresh, "Hoeffding-L1", locations)


def mmd2_from_gram(K: np.ndarray, n1: int) -> float:
    """Unbiased MMD^2 from the kernel matrix of the pooled sample (X first)."""
    n2 = K.shape[0] - n1
    Kxx, Kyy, Kxy = K[:n1, :n1], K[n1:, n1:], K[:n1, n1:]
    xx = (Kxx.sum() - np.trace(Kxx)) / (n1 * (n1 - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (n2 * (n2 - 1))
    return float(xx + yy - 2.0 * Kxy.sum() / (n1 * n2))


def mmd2_unbiased(X, Y, sigma: float) -> float:
    """Quadratic-time unbiased estimate of MMD^2 (can be negative)."""
    X, Y = _check_pair(X, Y)
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise ValueError("unbiased MMD needs at least 2 points per sample")
    Z = np.vstack([X, Y])
    return mmd2_from_gram(gaussian_gram(Z, Z, sigma), X.shape[0])


def mmd_linear_terms(X, Y, sigma: float) -> np.ndarray:
    """The ``floor(n/2)`` terms h((x1, y1), (x2, y2)) of the linear-time estimator."""
    X, Y = _check_pair(X, Y)
    if X.shape[0] != Y.shape[0]:
        raise UnsupportedPairingError("linear-time MMD needs equal sample sizes")
    m = X.shape[0] // 2
    if m < 1:
        raise ValueError("linear-time MMD needs at least 2 points per sample")
    sigma = check_bandwidth(sigma)
    x1, x2 = X[0:2 * m:2], X[1:2 * m:2]
    y1, y2 = Y[0:2 * m:2], Y[1:2 * m:2]

    def k(a, b):
        return np.exp(-np.sum((a - b) ** 2, axis=1) / (2.0 * sigma**2))

    return k(x1, x2) + k(y1, y2) - k(x1, y2) - k(x2, y1)


def mmd2_linear(X, Y, sigma: float) -> float:
    return float(mmd_linear_terms(X, Y, sigma).mean())
