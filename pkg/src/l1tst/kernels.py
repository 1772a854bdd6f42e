"""Isotropic Gaussian kernel and the ME / SCF feature maps.

The kernel is ``k(x, y) = exp(-||x - y||^2 / (2 sigma^2))``. The SCF features
act on the scaled input ``x / sigma`` with smoothing function
``f(u) = exp(-||u||^2 / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def check_bandwidth(sigma: float) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"bandwidth must be positive and finite, got {sigma}")
    return sigma


@dataclass(frozen=True)
class TestLocations:
    """J test locations (rows of ``locations``) together with a bandwidth."""

    __test__ = False  # not a pytest class

    locations: np.ndarray
    sigma: float

    def __post_init__(self):
        locs = np.atleast_2d(np.asarray(self.locations, dtype=float))
        if locs.ndim != 2:
            raise ValueError("locations must be a J x d matrix")
        if not np.all(np.isfinite(locs)):
            raise ValueError("locations contain non-finite values")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "sigma", check_bandwidth(self.sigma))

    @property
    def J(self) -> int:
        return self.locations.shape[0]

    @property
    def d(self) -> int:
        return self.locations.shape[1]


def _as_points(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected a vector or an n x d matrix")
    if d is not None and x.shape[1] != d:
        raise ValueError(f"dimension mismatch: got {x.shape[1]}, expected {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def gaussian_kernel(x, y, sigma: float) -> float:
    """Gaussian kernel between two points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("input contains non-finite values")
    sigma = check_bandwidth(sigma)
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma**2)))


def sq_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    xx = np.einsum("ij,ij->i", X, X)
    yy = np.einsum("ij,ij->i", Y, Y)
    D = xx[:, None] + yy[None, :] - 2.0 * (X @ Y.T)
    np.maximum(D, 0.0, out=D)
    return D


def gaussian_gram(X, Y, sigma: float) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Y[j])``."""
    X = _as_points(X)
    Y = _as_points(Y, X.shape[1])
    sigma = check_bandwidth(sigma)
    return np.exp(-sq_distances(X, Y) / (2.0 * sigma**2))


def me_features(X, locations: TestLocations) -> np.ndarray:
    """Row i holds ``(k(x_i, T_1), ..., k(x_i, T_J))``; shape n x J."""
    X = _as_points(X, locations.d)
    D = sq_distances(X, locations.locations)
    return np.exp(-D / (2.0 * locations.sigma**2))


def scf_features(X, locations: TestLocations) -> np.ndarray:
    """Row i holds ``cos(T_j . u_i) f(u_i)`` for all j then ``sin(T_j . u_i) f(u_i)``
    for all j, with ``u_i = x_i / sigma``; shape n x 2J."""
    X = _as_points(X, locations.d)
    U = X / locations.sigma
    f = np.exp(-0.5 * np.einsum("ij,ij->i", U, U))[:, None]
    A = U @ locations.locations.T
    return np.hstack([np.cos(A) * f, np.sin(A) * f])


def me_feature(x, locations: TestLocations) -> np.ndarray:
    return me_features(x, locations)[0]


def scf_feature(x, locations: TestLocations) -> np.ndarray:
    return scf_features(x, locations)[0]


FEATURE_MAPS = {"ME": me_features, "SCF": scf_features}


def feature_map(family: str):
    try:
        return FEATURE_MAPS[family.upper()]
    except KeyError:
        raise ValueError(f"unknown test family {family!r}; use 'ME' or 'SCF'") from None


def median_heuristic(Z, max_points: int = 1000, seed: int = 0) -> float:
    """Median pairwise distance, computed on at most ``max_points`` rows."""
    Z = _as_points(Z)
    if Z.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(Z.shape[0], max_points, replace=False)
        Z = Z[idx]
    if Z.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    D = sq_distances(Z, Z)
    iu = np.triu_indices(Z.shape[0], k=1)
    return float(np.sqrt(np.median(D[iu])))
