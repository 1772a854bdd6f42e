"""Covariance assembly and the regularized inverse square root."""

from __future__ import annotations

import numpy as np

SINGULAR_TOL = 1e-12
RESIDUAL_TOL = 1e-8


class NearSingularError(np.linalg.LinAlgError):
    """Smallest eigenvalue of the regularized matrix is below the threshold."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf appeared in a matrix or its decomposition."""


def empirical_covariance(features) -> np.ndarray:
    """Unbiased (n - 1) sample covariance of the rows of ``features``."""
    Z = np.asarray(features, dtype=float)
    if Z.ndim != 2:
        raise ValueError("features must be an n x k matrix (one vector per row)")
    n = Z.shape[0]
    if n < 2:
        raise ValueError("covariance needs at least 2 feature vectors")
    Zc = Z - Z.mean(axis=0)
    C = Zc.T @ Zc / (n - 1)
    return 0.5 * (C + C.T)


def pooled_covariance(cov_x, cov_y, n1: int, n2: int) -> np.ndarray:
    """``cov_x / rho + cov_y / (1 - rho)`` with ``rho = n1 / (n1 + n2)``."""
    cov_x = np.asarray(cov_x, dtype=float)
    cov_y = np.asarray(cov_y, dtype=float)
    if cov_x.shape != cov_y.shape:
        raise ValueError(f"shape mismatch: {cov_x.shape} vs {cov_y.shape}")
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least 2 points")
    t = n1 + n2
    return (t / n1) * cov_x + (t / n2) * cov_y


def regularized_eigh(m, gamma: float = 0.0, singular_tol: float = SINGULAR_TOL):
    """Eigendecomposition of ``m + gamma I`` with the singularity checks.

    Returns ``(eigenvalues, eigenvectors)`` of the regularized matrix.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError("matrix contains NaN or Inf")
    sym = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(sym)
    if not (np.all(np.isfinite(evals)) and np.all(np.isfinite(evecs))):
        raise NonFiniteError("eigendecomposition produced NaN or Inf")
    evals = evals + gamma
    if evals[0] < singular_tol:
        raise NearSingularError(
            f"smallest regularized eigenvalue {evals[0]:.3e} below {singular_tol:.0e}"
        )
    return evals, evecs


def regularized_inv_sqrt(
    m,
    gamma: float = 0.0,
    singular_tol: float = SINGULAR_TOL,
    residual_tol: float | None = RESIDUAL_TOL,
) -> np.ndarray:
    """Symmetric ``(m + gamma I)^{-1/2}`` via the spectral map ``lam -> lam^{-1/2}``.

    With ``residual_tol`` set, the relative Frobenius residual of
    ``R R (m + gamma I) - I`` is checked and a ``NearSingularError`` raised when
    it is exceeded (the matrix is numerically singular).
    """
    evals, evecs = regularized_eigh(m, gamma, singular_tol)
    R = (evecs * evals**-0.5) @ evecs.T
    R = 0.5 * (R + R.T)
    if not np.all(np.isfinite(R)):
        raise NonFiniteError("inverse square root is not finite")
    if residual_tol is not None:
        k = R.shape[0]
        reg = np.asarray(m, dtype=float) + gamma * np.eye(k)
        res = np.linalg.norm(R @ R @ reg - np.eye(k)) / np.sqrt(k)
        if not res < residual_tol:
            raise NearSingularError(f"inverse square root residual {res:.2e} exceeds {residual_tol:.0e}")
    return R
