"""Gradient ascent of the training-split power proxy over locations and bandwidth.

The proxy for the L1 tests is ``||sqrt(t) (Sigma + gamma I)^{-1/2} S||_1``
evaluated on the training split; for the prior-art ME/SCF tests it is the
paired squared-l2 statistic. Parameters are ``theta = (T, log sigma)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import TestLocations, median_heuristic
from .matops import NearSingularError, NonFiniteError, regularized_eigh
from .statistics import DEFAULT_GAMMA, UnsupportedPairingError, as_data, location_statistic

log = logging.getLogger(__name__)

MATRIX_ERRORS = (NearSingularError, NonFiniteError, np.linalg.LinAlgError, FloatingPointError)


@dataclass
class OptimizerConfig:
    max_iters: int = 200
    gamma: float = DEFAULT_GAMMA
    init_strategy: str | None = None  # None picks by family
    seed: int = 0
    fd_step: float = 1e-4
    abort_on_singular: bool = False
    gradient: str = "analytic"  # or "fd"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.fd_step <= 1e-2:
            raise ValueError("fd_step must lie in (0, 1e-2]")
        if self.init_strategy not in (None, "fit-gaussians", "standard-normal"):
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")
        if self.gradient not in ("analytic", "fd"):
            raise ValueError(f"unknown gradient mode {self.gradient!r}")


@dataclass
class Theta:
    locations: np.ndarray
    log_sigma: float

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.log_sigma = float(self.log_sigma)

    @property
    def sigma(self) -> float:
        return float(np.exp(self.log_sigma))

    def to_locations(self) -> TestLocations:
        return TestLocations(self.locations, self.sigma)

    def to_vector(self) -> np.ndarray:
        return np.append(self.locations.ravel(), self.log_sigma)

    @classmethod
    def from_vector(cls, vec, J: int, d: int) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1].reshape(J, d), vec[-1])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.locations)) and np.isfinite(self.log_sigma)
                    and np.isfinite(self.sigma) and self.sigma > 0)


@dataclass
class OptimizationResult:
    theta: Theta
    trace: list = field(default_factory=list)
    n_rollbacks: int = 0


def power_proxy(theta: Theta, Xtr, Ytr, family: str = "ME", gamma: float = DEFAULT_GAMMA,
                norm: str = "L1") -> float:
    """Training-split statistic at ``theta``."""
    return location_statistic(Xtr, Ytr, theta.to_locations(), family, norm, gamma).value


# -- analytic gradient ------------------------------------------------------


def _inv_sqrt_derivative_weights(evals: np.ndarray) -> np.ndarray:
    # divided differences of lam -> lam^{-1/2}; diagonal is -lam^{-3/2} / 2
    r = np.sqrt(evals)
    return -1.0 / (r[:, None] * r[None, :] * (r[:, None] + r[None, :]))


def _l1_pooled_value_and_grads(Zx, Zy, gamma):
    n1, n2 = Zx.shape[0], Zy.shape[0]
    t = n1 + n2
    S = Zx.mean(axis=0) - Zy.mean(axis=0)
    Zxc = Zx - Zx.mean(axis=0)
    Zyc = Zy - Zy.mean(axis=0)
    Sigma = (t / n1) * (Zxc.T @ Zxc) / (n1 - 1) + (t / n2) * (Zyc.T @ Zyc) / (n2 - 1)
    evals, Q = regularized_eigh(Sigma, gamma)
    R = (Q * evals**-0.5) @ Q.T
    v = np.sqrt(t) * (R @ S)
    value = float(np.abs(v).sum())
    s = np.sign(v)
    g_S = np.sqrt(t) * (R @ s)
    P = (Q.T @ np.outer(s, S) @ Q) * _inv_sqrt_derivative_weights(evals)
    H = np.sqrt(t) * (Q @ P @ Q.T)
    H = 0.5 * (H + H.T)
    G_x = g_S[None, :] / n1 + (2.0 * t / (n1 * (n1 - 1))) * (Zxc @ H)
    G_y = -g_S[None, :] / n2 + (2.0 * t / (n2 * (n2 - 1))) * (Zyc @ H)
    return value, G_x, G_y


def _l2_paired_value_and_grads(Zx, Zy, gamma):
    if Zx.shape[0] != Zy.shape[0]:
        raise UnsupportedPairingError("paired objective needs equal sample sizes")
    n = Zx.shape[0]
    z = Zx - Zy
    S = z.mean(axis=0)
    zc = z - S
    evals, Q = regularized_eigh(zc.T @ zc / (n - 1), gamma)
    w = Q @ ((Q.T @ S) / evals)
    value = float(n * S @ w)
    H = -n * np.outer(w, w)
    G = 2.0 * w[None, :] + (2.0 / (n - 1)) * (zc @ H)
    return value, G, -G


class ProxyObjective:
    """Proxy and analytic gradient over a fixed training pair.

    Works on the stacked sample ``[X; Y]`` so features and their pullback are
    computed in one pass per evaluation.
    """

    def __init__(self, Xtr, Ytr, family: str = "ME", gamma: float = DEFAULT_GAMMA, norm: str = "L1"):
        X, Y = as_data(Xtr), as_data(Ytr)
        if X.shape[1] != Y.shape[1]:
            raise ValueError("samples have different dimensions")
        self.W = np.vstack([X, Y])
        self.n1 = X.shape[0]
        self.sq_norms = np.einsum("ij,ij->i", self.W, self.W)
        self.family = family.upper()
        self.gamma = gamma
        self.norm = norm.upper()
        if self.family not in ("ME", "SCF"):
            raise ValueError(f"unknown test family {family!r}")
        if self.norm == "L2" and self.n1 != Y.shape[0]:
            raise UnsupportedPairingError("paired objective needs equal sample sizes")

    def _features(self, T, sigma):
        W = self.W
        if self.family == "ME":
            D = np.maximum(self.sq_norms[:, None] + np.einsum("ij,ij->i", T, T)[None, :] - 2.0 * (W @ T.T), 0.0)
            return np.exp(-D / (2.0 * sigma**2)), D
        U = W / sigma
        A = U @ T.T
        f = np.exp(-0.5 * self.sq_norms / sigma**2)[:, None]
        return np.hstack([np.cos(A) * f, np.sin(A) * f]), (U, A)

    def _pullback(self, T, sigma, Z, aux, G):
        """``d obj / d Z`` (N x k) to ``(d obj / d T, d obj / d log sigma)``."""
        if self.family == "ME":
            D = aux
            P = G * Z
            grad_T = (P.T @ self.W - P.sum(axis=0)[:, None] * T) / sigma**2
            return grad_T, float((P * D).sum() / sigma**2)
        U, A = aux
        J = T.shape[0]
        C, Sn = Z[:, :J], Z[:, J:]
        M = G[:, J:] * C - G[:, :J] * Sn
        grad_T = M.T @ U
        r = self.sq_norms / sigma**2
        return grad_T, float(-(A * M).sum() + r @ (G * Z).sum(axis=1))

    def value_and_grad(self, theta: Theta):
        T, sigma = theta.locations, theta.sigma
        Z, aux = self._features(T, sigma)
        Zx, Zy = Z[:self.n1], Z[self.n1:]
        if self.norm == "L1":
            value, G_x, G_y = _l1_pooled_value_and_grads(Zx, Zy, self.gamma)
        else:
            value, G_x, G_y = _l2_paired_value_and_grads(Zx, Zy, self.gamma)
        grad_T, grad_ls = self._pullback(T, sigma, Z, aux, np.vstack([G_x, G_y]))
        return value, np.append(grad_T.ravel(), grad_ls)


def proxy_value_and_grad(theta: Theta, Xtr, Ytr, family: str = "ME", gamma: float = DEFAULT_GAMMA,
                         norm: str = "L1"):
    """Proxy value and its analytic gradient as a flat vector (locations, log sigma).

    At points where a component of the normalized vector is exactly zero the
    subgradient ``sign(0) = 0`` is used.
    """
    return ProxyObjective(Xtr, Ytr, family, gamma, norm).value_and_grad(theta)


# -- finite differences ------------------------------------------------------


def fd_gradient(func, x0, step: float = 1e-4) -> np.ndarray:
    """Central differences with per-coordinate step ``step * max(1, |x_i|)``.

    Coordinates where ``func`` raises or returns a non-finite value get NaN.
    """
    x0 = np.asarray(x0, dtype=float)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        h = step * max(1.0, abs(x0[i]))
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        try:
            grad[i] = (func(xp) - func(xm)) / (2.0 * h)
        except MATRIX_ERRORS:
            grad[i] = np.nan
    return grad


def proxy_gradient(theta: Theta, Xtr, Ytr, family: str = "ME", gamma: float = DEFAULT_GAMMA,
                   fd_step: float = 1e-4, norm: str = "L1") -> np.ndarray:
    """Finite-difference gradient of the proxy, flat (locations, log sigma)."""
    J, d = theta.locations.shape

    def f(vec):
        return power_proxy(Theta.from_vector(vec, J, d), Xtr, Ytr, family, gamma, norm)

    return fd_gradient(f, theta.to_vector(), fd_step)


# -- initialization -----------------------------------------------------------


def _fit_gaussian_draws(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n, d = Z.shape
    mean = Z.mean(axis=0)
    if n >= d + 1:
        cov = np.cov(Z, rowvar=False, ddof=1).reshape(d, d)
        evals, evecs = np.linalg.eigh(cov)
        factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    else:
        factor = np.diag(Z.std(axis=0, ddof=1) if n > 1 else np.zeros(d))
    draws = mean + rng.standard_normal((k, d)) @ factor.T
    return draws


def initial_log_sigma(Xtr, Ytr, seed: int = 0) -> float:
    med = median_heuristic(np.vstack([as_data(Xtr), as_data(Ytr)]), seed=seed)
    return float(np.log(med)) if med > 0 else 0.0


def init_theta(Xtr, Ytr, J: int, family: str = "ME", seed: int = 0, strategy: str | None = None) -> Theta:
    """Starting point for the ascent.

    ME: locations drawn alternately from Gaussians fitted to X and to Y
    (diagonal fit when n < d + 1). SCF: frequencies from N(0, I).
    The bandwidth starts at the median pairwise distance of the pooled sample.
    """
    X, Y = as_data(Xtr), as_data(Ytr)
    d = X.shape[1]
    rng = np.random.default_rng(seed)
    if strategy is None:
        strategy = "fit-gaussians" if family.upper() == "ME" else "standard-normal"
    if strategy == "fit-gaussians":
        nx = (J + 1) // 2
        T = np.empty((J, d))
        T[0::2] = _fit_gaussian_draws(X, nx, rng)
        T[1::2] = _fit_gaussian_draws(Y, J - nx, rng)
        if not np.all(np.isfinite(T)):
            warnings.warn("degenerate fitted covariance; using standard-normal locations")
            T = rng.standard_normal((J, d))
    else:
        T = rng.standard_normal((J, d))
    return Theta(T, initial_log_sigma(X, Y, seed))


# -- ascent -------------------------------------------------------------------


def optimize_theta(Xtr, Ytr, J: int, family: str = "ME", config: OptimizerConfig | None = None,
                   norm: str = "L1", theta0: Theta | None = None) -> OptimizationResult:
    """Gradient ascent with step ``g / (||g|| sqrt(it))``; returns the best theta seen.

    A step whose evaluation fails (singular covariance, non-finite values) is
    rolled back; with ``abort_on_singular`` the loop stops there.
    """
    config = config or OptimizerConfig()
    family = family.upper()
    X, Y = as_data(Xtr), as_data(Ytr)
    if theta0 is None:
        theta0 = init_theta(X, Y, J, family, config.seed, config.init_strategy)
    J, d = theta0.locations.shape

    if config.gradient == "analytic":
        value_and_grad = ProxyObjective(X, Y, family, config.gamma, norm).value_and_grad
    else:
        def value_and_grad(th):
            return (power_proxy(th, X, Y, family, config.gamma, norm),
                    proxy_gradient(th, X, Y, family, config.gamma, config.fd_step, norm))

    theta = theta0
    try:
        value, grad = value_and_grad(theta)
    except MATRIX_ERRORS:
        log.warning("proxy undefined at initialization; returning it unchanged")
        return OptimizationResult(theta0, [float("nan")])
    best_theta, best_value = theta, value
    result = OptimizationResult(theta0, [value])
    vec = theta.to_vector()
    for it in range(1, config.max_iters + 1):
        gnorm = np.linalg.norm(grad)
        if not np.isfinite(gnorm) or gnorm == 0.0:
            break
        cand_vec = vec + grad / (gnorm * np.sqrt(it))
        cand = Theta.from_vector(cand_vec, J, d)
        try:
            if not cand.is_finite():
                raise NonFiniteError("non-finite parameters")
            cand_value, cand_grad = value_and_grad(cand)
            if not np.isfinite(cand_value):
                raise NonFiniteError("non-finite proxy")
        except MATRIX_ERRORS as exc:
            result.n_rollbacks += 1
            log.debug("iteration %d rolled back: %s", it, exc)
            if config.abort_on_singular:
                break
            continue
        vec, value, grad = cand_vec, cand_value, cand_grad
        result.trace.append(value)
        if value > best_value:
            best_theta, best_value = cand, value
    result.theta = best_theta
    return result


def grid_search_sigma(locations, Xtr, Ytr, family: str = "ME", gamma: float = DEFAULT_GAMMA,
                      sigma0: float | None = None, powers=range(-2, 3), norm: str = "L1") -> Theta:
    """Fixed locations; bandwidth picked from ``sigma0 * 2**k`` by the proxy."""
    X, Y = as_data(Xtr), as_data(Ytr)
    if sigma0 is None:
        sigma0 = float(np.exp(initial_log_sigma(X, Y)))
    best, best_value = None, -np.inf
    for k in powers:
        theta = Theta(locations, np.log(sigma0 * 2.0**k))
        try:
            value = power_proxy(theta, X, Y, family, gamma, norm)
        except MATRIX_ERRORS:
            continue
        if value > best_value:
            best, best_value = theta, value
    if best is None:
        best = Theta(locations, np.log(sigma0))
    return best
