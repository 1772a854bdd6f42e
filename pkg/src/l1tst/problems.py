"""Seeded generators for the synthetic benchmark problems.

SG    P = Q = N(0, I_d)
GMD   Q = N((1, 0, ..., 0), I_d)
GVD   Q = N(0, diag(2, 1, ..., 1))
Blobs 4 x 4 grid of Gaussians in R^2; P components isotropic, Q components
      stretched and rotated.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .statistics import SampleSet

PROBLEMS = ("SG", "GMD", "GVD", "Blobs")
SIDES = ("P", "Q")


@dataclass(frozen=True)
class BlobsConfig:
    spacing: float = 5.0
    num_per_axis: int = 4
    eig_ratio: float = 2.0
    angle: float = np.pi / 4

    def centers(self) -> np.ndarray:
        g = self.spacing * np.arange(self.num_per_axis)
        return np.array([(a, b) for a in g for b in g], dtype=float)

    def q_covariance(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        R = np.array([[c, -s], [s, c]])
        return R @ np.diag([self.eig_ratio, 1.0]) @ R.T


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int = 2
    blobs: BlobsConfig = BlobsConfig()

    def __post_init__(self):
        name = {p.lower(): p for p in PROBLEMS}.get(str(self.name).lower())
        if name is None:
            raise ValueError(f"unknown problem {self.name!r}; choose from {PROBLEMS}")
        object.__setattr__(self, "name", name)
        if name == "Blobs":
            object.__setattr__(self, "d", 2)
        if int(self.d) < 1:
            raise ValueError("dimension must be at least 1")
        object.__setattr__(self, "d", int(self.d))

    @property
    def h0_holds(self) -> bool:
        return self.name == "SG"


def _rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng([int(seed)] + [zlib.crc32(str(k).encode()) for k in keys])


def _check_side(side: str) -> str:
    side = str(side).upper()
    if side not in SIDES:
        raise ValueError(f"side must be 'P' or 'Q', got {side!r}")
    return side


def _gaussian(rng, n, mean, cov_factor=None):
    Z = rng.standard_normal((n, mean.size))
    if cov_factor is not None:
        Z = Z @ cov_factor.T
    return Z + mean


def sample_problem(spec: ProblemSpec | str, n: int, side: str, seed=0) -> SampleSet:
    """``n`` i.i.d. draws from side ``P`` or ``Q`` of the problem.

    The side is mixed into the seed, so P and Q drawn with one seed are
    independent. The Gaussian problems share their underlying normal draws
    for a given ``(seed, side)``.
    """
    if not isinstance(spec, ProblemSpec):
        spec = ProblemSpec(spec)
    side = _check_side(side)
    if n < 1:
        raise ValueError("n must be at least 1")
    if spec.name == "Blobs":
        rng = _rng(seed, "Blobs", side)
        cfg = spec.blobs
        centers = cfg.centers()
        comp = rng.integers(0, len(centers), size=n)
        factor = np.linalg.cholesky(cfg.q_covariance()) if side == "Q" else None
        data = _gaussian(rng, n, np.zeros(2), factor) + centers[comp]
    else:
        data = _rng(seed, "gaussian", side).standard_normal((n, spec.d))
        if side == "Q" and spec.name == "GMD":
            data[:, 0] += 1.0
        elif side == "Q" and spec.name == "GVD":
            data[:, 0] *= np.sqrt(2.0)
    return SampleSet(data, label=f"{spec.name}(d={spec.d}) side {side} seed {seed}")


def sample_gmd_shift(shift: float, d: int, n: int, side: str, seed=0) -> SampleSet:
    """Mean-shift problem with Q = N((shift, 0, ..., 0), I_d).

    ``shift=1`` reproduces GMD and ``shift=0`` reproduces SG for the same seed.
    """
    side = _check_side(side)
    if n < 1 or d < 1:
        raise ValueError("n and d must be at least 1")
    data = _rng(seed, "gaussian", side).standard_normal((n, d))
    if side == "Q":
        data[:, 0] += shift
    return SampleSet(data, label=f"GMD(shift={shift}, d={d}) side {side} seed {seed}")
