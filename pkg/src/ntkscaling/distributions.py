"""Data densities, datasets and Monte-Carlo averages.

All randomness goes through counter-based Philox generators derived from an
integer seed, so every draw is a pure function of ``(spec, M, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

# stream ids under one seed: center placement and point sampling never share a stream
_CENTER_STREAM = 0
_SAMPLE_STREAM = 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; streams are independent."""
    ss = np.random.SeedSequence([int(seed), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Equal-weight mixture of isotropic Gaussians with common width ``sigma``."""

    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.shape[0] < 1:
            raise ValueError("mixture needs at least one center")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "centers", centers)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def pdf(self, x: np.ndarray) -> np.ndarray:
        d2 = ((x[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        norm = (2 * np.pi * self.sigma**2) ** (self.dim / 2)
        return np.exp(-d2 / (2 * self.sigma**2)).mean(axis=1) / norm

    def draw(self, rng: np.random.Generator, M: int) -> np.ndarray:
        k = rng.integers(self.centers.shape[0], size=M)
        return self.centers[k] + self.sigma * rng.standard_normal((M, self.dim))

    def to_dict(self) -> dict:
        return {"kind": "gaussian_mixture", "centers": self.centers.tolist(),
                "sigma": self.sigma}


@dataclass(frozen=True)
class UniformCube:
    """Uniform density on ``[-half_width, half_width]^dim``."""

    half_width: float
    dim: int

    def __post_init__(self):
        if not self.half_width > 0 or self.dim < 1:
            raise ValueError("UniformCube needs half_width > 0 and dim >= 1")

    def pdf(self, x: np.ndarray) -> np.ndarray:
        inside = np.all(np.abs(x) <= self.half_width, axis=1)
        return inside / (2 * self.half_width) ** self.dim

    def draw(self, rng: np.random.Generator, M: int) -> np.ndarray:
        return rng.uniform(-self.half_width, self.half_width, size=(M, self.dim))

    def to_dict(self) -> dict:
        return {"kind": "uniform_cube", "half_width": self.half_width, "dim": self.dim}


@dataclass(frozen=True)
class IsotropicGaussian:
    """Centered isotropic Gaussian ``N(0, sigma^2 I)``."""

    sigma: float
    dim: int

    def __post_init__(self):
        if not self.sigma > 0 or self.dim < 1:
            raise ValueError("IsotropicGaussian needs sigma > 0 and dim >= 1")

    def pdf(self, x: np.ndarray) -> np.ndarray:
        norm = (2 * np.pi * self.sigma**2) ** (self.dim / 2)
        return np.exp(-(x**2).sum(1) / (2 * self.sigma**2)) / norm

    def draw(self, rng: np.random.Generator, M: int) -> np.ndarray:
        return self.sigma * rng.standard_normal((M, self.dim))

    def to_dict(self) -> dict:
        return {"kind": "isotropic_gaussian", "sigma": self.sigma, "dim": self.dim}


DistributionSpec = Union[GaussianMixture, UniformCube, IsotropicGaussian]


def distribution_from_dict(cfg: dict) -> DistributionSpec:
    """Inverse of ``spec.to_dict()``; mixtures may also be given by generator params."""
    kind = cfg["kind"]
    if kind == "gaussian_mixture":
        if "centers" in cfg:
            return GaussianMixture(np.asarray(cfg["centers"], dtype=float), float(cfg["sigma"]))
        return make_mixture(int(cfg["dim"]), int(cfg.get("n_g", 8)),
                            float(cfg.get("sigma", 0.5)), int(cfg.get("seed", 0)))
    if kind == "uniform_cube":
        return UniformCube(float(cfg.get("half_width", 1.0)), int(cfg["dim"]))
    if kind == "isotropic_gaussian":
        return IsotropicGaussian(float(cfg.get("sigma", 1.0)), int(cfg["dim"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    seed: int
    spec: DistributionSpec = field(repr=False)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def make_mixture(d: int, n_g: int, sigma: float, seed: int) -> GaussianMixture:
    """Random mixture: ``n_g`` centers uniform on ``[-1, 1]^d``, common width ``sigma``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = make_rng(seed, _CENTER_STREAM)
    return GaussianMixture(rng.uniform(-1.0, 1.0, size=(n_g, d)), float(sigma))


def _as_points(spec: DistributionSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.dim:
        raise ValueError(f"point dimension {pts.shape[1]} does not match spec dimension {spec.dim}")
    return pts, single


def density(spec: DistributionSpec, x) -> Union[float, np.ndarray]:
    """Evaluate mu at a single d-vector (returns float) or at rows of an (n, d) array."""
    pts, single = _as_points(spec, x)
    val = spec.pdf(pts)
    return float(val[0]) if single else val


def sample(spec: DistributionSpec, M: int, seed: int) -> Dataset:
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    pts = spec.draw(make_rng(seed, _SAMPLE_STREAM), int(M))
    return Dataset(pts, int(seed), spec)


def mc_estimate(values: np.ndarray, points: np.ndarray | None = None) -> tuple[float, float]:
    """Sample mean and its standard error; non-finite values are rejected."""
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        where = f" at point {points[i].tolist()}" if points is not None else ""
        raise FloatingPointError(f"non-finite integrand value {values[i]} (index {i}){where}")
    n = values.size
    se = values.std(ddof=1) / np.sqrt(n) if n > 1 else np.inf
    return float(values.mean()), float(se)


def mc_average(dataset: Dataset, u: Callable[[np.ndarray], np.ndarray],
               return_stderr: bool = False):
    """Estimate <u>_mu by the dataset mean of u.

    ``u`` receives the full ``(M, d)`` point array and must return ``M`` values.
    """
    if dataset.M < 1:
        raise ValueError("empty dataset")
    vals = np.asarray(u(dataset.points), dtype=float)
    if vals.shape == ():
        vals = np.full(dataset.M, float(vals))
    if vals.shape != (dataset.M,):
        raise ValueError(f"u returned shape {vals.shape}, expected ({dataset.M},)")
    mean, se = mc_estimate(vals, dataset.points)
    return (mean, se) if return_stderr else mean
