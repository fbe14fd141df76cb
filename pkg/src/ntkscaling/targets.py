"""Initial-error functions g on a dataset and their eigenbasis coefficients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .distributions import Dataset, make_rng
from .kernels import KernelSpec, ShallowReluCov
from .spectral import SpectralDecomposition

log = logging.getLogger(__name__)

JITTER_REL = 1e-10
JITTER_ESCALATIONS = 3


@dataclass(frozen=True)
class BallIndicator:
    """``g(x) = jump * 1{|x| < radius}`` (ball centered at the origin)."""

    radius: float
    jump: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.jump == 0:
            raise ValueError("jump must be nonzero")


@dataclass(frozen=True)
class GpDraw:
    """One realization of a zero-mean GP with the given covariance kernel.

    ``sampler`` is ``"cholesky"`` (exact draw) or ``"wide-network"`` (outputs of a
    freshly initialized NTK-parametrized shallow net of width ``width``).
    """

    covariance: KernelSpec = field(default_factory=ShallowReluCov)
    seed: int = 0
    sampler: str = "cholesky"
    width: Optional[int] = None

    def __post_init__(self):
        if self.sampler not in ("cholesky", "wide-network"):
            raise ValueError(f"unknown GP sampler {self.sampler!r}")
        if self.sampler == "wide-network":
            if not isinstance(self.covariance, ShallowReluCov):
                raise ValueError("wide-network sampler realizes the shallow ReLU covariance only")
            if not self.width or self.width < 1:
                raise ValueError("wide-network sampler needs a positive width")


TargetSpec = Union[BallIndicator, GpDraw]


def _points(dataset) -> np.ndarray:
    return dataset.points if isinstance(dataset, Dataset) else np.atleast_2d(np.asarray(dataset, dtype=float))


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter I``, escalating the jitter x10 on failure."""
    M = K.shape[0]
    jitter = JITTER_REL * np.trace(K) / M
    for attempt in range(JITTER_ESCALATIONS + 1):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(M))
            log.info("Cholesky succeeded with jitter %.3e", jitter)
            return L, jitter
        except np.linalg.LinAlgError:
            if attempt == JITTER_ESCALATIONS:
                break
            jitter *= 10
    raise np.linalg.LinAlgError(f"Cholesky failed after {JITTER_ESCALATIONS} jitter escalations "
                                f"(final jitter {jitter:.3e})")


def realize_target(spec: TargetSpec, dataset) -> np.ndarray:
    """Values of g on the dataset points."""
    X = _points(dataset)
    if isinstance(spec, BallIndicator):
        return spec.jump * (np.linalg.norm(X, axis=1) < spec.radius).astype(float)
    if isinstance(spec, GpDraw):
        if spec.sampler == "cholesky":
            L, _ = cholesky_with_jitter(spec.covariance.gram(X))
            z = make_rng(spec.seed, 2).standard_normal(X.shape[0])
            return L @ z
        from .trainer import forward, init

        cov = spec.covariance
        net = init("ntk", spec.width, X.shape[1], cov.sigma_w, cov.sigma_b, spec.seed)
        return forward(net, X)
    raise TypeError(f"unknown target spec {type(spec).__name__}")


@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """Expansion coefficients ``c`` and their tail sums ``s_n = sum_{k>=n} c_k^2``."""

    c: np.ndarray
    s: np.ndarray


def expansion_coefficients(g, decomp: SpectralDecomposition) -> CoefficientProfile:
    """``c_n = v_n . g / sqrt(M)`` so that ``sum c_n^2 = |g|^2 / M``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (decomp.M,):
        raise ValueError(f"target has shape {g.shape}, decomposition has M = {decomp.M}")
    c = decomp.eigenvectors.T @ g / np.sqrt(decomp.M)
    s = np.cumsum((c**2)[::-1])[::-1]
    return CoefficientProfile(c, s)
