"""Empirical evolution operator, its eigendecomposition, loss curves and power-law fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .distributions import Dataset

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-14
MIN_FIT_POINTS = 10


def build_operator_matrix(dataset, kernel) -> np.ndarray:
    """``A_ij = Theta(x_i, x_j) / M`` for the empirical measure of the dataset.

    The upper triangle is mirrored, so the result is exactly symmetric.
    """
    X = dataset.points if isinstance(dataset, Dataset) else np.atleast_2d(dataset)
    M = X.shape[0]
    if M < 1:
        raise ValueError("empty dataset")
    K = np.asarray(kernel.gram(X), dtype=float)
    bad = ~np.isfinite(K)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise FloatingPointError(f"non-finite kernel value {K[i, j]} at (i, j) = ({i}, {j})")
    A = np.triu(K) / M
    A += np.triu(A, 1).T
    return A


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs sorted by decreasing eigenvalue; columns of ``eigenvectors`` match."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_clamped: int = 0

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def M(self) -> int:
        return self.eigenvalues.size


def eigendecompose(matrix) -> SpectralDecomposition:
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        asym = np.abs(A - A.T).max()
        if asym > 1e-12 * max(np.abs(A).max(), 1e-300):
            raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        A = (A + A.T) / 2
    try:
        w, V = scipy.linalg.eigh(A, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(
            f"eigendecomposition failed for {A.shape[0]}x{A.shape[0]} matrix "
            f"(finite: {np.isfinite(A).all()}, trace {np.trace(A):.4g}): {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    neg = w < 0
    n_clamped = int(neg.sum())
    if n_clamped:
        worst = w.min()
        if worst < -1e-8 * max(w[0], 0.0):
            log.warning("matrix is not PSD to tolerance: min eigenvalue %.3e vs top %.3e", worst, w[0])
        log.info("clamped %d negative eigenvalues to zero", n_clamped)
        w = np.where(neg, 0.0, w)
    return SpectralDecomposition(w, V, n_clamped)


def counting_function(decomp: SpectralDecomposition, lam: float) -> int:
    """Number of eigenvalues strictly greater than ``lam``."""
    return int(np.count_nonzero(decomp.eigenvalues > lam))


def loss_trajectory(decomp: SpectralDecomposition, coefficients, times,
                    eta: Optional[float] = None) -> np.ndarray:
    """``L(t) = 1/2 sum_n exp(-2 lambda_n t) |c_n|^2``.

    With ``eta`` given, ``times`` are GD step counts and the discrete factor
    ``(1 - eta lambda_n)^(2k)`` replaces the exponential.
    """
    c2 = np.asarray(coefficients, dtype=float) ** 2
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if c2.shape != decomp.eigenvalues.shape:
        raise ValueError("coefficients do not match the decomposition")
    if (t < 0).any():
        raise ValueError("times must be non-negative")
    lam = decomp.eigenvalues
    if eta is None:
        log_decay = -2.0 * np.outer(t, lam)
    else:
        with np.errstate(divide="ignore"):
            log_factor = np.log(np.abs(1.0 - eta * lam))
        log_decay = 2.0 * np.outer(t, log_factor)
        log_decay[t == 0] = 0.0
    with np.errstate(under="ignore"):
        return 0.5 * np.exp(log_decay) @ c2


@dataclass(frozen=True)
class PowerLawFit:
    """``value ~ coefficient * n^(-exponent)`` over ``window`` (half-open)."""

    coefficient: float
    exponent: float
    window: tuple
    residual: float

    def predict(self, n):
        return self.coefficient * np.asarray(n, dtype=float) ** (-self.exponent)


def fit_power_law(sequence, window: Optional[Sequence[int]] = None, x=None) -> PowerLawFit:
    """Least-squares line in (log x, log value).

    By default ``x`` is the index ``n`` of the sequence and ``window = (n_min, n_max)``
    selects ``n_min <= n < n_max``.  With ``x`` given (e.g. times), the window
    still indexes entries of the sequence.
    """
    y = np.asarray(sequence, dtype=float)
    xs = np.arange(y.size, dtype=float) if x is None else np.asarray(x, dtype=float)
    lo, hi = (0, y.size) if window is None else (int(window[0]), int(window[1]))
    if not 0 <= lo < hi <= y.size:
        raise ValueError(f"invalid window [{lo}, {hi}) for sequence of length {y.size}")
    if hi - lo < MIN_FIT_POINTS:
        raise ValueError(f"fit window has {hi - lo} points, need at least {MIN_FIT_POINTS}")
    yw, xw = y[lo:hi], xs[lo:hi]
    if (yw <= 0).any() or (xw <= 0).any():
        raise ValueError("power-law fit needs strictly positive values and abscissae")
    lx, ly = np.log(xw), np.log(yw)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    return PowerLawFit(float(np.exp(intercept)), float(-slope), (lo, hi),
                       float(np.sqrt(np.mean(resid**2))))


def default_window(M: int, d: int) -> tuple:
    return 20 * max(1, d - 1), M // 4


def fit_spectrum(decomp: SpectralDecomposition, window=None, d: Optional[int] = None) -> PowerLawFit:
    """Power-law fit of the eigenvalues, excluding the discretization noise floor."""
    lam = decomp.eigenvalues
    if window is None:
        if d is None:
            raise ValueError("need either a window or the data dimension")
        window = default_window(lam.size, d)
    lo, hi = window
    floor = NOISE_FLOOR * lam[0]
    above = np.flatnonzero(lam > floor)
    hi = min(hi, int(above[-1]) + 1 if above.size else 0)
    return fit_power_law(lam, (lo, hi))
