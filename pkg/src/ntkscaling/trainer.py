"""Finite-width shallow ReLU networks trained by full-batch gradient descent.

Two parametrizations share one parameter layout ``(W1, b1, W2)``:

* ``"ntk"``: ``f(x) = sum_j (sigma_w / sqrt(N)) W2_j relu(sigma_w W1_j . x + sigma_b b1_j)``
* ``"mf"``:  ``f(x) = (1/N) sum_j c_j relu(w_j . x + b_j)`` with ``(c, w, b) = (W2, W1, b1)``

In MF mode the parameter step is ``eta * N * grad L`` so that, in function
space, both modes follow ``f <- f - eta * A (f - y)`` with ``A = K / M`` and
``K`` the kernel analysed in :mod:`ntkscaling.kernels` (the MF kernel is
``N`` times the gradient Gram matrix).  Learning rates are therefore
comparable with ``critical_lr`` of the matching evolution operator.

The ReLU derivative at 0 is taken to be 0.

Checkpoint format: an ``(N, d+2)`` array of ``(c, w_1..w_d, b)`` rows, stored
as ``.npy`` or as whitespace-separated text (any other suffix).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .distributions import Dataset, make_rng
from .spectral import SpectralDecomposition

log = logging.getLogger(__name__)

PARAMETRIZATIONS = ("ntk", "mf")


@dataclass(eq=False)
class ShallowNet:
    parametrization: str
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    sigma_w: float = 1.0
    sigma_b: float = 1.0

    def __post_init__(self):
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")

    @property
    def N(self) -> int:
        return self.W2.size

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "ShallowNet":
        return ShallowNet(self.parametrization, self.W1.copy(), self.b1.copy(), self.W2.copy(),
                          self.sigma_w, self.sigma_b)

    def flat(self) -> np.ndarray:
        """Parameters as one vector ``(W1.ravel(), b1, W2)``."""
        return np.concatenate([self.W1.ravel(), self.b1, self.W2])

    def set_flat(self, theta: np.ndarray) -> None:
        N, d = self.W1.shape
        self.W1 = theta[: N * d].reshape(N, d).copy()
        self.b1 = theta[N * d: N * d + N].copy()
        self.W2 = theta[N * d + N:].copy()

    def params_rows(self) -> np.ndarray:
        """``(c, w, b)`` rows; the checkpoint layout."""
        return np.column_stack([self.W2, self.W1, self.b1])


def init(parametrization: str, N: int, d: int, sigma_w: float = 1.0, sigma_b: float = 1.0,
         seed: int = 0) -> ShallowNet:
    """All parameters i.i.d. standard normal, drawn from the seed's stream 3."""
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    rng = make_rng(seed, 3)
    W1 = rng.standard_normal((N, d))
    b1 = rng.standard_normal(N)
    W2 = rng.standard_normal(N)
    return ShallowNet(parametrization, W1, b1, W2, float(sigma_w), float(sigma_b))


def _points(x) -> np.ndarray:
    if isinstance(x, Dataset):
        return x.points
    return np.atleast_2d(np.asarray(x, dtype=float))


def _preact(net: ShallowNet, X: np.ndarray) -> np.ndarray:
    if net.parametrization == "ntk":
        return net.sigma_w * X @ net.W1.T + net.sigma_b * net.b1
    return X @ net.W1.T + net.b1


def _out_scale(net: ShallowNet) -> float:
    return net.sigma_w / np.sqrt(net.N) if net.parametrization == "ntk" else 1.0 / net.N


def _input_scales(net: ShallowNet):
    return (net.sigma_w, net.sigma_b) if net.parametrization == "ntk" else (1.0, 1.0)


def forward(net: ShallowNet, x):
    X = _points(x)
    out = _out_scale(net) * np.maximum(_preact(net, X), 0) @ net.W2
    return out if np.ndim(x) > 1 or isinstance(x, Dataset) else float(out[0])


def jacobian(net: ShallowNet, x) -> np.ndarray:
    """``(n, P)`` matrix of output gradients in the :meth:`ShallowNet.flat` layout."""
    X = _points(x)
    z = _preact(net, X)
    s = _out_scale(net)
    sx, sb = _input_scales(net)
    G = s * (z > 0) * net.W2
    dW1 = sx * G[:, :, None] * X[:, None, :]
    return np.hstack([dW1.reshape(X.shape[0], -1), sb * G, s * np.maximum(z, 0)])


def grad(net: ShallowNet, x) -> np.ndarray:
    """Gradient of the scalar output at a single point."""
    return jacobian(net, np.atleast_2d(np.asarray(x, dtype=float)).reshape(1, -1))[0]


def empirical_ntk(net: ShallowNet, dataset, Y=None) -> np.ndarray:
    """Gram matrix of output gradients, assembled without forming the Jacobian."""
    X = _points(dataset)
    Yp = X if Y is None else _points(Y)
    zx, zy = _preact(net, X), _preact(net, Yp)
    s = _out_scale(net)
    sx, sb = _input_scales(net)
    relu = np.maximum(zx, 0) @ np.maximum(zy, 0).T
    steps = ((zx > 0) * net.W2**2) @ (zy > 0).T.astype(float)
    K = s**2 * (relu + steps * (sx**2 * X @ Yp.T + sb**2))
    if Y is None:
        K = np.triu(K) + np.triu(K, 1).T
    return K


def function_kernel(net: ShallowNet, dataset) -> np.ndarray:
    """Kernel driving function-space GD (``empirical_ntk`` times N in MF mode)."""
    K = empirical_ntk(net, dataset)
    return K * net.N if net.parametrization == "mf" else K


def critical_lr(decomp) -> float:
    """``eta_c = 2 / lambda_0`` for a decomposition or a top eigenvalue."""
    lam0 = decomp.eigenvalues[0] if isinstance(decomp, SpectralDecomposition) else float(decomp)
    if not lam0 > 0:
        raise ValueError(f"top eigenvalue must be positive, got {lam0}")
    return 2.0 / lam0


def loss(net: ShallowNet, X: np.ndarray, y: np.ndarray) -> float:
    e = forward(net, X) - y
    return 0.5 * float(e @ e) / X.shape[0]


def loss_grad(net: ShallowNet, X: np.ndarray, y: np.ndarray):
    """``(L, dW1, db1, dW2)`` for ``L = (1/2M) sum (f(x_i) - y_i)^2``."""
    M = X.shape[0]
    z = _preact(net, X)
    a = np.maximum(z, 0)
    s = _out_scale(net)
    sx, sb = _input_scales(net)
    e = s * a @ net.W2 - y
    G = (e[:, None] * (z > 0)) * (s * net.W2) / M
    return (0.5 * float(e @ e) / M, sx * G.T @ X, sb * G.sum(0), s * a.T @ e / M)


@dataclass
class TrainLog:
    losses: np.ndarray
    eta: float
    snapshots: dict = field(default_factory=dict)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.losses.size)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.steps, self.losses]), delimiter=",",
                   header="step,loss", comments="", fmt=["%d", "%.17g"])


def train(net: ShallowNet, dataset, targets, eta: float, steps: int,
          snapshot_steps: Iterable[int] = (), stop_below: Optional[float] = None) -> TrainLog:
    """Full-batch GD, updating ``net`` in place.

    ``losses[k]`` is the loss after ``k`` steps (``steps + 1`` entries, fewer
    when the loss drops below ``stop_below``).  ``snapshots`` maps each
    requested step to a copy of the network.
    """
    if not eta > 0:
        raise ValueError(f"learning rate must be positive, got {eta}")
    X = _points(dataset)
    y = np.asarray(targets, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError(f"targets have shape {y.shape}, expected ({X.shape[0]},)")
    want = set(int(s) for s in snapshot_steps)
    scale = eta * (net.N if net.parametrization == "mf" else 1.0)
    losses = np.empty(steps + 1)
    snaps = {}
    for k in range(steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            L, dW1, db1, dW2 = loss_grad(net, X, y)
        if not np.isfinite(L):
            raise FloatingPointError(f"training diverged: non-finite loss at step {k} (eta={eta:.4g})")
        losses[k] = L
        if k in want:
            snaps[k] = net.copy()
        if k == steps or (stop_below is not None and L < stop_below):
            losses = losses[: k + 1]
            break
        net.W1 -= scale * dW1
        net.b1 -= scale * db1
        net.W2 -= scale * dW2
    return TrainLog(losses, float(eta), snaps)


def save_checkpoint(net_or_params, path) -> Path:
    path = Path(path)
    rows = net_or_params.params_rows() if isinstance(net_or_params, ShallowNet) else np.asarray(net_or_params)
    if path.suffix == ".npy":
        np.save(path, rows)
    else:
        np.savetxt(path, rows, fmt="%.17g")
    return path


def load_checkpoint(path) -> np.ndarray:
    path = Path(path)
    rows = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] < 3:
        raise ValueError(f"checkpoint {path} must hold (c, w, b) rows, got shape {rows.shape}")
    return rows


def net_from_checkpoint(path, parametrization: str = "mf", sigma_w: float = 1.0,
                        sigma_b: float = 1.0) -> ShallowNet:
    rows = load_checkpoint(path)
    return ShallowNet(parametrization, rows[:, 1:-1].copy(), rows[:, -1].copy(), rows[:, 0].copy(),
                      sigma_w, sigma_b)
