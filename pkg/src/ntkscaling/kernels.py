"""Kernel families: shallow ReLU NTK/covariance, ReLU^q, deep ReLU, empirical MF.

Every kernel is written in terms of the extended-input geometry
``x~ = (sigma_w x, sigma_b)``: norms ``r = |x~|`` and the angle ``phi`` between
two extended inputs.  Scalar helpers take one pair of points; the ``gram``
methods of the kernel specs evaluate whole matrices with the same formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import cdist

COS_TOL = 1e-12
QUAD_RTOL = 1e-8


class QuadratureError(RuntimeError):
    pass


class NumericalInstabilityError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Extended-input norms and angle; fields may be broadcastable arrays."""

    r: Union[float, np.ndarray]
    r_prime: Union[float, np.ndarray]
    phi: Union[float, np.ndarray]


def _check_sigmas(sigma_w, sigma_b):
    if not sigma_w > 0:
        raise ValueError(f"sigma_w must be positive, got {sigma_w}")
    if not sigma_b > 0:
        raise ValueError(f"sigma_b must be positive (bias-free kernels are not supported), got {sigma_b}")


def extended_norm(X, sigma_w, sigma_b) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.sqrt(sigma_w**2 * (X**2).sum(-1) + sigma_b**2)


def _angle(cos, sq_chord):
    """Angle from its cosine and squared chord ``|u - v|^2`` of the unit vectors.

    The chord form is used for acute angles, where arccos loses precision.
    """
    cos = np.clip(cos, -1.0, 1.0)
    half = np.sqrt(np.clip(sq_chord, 0.0, 4.0)) / 2
    return np.where(cos > 0, 2 * np.arcsin(np.minimum(half, 1.0)), np.arccos(cos))


def _check_cos(cos):
    excess = np.max(np.abs(cos)) - 1.0 if np.size(cos) else 0.0
    if excess > COS_TOL:
        raise NumericalInstabilityError(f"cosine outside [-1, 1] by {excess:.3e}")


def geometry(x, x_prime, sigma_w: float = 1.0, sigma_b: float = 1.0) -> Geometry:
    """Geometry of a single pair of d-vectors."""
    _check_sigmas(sigma_w, sigma_b)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != xp.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xp.shape}")
    r = float(extended_norm(x, sigma_w, sigma_b))
    rp = float(extended_norm(xp, sigma_w, sigma_b))
    cos = (sigma_w**2 * x @ xp + sigma_b**2) / (r * rp)
    _check_cos(cos)
    chord = (sigma_w**2 * ((x - xp) ** 2).sum() - (r - rp) ** 2) / (r * rp)
    return Geometry(r, rp, float(_angle(cos, chord)))


def pair_geometry(X, Y=None, sigma_w: float = 1.0, sigma_b: float = 1.0) -> Geometry:
    """Geometry for all pairs of rows: r is (n, 1), r_prime is (1, m), phi is (n, m)."""
    _check_sigmas(sigma_w, sigma_b)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    same = Y is None
    Y = X if same else np.atleast_2d(np.asarray(Y, dtype=float))
    r = extended_norm(X, sigma_w, sigma_b)[:, None]
    rp = extended_norm(Y, sigma_w, sigma_b)[None, :]
    rr = r * rp
    cos = (sigma_w**2 * X @ Y.T + sigma_b**2) / rr
    _check_cos(cos)
    chord = (sigma_w**2 * cdist(X, Y, "sqeuclidean") - (r - rp) ** 2) / rr
    if same:
        # X @ X.T from BLAS is not bitwise symmetric
        cos = (cos + cos.T) / 2
        chord = (chord + chord.T) / 2
    phi = _angle(cos, chord)
    if same:
        np.fill_diagonal(phi, 0.0)
    return Geometry(r, rp, phi)


def _relu_j1(phi):
    return np.sin(phi) + np.cos(phi) * (np.pi - phi)


def ntk_shallow_relu(geom: Geometry, sigma_w: float = 1.0):
    """Shallow ReLU NTK and output covariance, returned as ``(theta, sigma)``."""
    pref = sigma_w**2 / (2 * np.pi) * (geom.r * geom.r_prime)
    phi = geom.phi
    sig = pref * _relu_j1(phi)
    theta = sig + pref * np.cos(phi) * (np.pi - phi)
    return theta, sig


# ---------------------------------------------------------------------------
# ReLU^q moments

def relu_moment_diag(s: float) -> float:
    """``<(z)_+^{2s}>`` for standard normal z; finite for s > -1/2."""
    if not s > -0.5:
        raise ValueError(f"diagonal moment <(z)_+^(2s)> diverges for s={s} <= -1/2")
    return 2 ** (s - 1) * special.gamma(s + 0.5) / np.sqrt(np.pi)


def _moment_integral_quad(s: float, phi: float) -> float:
    # I_s in the y = cos(psi) form; y^s (1-y)^(-1/2) handled exactly by the QAWS weight
    c = np.cos(phi)
    one_minus_c = 2 * np.sin(phi / 2) ** 2

    def f(y):
        return (1 + y) ** -0.5 * (one_minus_c + c * (1 - y)) ** (-(s + 1))

    val, err = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(s, -0.5),
                              epsabs=0.0, epsrel=1e-11, limit=400)
    if not np.isfinite(val) or err > QUAD_RTOL * abs(val):
        raise QuadratureError(f"moment quadrature failed for s={s}, phi={phi}: "
                              f"value {val}, error estimate {err}")
    return val


def _moment_integral_hyp(s: float, phi: np.ndarray) -> np.ndarray:
    # I_s = B(s+1, 1/2) (1-cos)^{-(s+1)} 2F1(1/2, s+1; s+3/2; -(1+cos)/(1-cos))
    half = phi / 2
    one_minus_c = 2 * np.sin(half) ** 2
    z = -1.0 / np.tan(half) ** 2
    return special.beta(s + 1, 0.5) * one_minus_c ** (-(s + 1)) * special.hyp2f1(0.5, s + 1, s + 1.5, z)


SMALL_PHI = 1e-8


def _moment_small_phi(s: float, phi: np.ndarray) -> np.ndarray:
    # large-|z| connection formula of the hypergeometric form; both 2F1 factors are
    # 1 + O(phi^2) and dropped.  The h^(2s+1) term matters only for s < 1/2 and its
    # prefactor has a pole at s = 1/2, so it is omitted from there on.
    h = phi / 2
    out = relu_moment_diag(s) * np.cos(h) ** (2 * s)
    if s < 0.5:
        amp = 2**s * special.gamma(s + 1) ** 2 * special.gamma(-s - 0.5) / (2 * np.pi**1.5)
        out = out + amp * np.sin(h) ** (2 * s + 1) / np.cos(h)
    return out


def relu_moment(s: float, phi, method: str = "hyp"):
    """Normalized moment ``J_s(phi)`` with ``<(z)_+^s (z')_+^s> = r^s r'^s J_s(phi)``.

    ``method="quad"`` uses adaptive quadrature (scalar phi only),
    ``method="hyp"`` the Gauss hypergeometric closed form (vectorized).
    phi == 0 always takes the closed-form diagonal moment, and
    ``0 < phi < SMALL_PHI`` a small-angle expansion (relative error below 1e-12),
    where the hypergeometric factors overflow.
    """
    if not s > -1:
        raise ValueError(f"moment order must exceed -1, got {s}")
    phi = np.asarray(phi, dtype=float)
    out = np.empty_like(phi)
    diag = phi == 0
    if diag.any():
        out[diag] = relu_moment_diag(s)
    small = (phi > 0) & (phi < SMALL_PHI)
    if small.any():
        out[small] = _moment_small_phi(s, phi[small])
    off = ~(diag | small)
    if off.any():
        p = phi[off]
        if method == "quad":
            integral = np.array([_moment_integral_quad(s, float(v)) for v in p])
        elif method == "hyp":
            integral = _moment_integral_hyp(s, p)
        else:
            raise ValueError(f"unknown method {method!r}")
        out[off] = special.gamma(s + 1) * np.sin(p) ** (2 * s + 1) * integral / (2 * np.pi)
    return out if out.ndim else float(out)


def _check_q(q):
    if not q > 0.5:
        raise ValueError(f"ReLU^q NTK diverges on the diagonal for q <= 1/2 (got q={q})")


def ntk_relu_q(geom: Geometry, q: float, sigma_w: float = 1.0, method: str = "quad",
               return_cov: bool = False):
    """NTK of the shallow network with activation ``(z)_+^q``.

    ``Theta_q = sigma_w^2 <z_+^q z'_+^q> + sigma_w^2 (r r' cos phi) q^2 <z_+^{q-1} z'_+^{q-1}>``.
    """
    _check_q(q)
    r, rp, phi = geom.r, geom.r_prime, geom.phi
    phi_arr = np.broadcast_to(np.asarray(phi, dtype=float), np.broadcast(r, rp, phi).shape)
    if method == "quad" and phi_arr.ndim:
        j_q = np.vectorize(lambda p: relu_moment(q, p, "quad"))(phi_arr)
        j_qm = np.vectorize(lambda p: relu_moment(q - 1, p, "quad"))(phi_arr)
    else:
        j_q = relu_moment(q, phi_arr, method)
        j_qm = relu_moment(q - 1, phi_arr, method)
    rr = r * rp
    cov = sigma_w**2 * rr**q * j_q
    theta = cov + sigma_w**2 * rr * np.cos(phi_arr) * q**2 * rr ** (q - 1) * j_qm
    if not np.ndim(theta):
        theta, cov = float(theta), float(cov)
    return (theta, cov) if return_cov else theta


# ---------------------------------------------------------------------------
# deep ReLU

def deep_relu_layers(geom: Geometry, depth: int, sigma_w: float = 1.0, sigma_b: float = 1.0):
    """Layer-by-layer NTK recursion.

    Returns a list of dicts (one per layer l = 1..depth) with keys
    ``r``, ``r_prime``, ``phi``, ``sigma`` and ``theta``.  Hidden layers carry a
    bias; the scalar output layer does not, so ``depth=2`` is the shallow network.
    """
    if depth < 2:
        raise ValueError(f"depth must be >= 2, got {depth}")
    r, rp, phi = geom.r, geom.r_prime, np.asarray(geom.phi, dtype=float)
    sig = r * rp * np.cos(phi)
    theta = sig
    layers = [dict(r=r, r_prime=rp, phi=phi, sigma=sig, theta=theta)]
    for l in range(1, depth):
        last = l + 1 == depth
        pre = sigma_w**2 / (2 * np.pi)
        sig = pre * (r * rp) * _relu_j1(phi) + (0.0 if last else sigma_b**2)
        theta = sig + theta * pre * (np.pi - phi)
        if last:
            r_next = sigma_w / np.sqrt(2) * r
            rp_next = sigma_w / np.sqrt(2) * rp
            layers.append(dict(r=r_next, r_prime=rp_next, phi=None, sigma=sig, theta=theta))
            break
        r_next = np.sqrt(sigma_w**2 / 2 * r**2 + sigma_b**2)
        rp_next = np.sqrt(sigma_w**2 / 2 * rp**2 + sigma_b**2)
        cos = sig / (r_next * rp_next)
        _check_cos(cos)
        phi_next = np.arccos(np.clip(cos, -1.0, 1.0))
        # coincident inputs stay coincident in every layer
        phi_next = np.where((phi == 0) & (r == rp), 0.0, phi_next)
        r, rp, phi = r_next, rp_next, phi_next
        layers.append(dict(r=r, r_prime=rp, phi=phi, sigma=sig, theta=theta))
    return layers


def ntk_deep_relu(x, x_prime, depth: int, sigma_w: float = 1.0, sigma_b: float = 1.0) -> float:
    geom = geometry(x, x_prime, sigma_w, sigma_b)
    return float(deep_relu_layers(geom, depth, sigma_w, sigma_b)[-1]["theta"])


# ---------------------------------------------------------------------------
# empirical mean-field kernel

def _split_params(params):
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[0] < 1 or params.shape[1] < 3:
        raise ValueError("MF parameter set must be an (N, d+2) array of (c, w, b) rows with N >= 1")
    return params[:, 0], params[:, 1:-1], params[:, -1]


def mf_gram(params, X, Y=None) -> np.ndarray:
    c, w, b = _split_params(params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    N = c.size
    zx = X @ w.T + b
    zy = zx if Y is X else Y @ w.T + b
    relu_part = np.maximum(zx, 0) @ np.maximum(zy, 0).T
    step_part = ((zx > 0) * c**2) @ (zy > 0).T.astype(float)
    return (relu_part + step_part * (1 + X @ Y.T)) / N


def ntk_mf_empirical(params, x, x_prime) -> float:
    """``(1/N) sum_i [(w_i.x+b_i)_+ (w_i.x'+b_i)_+ + c_i^2 (1+x.x') H H]``."""
    return float(mf_gram(params, np.atleast_2d(x), np.atleast_2d(x_prime))[0, 0])


# ---------------------------------------------------------------------------
# kernel specs

@dataclass(frozen=True)
class ShallowReluNtk:
    sigma_w: float = 1.0
    sigma_b: float = 1.0

    def gram(self, X, Y=None):
        return ntk_shallow_relu(pair_geometry(X, Y, self.sigma_w, self.sigma_b), self.sigma_w)[0]


@dataclass(frozen=True)
class ShallowReluCov:
    sigma_w: float = 1.0
    sigma_b: float = 1.0

    def gram(self, X, Y=None):
        return ntk_shallow_relu(pair_geometry(X, Y, self.sigma_w, self.sigma_b), self.sigma_w)[1]


@dataclass(frozen=True)
class ReluPowerQ:
    q: float
    sigma_w: float = 1.0
    sigma_b: float = 1.0

    def __post_init__(self):
        _check_q(self.q)

    def gram(self, X, Y=None):
        geom = pair_geometry(X, Y, self.sigma_w, self.sigma_b)
        return ntk_relu_q(geom, self.q, self.sigma_w, method="hyp")


@dataclass(frozen=True)
class DeepRelu:
    depth: int
    sigma_w: float = 1.0
    sigma_b: float = 1.0

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")

    def gram(self, X, Y=None):
        geom = pair_geometry(X, Y, self.sigma_w, self.sigma_b)
        return deep_relu_layers(geom, self.depth, self.sigma_w, self.sigma_b)[-1]["theta"]


@dataclass(frozen=True, eq=False)
class MfEmpirical:
    params: np.ndarray

    def __post_init__(self):
        _split_params(self.params)

    @property
    def N(self) -> int:
        return np.atleast_2d(self.params).shape[0]

    def gram(self, X, Y=None):
        return mf_gram(self.params, X, Y)


KernelSpec = Union[ShallowReluNtk, ShallowReluCov, ReluPowerQ, DeepRelu, MfEmpirical]

_KINDS = {
    "shallow_relu_ntk": ShallowReluNtk,
    "shallow_relu_cov": ShallowReluCov,
    "relu_power_q": ReluPowerQ,
    "deep_relu": DeepRelu,
}


def kernel_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, MfEmpirical):
        return {"kind": "mf_empirical", "N": spec.N}
    kind = next(k for k, cls in _KINDS.items() if isinstance(spec, cls))
    out = {"kind": kind, "sigma_w": spec.sigma_w, "sigma_b": spec.sigma_b}
    if isinstance(spec, ReluPowerQ):
        out["q"] = spec.q
    if isinstance(spec, DeepRelu):
        out["depth"] = spec.depth
    return out


def kernel_from_dict(cfg: dict) -> KernelSpec:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "mf_empirical":
        from .trainer import load_checkpoint

        return MfEmpirical(load_checkpoint(cfg["checkpoint"]))
    if kind not in _KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return _KINDS[kind](**cfg)


def kernel_value(spec: KernelSpec, x, x_prime) -> float:
    return float(spec.gram(np.atleast_2d(x), np.atleast_2d(x_prime))[0, 0])


# ---------------------------------------------------------------------------
# diagonal singularities

@dataclass(frozen=True)
class SingularityInfo:
    """Leading diagonal singularity ``A(x) * phi^degree``.

    ``amplitude`` maps an (n, d) array of points to A(x); it is None when only
    the degree is known.
    """

    degree: float
    amplitude: Optional[Callable[[np.ndarray], np.ndarray]]
    note: str = ""


def relu_q_amplitude_constant(q: float) -> float:
    """``a_q = Gamma(q)^2 Gamma(1/2 - q) / (sqrt(pi) 2^q)``; a_1 = -1."""
    if float(q - 0.5).is_integer() and q > 0:
        raise ValueError(f"half-integer q={q} has no diagonal singularity")
    return float(special.gamma(q) ** 2 * special.gamma(0.5 - q) / (np.sqrt(np.pi) * 2**q))


def _deep_amplitude(x, depth, sigma_w, sigma_b):
    # Theta_sing^{(l+1)} = -(1/2pi) Theta_diag^{(l)} phi_l + (sigma_w^2/2) Theta_sing^{(l)},
    # with phi_l expressed through phi_1 by the isotropic part of the angle recursion
    r = extended_norm(x, sigma_w, sigma_b)
    r2 = r**2
    theta_diag = r2.copy()
    ratio = np.ones_like(r)
    amp = np.zeros_like(r)
    for l in range(1, depth):
        amp = -theta_diag * ratio / (2 * np.pi) + sigma_w**2 / 2 * amp
        last = l + 1 == depth
        r2_next = sigma_w**2 / 2 * r2 + (0.0 if last else sigma_b**2)
        theta_diag = r2_next + sigma_w**2 / 2 * theta_diag
        ratio = ratio * np.sqrt(sigma_w**2 * r2 / (2 * r2_next))
        r2 = r2_next
    return amp


def singularity_info(spec: KernelSpec) -> SingularityInfo:
    if isinstance(spec, ShallowReluNtk):
        sw, sb = spec.sigma_w, spec.sigma_b
        return SingularityInfo(1.0, lambda x: -sw**2 * extended_norm(x, sw, sb) ** 2 / (2 * np.pi),
                               "NTK: -(sigma_w^2 r^2 / 2pi) phi")
    if isinstance(spec, ShallowReluCov):
        sw, sb = spec.sigma_w, spec.sigma_b
        return SingularityInfo(3.0, lambda x: sw**2 * extended_norm(x, sw, sb) ** 2 / (6 * np.pi),
                               "covariance: (sigma_w^2 r^2 / 6pi) phi^3")
    if isinstance(spec, ReluPowerQ):
        sw, sb, q = spec.sigma_w, spec.sigma_b, spec.q
        a_q = relu_q_amplitude_constant(q)
        return SingularityInfo(2 * q - 1,
                               lambda x: sw**2 / (2 * np.pi) * extended_norm(x, sw, sb) ** (2 * q) * q**2 * a_q,
                               f"ReLU^q NTK, a_q = {a_q:.6g}")
    if isinstance(spec, DeepRelu):
        L, sw, sb = spec.depth, spec.sigma_w, spec.sigma_b
        return SingularityInfo(1.0, lambda x: _deep_amplitude(np.atleast_2d(x), L, sw, sb),
                               "deep ReLU: amplitude in phi_1 units, radial part of the angle recursion ignored")
    if isinstance(spec, MfEmpirical):
        return SingularityInfo(1.0, None, "empirical only: degree 1, amplitude depends on the parameter density")
    raise TypeError(f"no singularity metadata for {type(spec).__name__}")
