"""Closed-form asymptotics: eigenvalue law, coefficient tails and the loss law.

Conventions.  The evolution operator acts on ``L^2(mu)``; in the symmetric
representation the initial error is ``mu^{1/2} g`` where ``g`` is the raw error
function realized on the dataset.  Jumps and covariance singularities of ``g``
therefore enter the loss integrals with one extra factor of ``mu(x)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .distributions import Dataset, make_rng, mc_estimate
from .kernels import (
    KernelSpec,
    ReluPowerQ,
    ShallowReluNtk,
    extended_norm,
    singularity_info,
)

log = logging.getLogger(__name__)

MC_WARN_REL = 0.05
GP_WARN_REL = 0.10
CROSS_CHECK_REL = 1e-6


# ---------------------------------------------------------------------------
# constants

def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"singularity degree must be positive, got {alpha}")
    half = alpha / 2
    if float(half).is_integer():
        raise ValueError(f"Gamma(-alpha/2) has a pole at alpha={alpha}")


def c_fourier(d: int, alpha: float) -> float:
    """Coefficient of the regularized Fourier transform ``|z|^alpha -> c |k|^{-d-alpha}``."""
    _check_alpha(alpha)
    return float(2 ** (d + alpha) * np.pi ** (d / 2) * special.gamma((d + alpha) / 2)
                 / special.gamma(-alpha / 2))


def gamma_const(d: int, alpha: float) -> float:
    """Normalized volume ``(2pi)^{-d} |{k : c |k|^{-d-alpha} > 1}|``."""
    _check_alpha(alpha)
    inner = special.gamma((d + alpha) / 2) / (np.pi ** (alpha / 2) * abs(special.gamma(-alpha / 2)))
    return float(inner ** (d / (d + alpha)) / special.gamma(d / 2 + 1))


def unit_sphere_area(d: int) -> float:
    """Surface area ``S_{d-1}`` of the unit sphere in R^d."""
    return float(2 * np.pi ** (d / 2) / special.gamma(d / 2))


def gamma_x(x, alpha: float, amplitude, sigma_w: float, sigma_b: float):
    """Local Weyl volume for the singularity ``A(x) phi^alpha`` at the rows of ``x``.

    ``amplitude`` is an array of A values or a callable on points.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    d = X.shape[1]
    A = np.asarray(amplitude(X) if callable(amplitude) else amplitude, dtype=float)
    if np.any(A == 0):
        raise ValueError("gamma_x needs a nonzero amplitude")
    r = extended_norm(X, sigma_w, sigma_b)
    p = d / (d + alpha)
    out = (np.abs(A) ** p * gamma_const(d, alpha) * sigma_w ** (alpha * p)
           * sigma_b ** (alpha / (d + alpha)) * r ** (-(alpha * d + alpha) / (d + alpha)))
    return out if np.ndim(x) > 1 else float(np.ravel(out)[0])


def fourier_singularity_value(x, alpha: float, amplitude, n, sigma_w: float, sigma_b: float):
    """Fourier transform of ``A(x) phi(x, x+z)^alpha`` at the unit vector(s) ``n``.

    The component of ``n`` along ``x`` is stretched by ``r(x)/sigma_b``.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    N = np.atleast_2d(np.asarray(n, dtype=float))
    X, N = np.broadcast_arrays(X, N)
    d = X.shape[1]
    A = np.asarray(amplitude(X) if callable(amplitude) else amplitude, dtype=float)
    r = extended_norm(X, sigma_w, sigma_b)
    xn = np.linalg.norm(X, axis=1)
    safe = np.where(xn > 0, xn, 1.0)
    along = np.where(xn > 0, (N * X).sum(1) / safe, 0.0)
    unit_x = X / safe[:, None]
    n_prime = N + ((r / sigma_b - 1) * along)[:, None] * unit_x
    val = (A * (sigma_w / r) ** alpha * c_fourier(d, alpha)
           * np.linalg.norm(n_prime, axis=1) ** (-d - alpha) / (sigma_b / r))
    return val if (np.ndim(x) > 1 or np.ndim(n) > 1) else float(val[0])


def uniform_sphere(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sphere_integral_closed(x, sigma_w: float, sigma_b: float) -> float:
    """``int_{|n|=1} |n'|^{-d} dS = (sigma_b / r(x)) S_{d-1}``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(sigma_b / extended_norm(x, sigma_w, sigma_b) * unit_sphere_area(x.size))


def sphere_integral_mc(x, sigma_w: float, sigma_b: float, n_samples: int = 10**6,
                       seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo estimate (and standard error) of ``int_{|n|=1} |n'|^{-d} dS``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    n = uniform_sphere(d, n_samples, make_rng(seed, 7))
    r = float(extended_norm(x, sigma_w, sigma_b))
    xn = np.linalg.norm(x)
    if xn > 0:
        u = x / xn
        n = n + ((r / sigma_b - 1) * (n @ u))[:, None] * u
    mean, se = mc_estimate(np.linalg.norm(n, axis=1) ** (-d))
    area = unit_sphere_area(d)
    return mean * area, se * area


# ---------------------------------------------------------------------------
# exponents and the loss law

def exponents(scenario: str, d: int, alpha: float, beta: Optional[float] = None):
    """``(nu, kappa, xi)`` with ``xi = kappa / nu`` computed from the same floats."""
    nu = 1 + alpha / d
    if scenario == "indicator":
        kappa = 1 / d
    elif scenario == "gp":
        if beta is None:
            raise ValueError("GP scenario needs the covariance degree beta")
        kappa = beta / d
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return nu, kappa, kappa / nu


def loss_asymptote(Lambda, nu, K, kappa, t):
    """``L(t) ~ (K/2) Gamma(kappa/nu + 1) (2 Lambda t)^{-kappa/nu}``."""
    for name, v in (("Lambda", Lambda), ("nu", nu), ("K", K), ("kappa", kappa)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    a = kappa / nu
    return K / 2 * special.gamma(a + 1) * (2 * Lambda * np.asarray(t, dtype=float)) ** (-a)


def direct_loss_sum(Lambda, nu, K, kappa, t, n_max: int = 10**7, chunk: int = 10**6):
    """``1/2 sum_{n>=1} exp(-2 lambda_n t)(s_n - s_{n+1})`` for exact power laws.

    Terms up to ``n_max`` are summed directly; the remainder is the integral
    tail, a lower incomplete Gamma function.
    """
    t = float(t)
    total = 0.0
    for start in range(1, n_max + 1, chunk):
        n = np.arange(start, min(start + chunk, n_max + 1), dtype=float)
        ds = K * (n ** (-kappa) - (n + 1) ** (-kappa))
        total += float(np.exp(-2 * Lambda * t * n ** (-nu)) @ ds)
    a = kappa / nu
    z_end = 2 * Lambda * t * (n_max + 1) ** (-nu)
    tail = kappa * K / nu * (2 * Lambda * t) ** (-a) * special.gamma(a) * special.gammainc(a, z_end)
    return 0.5 * (total + tail)


# ---------------------------------------------------------------------------
# eigenvalue law

@dataclass
class EigenvalueLaw:
    nu: float
    Lambda: float
    integral: float
    integral_se: float
    closed_form: Optional[float] = None
    notes: list = field(default_factory=list)


def _sigmas(kernel):
    return kernel.sigma_w, kernel.sigma_b


def lambda_integral(kernel: KernelSpec, dataset: Dataset) -> tuple[float, float]:
    """``<gamma_x mu^{-alpha/(d+alpha)}>_mu`` over the dataset, with standard error."""
    info = singularity_info(kernel)
    if info.amplitude is None:
        raise ValueError(f"{type(kernel).__name__} has no amplitude; Lambda cannot be predicted")
    X = dataset.points
    d = X.shape[1]
    alpha = info.degree
    sw, sb = _sigmas(kernel)
    mu = dataset.spec.pdf(X)
    vals = gamma_x(X, alpha, info.amplitude, sw, sb) * mu ** (-alpha / (d + alpha))
    return mc_estimate(vals, X)


def lambda_closed_form(kernel: KernelSpec, dataset: Dataset) -> Optional[float]:
    """Published closed forms for the shallow ReLU and ReLU^q coefficients (cross-checks)."""
    X = dataset.points
    d = X.shape[1]
    mu = dataset.spec.pdf(X)
    if isinstance(kernel, ShallowReluNtk):
        sw, sb = _sigmas(kernel)
        r = extended_norm(X, sw, sb)
        avg = np.mean(mu ** (-1 / (d + 1)) * r ** ((d - 1) / (d + 1)))
        return float(sw**3 * sb ** (1 / d) / (2 * np.pi) ** 2 * special.gamma((d + 1) / 2)
                     * special.gamma(d / 2 + 1) ** (-(1 + 1 / d)) * avg ** (1 + 1 / d))
    if isinstance(kernel, ReluPowerQ):
        sw, sb, q = kernel.sigma_w, kernel.sigma_b, kernel.q
        a = 2 * q - 1
        r = extended_norm(X, sw, sb)
        avg = np.mean(mu ** (-a / (d + a)) * r ** ((2 * d - a * d - a) / (d + a)))
        return float(sw ** (a + 2) * sb ** (a / d) * q**2 * (2 * np.pi) ** (d + q - 2)
                     * special.gamma((d + a) / 2) * special.gamma(q) ** 2
                     / special.gamma(d / 2 + 1) ** ((d + a) / d) * avg ** ((d + a) / d))
    return None


def eigenvalue_asymptote(kernel: KernelSpec, dataset: Dataset) -> EigenvalueLaw:
    """Predicted ``lambda_n ~ Lambda n^{-nu}``; Lambda from the local Weyl volumes."""
    info = singularity_info(kernel)
    d = dataset.dim
    nu = 1 + info.degree / d
    notes = []
    if info.amplitude is None:
        notes.append("amplitude unknown: only nu predicted")
        return EigenvalueLaw(nu, float("nan"), float("nan"), float("nan"), None, notes)
    integral, se = lambda_integral(kernel, dataset)
    Lam = integral**nu
    notes.append(f"Lambda from <gamma_x mu^(-alpha/(d+alpha))>_mu over M={dataset.M} points, "
                 f"relative standard error {se / integral:.2e}")
    if se / integral > MC_WARN_REL:
        notes.append("WARNING: Monte-Carlo relative standard error above 5%")
    closed = lambda_closed_form(kernel, dataset)
    if closed is not None:
        rel = abs(closed - Lam) / Lam
        if rel > CROSS_CHECK_REL:
            notes.append(f"closed-form Lambda {closed:.6g} disagrees with compositional value "
                         f"by {rel:.3e} (relative)")
            log.warning("closed-form Lambda disagrees with compositional value by %.3e", rel)
        else:
            notes.append("closed-form Lambda agrees with compositional value")
    return EigenvalueLaw(nu, Lam, integral, se, closed, notes)


# ---------------------------------------------------------------------------
# loss coefficients

@dataclass
class LossCoefficient:
    xi: float
    C: float
    integral: float
    integral_se: float
    notes: list = field(default_factory=list)


def loss_coefficient_indicator(kernel: KernelSpec, mu_spec, radius: float, jump: float = 1.0,
                               n_surface: int = 10**5, seed: int = 0) -> LossCoefficient:
    """Loss law for ``g = jump * 1{|x| < radius}``.

    ``C = Gamma(xi+1) 2^{-xi} / (2 pi) * int_{|x|=radius} mu jump^2 (mu theta~_x(n))^{-xi} dS``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    info = singularity_info(kernel)
    if info.amplitude is None:
        raise ValueError("kernel amplitude unknown")
    d = mu_spec.dim
    alpha = info.degree
    _, _, xi = exponents("indicator", d, alpha)
    sw, sb = _sigmas(kernel)
    n = uniform_sphere(d, n_surface, make_rng(seed, 5))
    x = radius * n
    mu = mu_spec.pdf(x)
    theta = fourier_singularity_value(x, alpha, info.amplitude, n, sw, sb)
    area = unit_sphere_area(d) * radius ** (d - 1)
    mean, se = mc_estimate(mu * jump**2 * (mu * theta) ** (-xi), x)
    S, S_se = mean * area, se * area
    C = special.gamma(xi + 1) * 2 ** (-xi) / (2 * np.pi) * S
    notes = [f"surface integral from {n_surface} uniform sphere samples, relative SE {S_se / S:.2e}"]
    if S_se / S > MC_WARN_REL:
        notes.append("WARNING: surface-integral relative standard error above 5%")
    return LossCoefficient(xi, float(C), float(S), float(S_se), notes)


def _multivariate_cauchy(d, n, scale, rng):
    g = rng.standard_normal((n, d))
    chi = np.abs(rng.standard_normal(n))
    return scale * g / chi[:, None]


def _multivariate_cauchy_pdf(x, scale):
    d = x.shape[1]
    c = special.gamma((1 + d) / 2) / (special.gamma(0.5) * np.pi ** (d / 2) * scale**d)
    return c * (1 + (x**2).sum(1) / scale**2) ** (-(1 + d) / 2)


def gp_x_integrand(ntk: KernelSpec, cov: KernelSpec, mu_spec, x: np.ndarray) -> np.ndarray:
    """Integrand over R^d after the analytic sphere integration.

    ``mu * P (mu Q)^{-xi} (sigma_b / r) S_{d-1}`` with ``theta~ = Q |n'|^{-d-alpha}``
    and ``zeta~ = P |n'|^{-d-beta}``.
    """
    ti, ci = singularity_info(ntk), singularity_info(cov)
    sw, sb = _sigmas(ntk)
    d = x.shape[1]
    _, _, xi = exponents("gp", d, ti.degree, ci.degree)
    r = extended_norm(x, sw, sb)
    Q = ti.amplitude(x) * (sw / r) ** ti.degree * c_fourier(d, ti.degree) / (sb / r)
    P = ci.amplitude(x) * (sw / r) ** ci.degree * c_fourier(d, ci.degree) / (sb / r)
    mu = mu_spec.pdf(x)
    # mu^(1-xi) rather than mu (mu Q)^(-xi): no overflow where mu underflows
    return mu ** (1 - xi) * P * Q ** (-xi) * (sb / r) * unit_sphere_area(d)


def loss_coefficient_gp(ntk: KernelSpec, cov: KernelSpec, dataset: Dataset, seed: int = 0,
                        n_samples: int = 2 * 10**5, method: str = "dataset",
                        density_floor: float = 1e-6) -> LossCoefficient:
    """Loss law for a GP initial error with covariance ``cov`` trained under ``ntk``.

    ``method="dataset"`` averages ``integrand / mu`` over the dataset points,
    dropping points with ``mu < density_floor * max mu``.  Since the integrand
    scales like ``mu^(1-xi)``, low-density regions (where the asymptotic regime
    starts only at very small eigenvalues) are effectively cut off; this matches
    what finite-M spectra show.  ``method="defensive"`` estimates the full R^d
    integral (the n -> infinity constant) by importance sampling from an equal
    mixture of mu and a multivariate Cauchy, whose weights stay bounded in the tails.
    """
    ti, ci = singularity_info(ntk), singularity_info(cov)
    if ti.amplitude is None or ci.amplitude is None:
        raise ValueError("both kernels need known singular amplitudes")
    if _sigmas(ntk) != _sigmas(cov):
        raise ValueError("NTK and covariance must share (sigma_w, sigma_b) for the sphere integral")
    mu_spec = dataset.spec
    d = dataset.dim
    nu, kappa, xi = exponents("gp", d, ti.degree, ci.degree)
    notes = []
    if method == "dataset":
        X = dataset.points
        mu = mu_spec.pdf(X)
        keep = mu >= density_floor * mu.max()
        vals = np.where(keep, gp_x_integrand(ntk, cov, mu_spec, X) / np.where(keep, mu, 1.0), 0.0)
        est, se = mc_estimate(vals, X)
        notes.append(f"x-integral: dataset importance sampling, {int((~keep).sum())} of {X.shape[0]} "
                     f"points below density floor {density_floor:g} * max mu dropped")
    elif method == "defensive":
        rng = make_rng(seed, 6)
        scale = max(1.0, float(np.sqrt((dataset.points**2).sum(1).mean() / d)))
        half = n_samples // 2
        xs = np.vstack([mu_spec.draw(rng, half), _multivariate_cauchy(d, n_samples - half, scale, rng)])
        q = 0.5 * mu_spec.pdf(xs) + 0.5 * _multivariate_cauchy_pdf(xs, scale)
        est, se = mc_estimate(gp_x_integrand(ntk, cov, mu_spec, xs) / q, xs)
        notes.append(f"x-integral: {n_samples} defensive importance samples (mu + Cauchy, scale {scale:.3g})")
    else:
        raise ValueError(f"unknown method {method!r}")
    rel = se / est if est else np.inf
    notes.append(f"x-integral relative standard error {rel:.2e}")
    if rel > GP_WARN_REL:
        notes.append("WARNING: x-integral relative standard error above 10%")
    beta = ci.degree
    C = special.gamma(xi + 1) * 2 ** (-xi) / (2 * (2 * np.pi) ** d * beta) * est
    return LossCoefficient(xi, float(C), float(est), float(se), notes)


def coefficient_asymptote(scenario: str, coefficient: LossCoefficient, d: int, alpha: float,
                          lambda_int: float, beta: Optional[float] = None):
    """``(kappa, K)`` for the tail sums ``s_n ~ K n^{-kappa}``.

    ``coefficient`` is the output of the matching loss-coefficient routine and
    ``lambda_int`` the integral ``<gamma_x mu^{-alpha/(d+alpha)}>_mu``.
    """
    _, kappa, _ = exponents(scenario, d, alpha, beta)
    if scenario == "indicator":
        q_coef = coefficient.integral / np.pi
    else:
        q_coef = coefficient.integral / ((2 * np.pi) ** d * beta)
    return kappa, float(q_coef * lambda_int**kappa)


def tail_partial_sum(scenario: str, coefficient: LossCoefficient, d: int, alpha: float, lam,
                     beta: Optional[float] = None):
    """Predicted ``Q(lambda) = sum_{lambda_n < lambda} c_n^2`` for small lambda."""
    _, _, xi = exponents(scenario, d, alpha, beta)
    q_coef = (coefficient.integral / np.pi if scenario == "indicator"
              else coefficient.integral / ((2 * np.pi) ** d * beta))
    return q_coef * np.asarray(lam, dtype=float) ** xi


# ---------------------------------------------------------------------------
# full prediction

@dataclass
class AsymptoticPrediction:
    nu: float
    Lambda: float
    kappa: float
    K: float
    xi: float
    C: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.xi != self.kappa / self.nu:
            raise ValueError("xi must equal kappa / nu")

    def loss(self, t):
        return self.C * np.asarray(t, dtype=float) ** (-self.xi)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def predict(scenario: str, ntk: KernelSpec, dataset: Dataset, *, radius: float = 1.0,
            jump: float = 1.0, cov: Optional[KernelSpec] = None, seed: int = 0,
            n_surface: int = 10**5, n_samples: int = 2 * 10**5,
            gp_method: str = "dataset") -> AsymptoticPrediction:
    """All six asymptotic constants for one configured experiment."""
    eig = eigenvalue_asymptote(ntk, dataset)
    alpha = singularity_info(ntk).degree
    d = dataset.dim
    if scenario == "indicator":
        lc = loss_coefficient_indicator(ntk, dataset.spec, radius, jump, n_surface, seed)
        beta = None
    elif scenario == "gp":
        if cov is None:
            raise ValueError("GP scenario needs the covariance kernel")
        lc = loss_coefficient_gp(ntk, cov, dataset, seed, n_samples, method=gp_method)
        beta = singularity_info(cov).degree
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    kappa, K = coefficient_asymptote(scenario, lc, d, alpha, eig.integral, beta)
    nu = eig.nu
    xi = kappa / nu
    # C reproduced through the loss law from (Lambda, K) equals lc.C up to rounding
    C = float(loss_asymptote(eig.Lambda, nu, K, kappa, 1.0))
    prov = {
        "nu": "1 + alpha/d",
        "Lambda": eig.notes,
        "Lambda_closed_form": eig.closed_form,
        "kappa": "1/d" if scenario == "indicator" else "beta/d",
        "K": f"tail coefficient times Lambda-integral^kappa (integral SE {eig.integral_se:.3g})",
        "xi": "kappa/nu",
        "C": lc.notes + [f"direct loss coefficient {lc.C:.6g}"],
    }
    return AsymptoticPrediction(nu, eig.Lambda, kappa, K, xi, C, prov)
