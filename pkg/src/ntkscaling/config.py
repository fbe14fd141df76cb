"""Experiment configuration: YAML loading and static validation.

A config is one YAML mapping.  Keys (defaults in parentheses):

``kind``
    one of :data:`KINDS`.
``seed`` (0)
    dataset seed; also the default seed for the mixture centers and GP draws.
``M``
    dataset size.
``distribution``
    ``{kind: gaussian_mixture, dim, n_g (8), sigma (0.5), seed}``, or
    ``{kind: gaussian_mixture, centers, sigma}``, ``{kind: uniform_cube, dim, half_width}``,
    ``{kind: isotropic_gaussian, dim, sigma}``.
``kernel`` (shallow ReLU NTK)
    ``{kind: shallow_relu_ntk | shallow_relu_cov | relu_power_q | deep_relu | mf_empirical,
    sigma_w, sigma_b, q, depth, checkpoint}``.
``target``
    ``{kind: gp, covariance: <kernel>, n_draws (1), sampler (cholesky), width}`` or
    ``{kind: ball_indicator, radius, jump (1)}``.
``fit_window``
    ``[n_min, n_max)`` eigen-index window for every power-law fit.
``time_grid``
    ``{log10_start, log10_stop, num}``; log-spaced times (or GD steps).
``training``
    ``{width (2000), steps, eta_factor, snapshot_steps, decades (3), fit_steps}``.
``q_values`` / ``depths`` / ``variants``
    sweep lists for ``q-sweep``, ``depth-sweep`` and ``degeneracy``.
``degeneracy``
    ``{top (200), rel_gap (1e-3), seeds ([seed])}``.
``prediction``
    ``{n_surface, n_samples, gp_method (dataset)}``.
``output_dir``
    defaults to ``$NTKSCALING_OUTPUT_ROOT/<config name>`` (root ``./ntkscaling-output``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .distributions import distribution_from_dict
from .kernels import ReluPowerQ, kernel_from_dict, relu_q_amplitude_constant

KINDS = ("spectrum", "coefficients", "linearized-loss", "finite-training", "mf-training",
         "q-sweep", "depth-sweep", "degeneracy")

KIND_HELP = {
    "spectrum": "eigenvalues of one kernel on one dataset, fitted vs predicted (nu, Lambda)",
    "coefficients": "coefficient tails s_n of a target, fitted vs predicted (kappa, K)",
    "linearized-loss": "linearized loss trajectory L(t), fitted vs predicted (xi, C)",
    "finite-training": "GD on a finite NTK-parametrized net vs the linearized trajectory",
    "mf-training": "GD on a mean-field net; NTK spectrum over time and loss exponent",
    "q-sweep": "spectra of ReLU^q NTKs for a list of q",
    "depth-sweep": "spectra of deep ReLU NTKs for a list of depths",
    "degeneracy": "eigenvalue clustering for several data distributions",
}

OUTPUT_ROOT_ENV = "NTKSCALING_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "ntkscaling-output"
COST_WARN_M = 5000

_NEEDS_TARGET = ("coefficients", "linearized-loss", "finite-training", "mf-training")
_NEEDS_TIMES = ("linearized-loss",)


class ConfigError(ValueError):
    pass


@dataclass
class Report:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return bool(self.errors or self.warnings)

    def lines(self):
        return [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]


def load_config(path) -> dict:
    path = Path(path)
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg.setdefault("name", path.stem)
    return cfg


def output_dir(cfg: dict) -> Path:
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    return Path(root) / str(cfg.get("name", cfg.get("kind", "experiment")))


def _writable(path: Path) -> bool:
    p = path
    while not p.exists():
        if p.parent == p:
            return False
        p = p.parent
    return p.is_dir() and os.access(p, os.W_OK)


def _check_kernel(kcfg, where, asymptote, report):
    try:
        k = kernel_from_dict(kcfg)
    except Exception as exc:  # report, never raise
        report.errors.append(f"{where}: {exc}")
        return None
    if asymptote and isinstance(k, ReluPowerQ):
        try:
            relu_q_amplitude_constant(k.q)
        except ValueError as exc:
            report.errors.append(f"{where}: {exc}")
    return k


def validate(cfg: dict) -> Report:
    """Static checks; every problem is listed, nothing is raised."""
    report = Report()
    kind = cfg.get("kind")
    if kind not in KINDS:
        report.errors.append(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
        return report

    M = cfg.get("M")
    if not isinstance(M, int) or M < 1:
        report.errors.append(f"M must be a positive integer, got {M!r}")
    elif M > COST_WARN_M:
        report.warnings.append(f"M={M} > {COST_WARN_M}: dense O(M^3) diagonalization will be slow")

    dists = cfg.get("variants") if kind == "degeneracy" else [cfg.get("distribution")]
    if not dists:
        report.errors.append("no distribution given" if kind != "degeneracy" else "no variants given")
    for i, dcfg in enumerate(dists or []):
        try:
            distribution_from_dict(dcfg)
        except Exception as exc:
            report.errors.append(f"distribution {i}: {exc!r}")

    kcfg = cfg.get("kernel", {"kind": "shallow_relu_ntk"})
    if kind == "q-sweep":
        qs = cfg.get("q_values") or []
        if not qs:
            report.errors.append("q-sweep needs a non-empty q_values list")
        for q in qs:
            _check_kernel({**kcfg, "kind": "relu_power_q", "q": q}, f"q={q}", True, report)
    elif kind == "depth-sweep":
        depths = cfg.get("depths") or []
        if not depths:
            report.errors.append("depth-sweep needs a non-empty depths list")
        for L in depths:
            _check_kernel({**kcfg, "kind": "deep_relu", "depth": L}, f"depth={L}", True, report)
    elif kind not in ("finite-training", "mf-training"):
        _check_kernel(kcfg, "kernel", True, report)

    if kind in _NEEDS_TARGET:
        t = cfg.get("target")
        if not isinstance(t, dict):
            report.errors.append("target missing")
        elif t.get("kind") == "gp":
            _check_kernel(t.get("covariance", {"kind": "shallow_relu_cov"}), "target covariance", True, report)
            if int(t.get("n_draws", 1)) < 1:
                report.errors.append("target n_draws must be >= 1")
        elif t.get("kind") == "ball_indicator":
            if not float(t.get("radius", 0)) > 0:
                report.errors.append("ball_indicator radius must be positive")
        else:
            report.errors.append(f"unknown target kind {t.get('kind')!r}")

    if kind in _NEEDS_TIMES or "time_grid" in cfg:
        tg = cfg.get("time_grid") or {}
        if int(tg.get("num", 0)) < 1:
            report.errors.append("time grid is empty")
        elif not tg.get("log10_stop", 0) > tg.get("log10_start", 0):
            report.errors.append("time grid needs log10_stop > log10_start")

    w = cfg.get("fit_window")
    if w is not None:
        if len(w) != 2 or not 0 <= w[0] < w[1]:
            report.errors.append(f"fit_window must be [n_min, n_max) with 0 <= n_min < n_max, got {w}")
        elif isinstance(M, int) and w[1] > M:
            report.errors.append(f"fit_window end {w[1]} exceeds M={M}")

    if kind in ("finite-training", "mf-training"):
        tr = cfg.get("training") or {}
        if int(tr.get("steps", 0)) < 1:
            report.errors.append("training.steps must be >= 1")
        if int(tr.get("width", 2000)) < 1:
            report.errors.append("training.width must be >= 1")
        if "eta_factor" in tr and not float(tr["eta_factor"]) > 0:
            report.errors.append("training.eta_factor must be positive")

    if not _writable(output_dir(cfg)):
        report.errors.append(f"output directory {output_dir(cfg)} is not writable")
    return report
