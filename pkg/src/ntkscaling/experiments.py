"""Config-driven experiments: each kind writes CSV artifacts and a JSON summary.

CSV files start with a ``# ntkscaling-artifact <name> v<version>`` line followed
by a header row.  Every experiment writes ``fits.csv`` (one row per fitted
quantity with its predicted value and relative deviation) and ``summary.json``.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import theory
from .config import ConfigError, output_dir, validate
from .distributions import distribution_from_dict, sample
from .kernels import (
    DeepRelu,
    MfEmpirical,
    ReluPowerQ,
    ShallowReluCov,
    ShallowReluNtk,
    kernel_from_dict,
    kernel_to_dict,
    singularity_info,
)
from .spectral import (
    build_operator_matrix,
    default_window,
    eigendecompose,
    fit_power_law,
    fit_spectrum,
    loss_trajectory,
)
from .targets import BallIndicator, GpDraw, expansion_coefficients, realize_target
from . import trainer

log = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
PRED_KEYS = ("nu", "Lambda", "kappa", "K", "xi", "C")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# artifacts

def write_csv(path: Path, name: str, columns: dict) -> Path:
    """Write equal-length columns; floats with full precision for byte reproducibility."""
    keys = list(columns)
    cols = [np.asarray(columns[k]) for k in keys]
    n = len(cols[0]) if cols else 0
    with open(path, "w") as fh:
        fh.write(f"# ntkscaling-artifact {name} v{ARTIFACT_VERSION}\n")
        fh.write(",".join(keys) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`write_csv` (numeric columns become float arrays)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    keys = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    out = {}
    for j, k in enumerate(keys):
        vals = [r[j] for r in rows]
        try:
            out[k] = np.array([float(v) for v in vals])
        except ValueError:
            out[k] = np.array(vals)
    return out


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(float(obj)) else float(obj)
    return obj


def _rel(fitted, predicted):
    if fitted is None or predicted is None:
        return None
    if not (math.isfinite(fitted) and math.isfinite(predicted)) or predicted == 0:
        return None
    return abs(fitted - predicted) / abs(predicted)


def _block(label, predicted: dict, fitted: dict, **extra) -> dict:
    pred = {k: predicted.get(k) for k in PRED_KEYS}
    if pred["kappa"] is not None and pred["nu"] is not None:
        pred["xi"] = pred["kappa"] / pred["nu"]
    return {"label": label, "predicted": pred, "fitted": fitted,
            "relative_deviation": {k: _rel(v, pred.get(k)) for k, v in fitted.items() if k in pred},
            **extra}


def _fits_csv(out: Path, results: list):
    rows = {"label": [], "quantity": [], "fitted": [], "predicted": [], "relative_deviation": []}
    for r in results:
        for k, v in r["fitted"].items():
            if k not in PRED_KEYS:
                continue
            rows["label"].append(str(r["label"]))
            rows["quantity"].append(k)
            rows["fitted"].append(v)
            rows["predicted"].append(r["predicted"].get(k))
            rows["relative_deviation"].append(r["relative_deviation"].get(k))
    write_csv(out / "fits.csv", "fits", rows)


# ---------------------------------------------------------------------------
# shared stages

def _dataset(cfg: dict, dcfg: Optional[dict] = None, seed: Optional[int] = None):
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    dcfg = dict(dcfg if dcfg is not None else cfg["distribution"])
    dcfg.setdefault("seed", seed)
    return sample(distribution_from_dict(dcfg), int(cfg["M"]), seed)


def _window(cfg, M, d):
    w = cfg.get("fit_window")
    return tuple(int(v) for v in w) if w is not None else default_window(M, d)


def _target_spec(tcfg: dict, seed: int):
    if tcfg["kind"] == "ball_indicator":
        return BallIndicator(float(tcfg["radius"]), float(tcfg.get("jump", 1.0)))
    cov = kernel_from_dict(tcfg.get("covariance", {"kind": "shallow_relu_cov"}))
    return GpDraw(cov, int(tcfg.get("seed", seed)), tcfg.get("sampler", "cholesky"), tcfg.get("width"))


def _target_c2(tcfg: dict, ds, decomp, seed: int):
    """Squared coefficients, averaged over ``n_draws`` independent GP draws."""
    spec = _target_spec(tcfg, seed)
    draws = int(tcfg.get("n_draws", 1)) if isinstance(spec, GpDraw) else 1
    c2 = np.zeros(decomp.M)
    for k in range(draws):
        sk = spec if k == 0 else GpDraw(spec.covariance, spec.seed + 1000 * k, spec.sampler, spec.width)
        c2 += expansion_coefficients(realize_target(sk, ds), decomp).c ** 2
    return c2 / draws, spec


def _predict(cfg, ntk, ds, spec, seed):
    pcfg = cfg.get("prediction") or {}
    kw = dict(seed=seed, n_surface=int(pcfg.get("n_surface", 10**5)),
              n_samples=int(pcfg.get("n_samples", 2 * 10**5)), gp_method=pcfg.get("gp_method", "dataset"))
    if isinstance(spec, BallIndicator):
        return theory.predict("indicator", ntk, ds, radius=spec.radius, jump=spec.jump, **kw)
    return theory.predict("gp", ntk, ds, cov=spec.covariance, **kw)


def _fixed_exponent_coefficient(values, x, exponent):
    return float(np.exp(np.mean(np.log(values * x**exponent))))


def _time_window(times, decomp, window):
    lo, hi = window
    lam = decomp.eigenvalues
    sel = np.flatnonzero((times >= 1 / (2 * lam[lo])) & (times <= 1 / (2 * lam[hi - 1])))
    if sel.size < 2:
        raise ValueError("time grid has fewer than 2 points inside the fit window")
    return int(sel[0]), int(sel[-1]) + 1


def _spectrum_result(label, kernel, ds, decomp, window):
    fit = fit_spectrum(decomp, window)
    try:
        law = theory.eigenvalue_asymptote(kernel, ds)
        pred = {"nu": law.nu, "Lambda": law.Lambda if math.isfinite(law.Lambda) else None}
        notes = law.notes
    except ValueError as exc:
        pred, notes = {"nu": None, "Lambda": None}, [str(exc)]
    n = np.arange(fit.window[0], fit.window[1], dtype=float)
    fitted = {"nu": fit.exponent, "Lambda": fit.coefficient}
    if pred["nu"] is not None:
        fitted_fixed = _fixed_exponent_coefficient(decomp.eigenvalues[fit.window[0]:fit.window[1]], n, pred["nu"])
    else:
        fitted_fixed = None
    return _block(label, pred, fitted, fit_window=list(fit.window), fit_residual=fit.residual,
                  Lambda_at_predicted_nu=fitted_fixed, notes=notes), pred


def _spectrum_columns(decomp, pred):
    n = np.arange(decomp.M)
    lam = decomp.eigenvalues
    if pred.get("Lambda"):
        theory_col = np.where(n > 0, pred["Lambda"] * np.maximum(n, 1.0) ** (-pred["nu"]), np.nan)
    else:
        theory_col = np.full(n.size, np.nan)
    return n, lam, theory_col


# ---------------------------------------------------------------------------
# experiment kinds

def run_spectrum(cfg, out):
    with stage("dataset"):
        ds = _dataset(cfg)
    with stage("kernel"):
        kernel = kernel_from_dict(cfg.get("kernel", {"kind": "shallow_relu_ntk"}))
        A = build_operator_matrix(ds, kernel)
    with stage("eigendecompose"):
        dec = eigendecompose(A)
    with stage("fit"):
        res, pred = _spectrum_result(kernel_to_dict(kernel)["kind"], kernel, ds, dec, _window(cfg, ds.M, ds.dim))
    n, lam, th = _spectrum_columns(dec, pred)
    write_csv(out / "eigenvalues.csv", "eigenvalues", {"n": n, "eigenvalue": lam, "theory": th})
    return [res]


def _coefficients_stage(cfg, out):
    seed = int(cfg.get("seed", 0))
    with stage("dataset"):
        ds = _dataset(cfg)
    with stage("kernel"):
        ntk = kernel_from_dict(cfg.get("kernel", {"kind": "shallow_relu_ntk"}))
        A = build_operator_matrix(ds, ntk)
    with stage("eigendecompose"):
        dec = eigendecompose(A)
    with stage("target"):
        c2, spec = _target_c2(cfg["target"], ds, dec, seed)
        s = np.cumsum(c2[::-1])[::-1]
    with stage("prediction"):
        pred = _predict(cfg, ntk, ds, spec, seed)
    return ds, ntk, dec, c2, s, spec, pred


def _coefficient_fits(cfg, ds, dec, s, pred):
    window = _window(cfg, ds.M, ds.dim)
    sfit = fit_power_law(s, window, x=np.arange(ds.M))
    n = np.arange(window[0], window[1], dtype=float)
    K_fixed = _fixed_exponent_coefficient(s[window[0]:window[1]], n, pred.kappa)
    efit = fit_spectrum(dec, window)
    return window, {"nu": efit.exponent, "Lambda": efit.coefficient, "kappa": sfit.exponent, "K": K_fixed}, sfit


def run_coefficients(cfg, out):
    ds, ntk, dec, c2, s, spec, pred = _coefficients_stage(cfg, out)
    with stage("fit"):
        window, fitted, sfit = _coefficient_fits(cfg, ds, dec, s, pred)
    n = np.arange(ds.M)
    write_csv(out / "coefficients.csv", "coefficients", {
        "n": n, "eigenvalue": dec.eigenvalues, "c_squared": c2, "tail_sum": s,
        "theory": np.where(n > 0, pred.K * np.maximum(n, 1.0) ** (-pred.kappa), np.nan)})
    return [_block(type(spec).__name__, pred.to_dict(), fitted, fit_window=list(window),
                   K_free_fit=sfit.coefficient, provenance=pred.provenance)]


def _times(cfg):
    tg = cfg["time_grid"]
    return np.logspace(float(tg["log10_start"]), float(tg["log10_stop"]), int(tg["num"]))


def run_linearized_loss(cfg, out):
    ds, ntk, dec, c2, s, spec, pred = _coefficients_stage(cfg, out)
    times = _times(cfg)
    with stage("loss"):
        L = loss_trajectory(dec, np.sqrt(c2), times)
    with stage("fit"):
        window, fitted, sfit = _coefficient_fits(cfg, ds, dec, s, pred)
        tw = _time_window(times, dec, window)
        lfit = fit_power_law(L, tw, x=times)
        fitted["xi"] = lfit.exponent
        fitted["C"] = _fixed_exponent_coefficient(L[tw[0]:tw[1]], times[tw[0]:tw[1]], pred.xi)
    write_csv(out / "loss.csv", "loss", {"t": times, "loss": L, "theory": pred.loss(times)})
    write_csv(out / "coefficients.csv", "coefficients", {
        "n": np.arange(ds.M), "eigenvalue": dec.eigenvalues, "c_squared": c2, "tail_sum": s})
    return [_block(type(spec).__name__, pred.to_dict(), fitted, fit_window=list(window),
                   time_window=[float(times[tw[0]]), float(times[tw[1] - 1])],
                   C_free_fit=lfit.coefficient, provenance=pred.provenance)]


def run_finite_training(cfg, out):
    seed = int(cfg.get("seed", 0))
    tr = cfg.get("training") or {}
    with stage("dataset"):
        ds = _dataset(cfg)
    with stage("kernel"):
        ntk = kernel_from_dict(cfg.get("kernel", {"kind": "shallow_relu_ntk"}))
        if not isinstance(ntk, ShallowReluNtk):
            raise ValueError("finite-training compares against the shallow ReLU NTK")
        dec = eigendecompose(build_operator_matrix(ds, ntk))
        eta = float(tr.get("eta_factor", 0.9)) * trainer.critical_lr(dec)
    with stage("target"):
        spec = _target_spec(cfg["target"], seed)
        y = realize_target(spec, ds)
    with stage("train"):
        net = trainer.init("ntk", int(tr.get("width", 2000)), ds.dim, ntk.sigma_w, ntk.sigma_b, seed)
        e0 = trainer.forward(net, ds) - y
        decades = float(tr.get("decades", 3))
        L0 = 0.5 * float(e0 @ e0) / ds.M
        tlog = trainer.train(net, ds, y, eta, int(tr["steps"]), stop_below=L0 * 10 ** (-decades))
    with stage("linearized"):
        steps = tlog.steps
        c = expansion_coefficients(e0, dec).c
        Llin = loss_trajectory(dec, c, steps, eta=eta)
        reached = tlog.losses <= L0 * 10 ** (-decades)
        end = int(np.argmax(reached)) if reached.any() else steps[-1]
        dev = np.abs(tlog.losses[: end + 1] / Llin[: end + 1] - 1)
    with stage("prediction"):
        pred = _predict(cfg, ntk, ds, spec, seed)
        scale = 2.0 if isinstance(spec, GpDraw) else 1.0  # f0 is an independent draw of the same GP
        pd = pred.to_dict()
        pd["K"] *= scale
        pd["C"] *= scale
    with stage("fit"):
        window = _window(cfg, ds.M, ds.dim)
        t = eta * np.maximum(steps, 1)
        fitted = {}
        try:
            tw = _time_window(t, dec, window)
            fitted["xi"] = fit_power_law(tlog.losses, tw, x=t).exponent
        except ValueError as exc:
            log.warning("no loss-exponent fit: %s", exc)
    write_csv(out / "training.csv", "training", {
        "step": steps, "loss": tlog.losses, "linearized_loss": Llin,
        "theory": np.where(steps > 0, pd["C"] * t ** (-pd["xi"]), np.nan)})
    return [_block(type(spec).__name__, pd, fitted, eta=eta, eta_critical=trainer.critical_lr(dec),
                   decades_compared=decades, decay_reached=bool(reached.any()), compared_steps=end,
                   max_relative_deviation=float(dev.max()), provenance=pred.provenance)]


def run_mf_training(cfg, out):
    seed = int(cfg.get("seed", 0))
    tr = cfg.get("training") or {}
    steps = int(tr["steps"])
    snaps = sorted(set(int(k) for k in tr.get("snapshot_steps", [0, steps // 100, steps // 10, steps])))
    with stage("dataset"):
        ds = _dataset(cfg)
    with stage("target"):
        spec = _target_spec(cfg["target"], seed)
        y = realize_target(spec, ds)
    with stage("init"):
        net = trainer.init("mf", int(tr.get("width", 2000)), ds.dim, seed=seed)
        dec0 = eigendecompose(build_operator_matrix(ds, MfEmpirical(net.params_rows())))
        eta = float(tr.get("eta_factor", 0.4)) * trainer.critical_lr(dec0)
    with stage("train"):
        tlog = trainer.train(net, ds, y, eta, steps, snapshot_steps=snaps)
    window = _window(cfg, ds.M, ds.dim)
    d = ds.dim
    alpha = singularity_info(MfEmpirical(net.params_rows())).degree
    if isinstance(spec, GpDraw):
        nu, kappa, xi = theory.exponents("gp", d, alpha, singularity_info(spec.covariance).degree)
    else:
        nu, kappa, xi = theory.exponents("indicator", d, alpha)
    pred = {"nu": nu, "kappa": kappa}
    results, spec_rows = [], {"step": [], "n": [], "eigenvalue": []}
    with stage("snapshot spectra"):
        for k in snaps:
            if k not in tlog.snapshots:
                continue
            snap = tlog.snapshots[k]
            trainer.save_checkpoint(snap, out / f"checkpoint_step{k}.npy")
            dec = eigendecompose(build_operator_matrix(ds, MfEmpirical(snap.params_rows())))
            fit = fit_spectrum(dec, window)
            results.append(_block(f"step {k}", pred, {"nu": fit.exponent}, fit_window=list(fit.window),
                                  top_eigenvalue=float(dec.eigenvalues[0]),
                                  eta_times_top=float(eta * dec.eigenvalues[0])))
            spec_rows["step"] += [k] * dec.M
            spec_rows["n"] += list(range(dec.M))
            spec_rows["eigenvalue"] += list(dec.eigenvalues)
    with stage("loss fit"):
        k0, k1 = tr.get("fit_steps", [max(1, steps // 10), steps + 1])
        ks = tlog.steps.astype(float)
        lfit = fit_power_law(tlog.losses, (int(k0), min(int(k1), ks.size)), x=np.maximum(ks, 1.0))
        results.append(_block("loss", pred, {"xi": lfit.exponent}, fit_steps=[int(k0), int(k1)]))
    write_csv(out / "training.csv", "training", {"step": tlog.steps, "loss": tlog.losses})
    write_csv(out / "spectra.csv", "spectra-over-time", spec_rows)
    for r in results:
        r["eta"] = eta
        r["eta_critical_at_init"] = trainer.critical_lr(dec0)
    return results


def _sweep(cfg, out, kernels, name):
    with stage("dataset"):
        ds = _dataset(cfg)
    window = _window(cfg, ds.M, ds.dim)
    results, rows = [], {"label": [], "n": [], "eigenvalue": [], "theory": []}
    for label, kernel in kernels:
        with stage(f"{label}: eigendecompose"):
            dec = eigendecompose(build_operator_matrix(ds, kernel))
        with stage(f"{label}: fit"):
            res, pred = _spectrum_result(label, kernel, ds, dec, window)
        results.append(res)
        n, lam, th = _spectrum_columns(dec, pred)
        rows["label"] += [label] * n.size
        rows["n"] += list(n)
        rows["eigenvalue"] += list(lam)
        rows["theory"] += list(th)
    write_csv(out / f"{name}.csv", name, rows)
    return results, ds


def run_q_sweep(cfg, out):
    k = cfg.get("kernel", {})
    sw, sb = float(k.get("sigma_w", 1.0)), float(k.get("sigma_b", 1.0))
    kernels = [(f"q={q:g}", ReluPowerQ(float(q), sw, sb)) for q in cfg["q_values"]]
    return _sweep(cfg, out, kernels, "q_sweep")[0]


def run_depth_sweep(cfg, out):
    k = cfg.get("kernel", {})
    sw, sb = float(k.get("sigma_w", 1.0)), float(k.get("sigma_b", 1.0))
    kernels = [(f"L={L}", DeepRelu(int(L), sw, sb)) for L in cfg["depths"]]
    results, ds = _sweep(cfg, out, kernels, "depth_sweep")
    with stage("depth-2 identity"):
        X = ds.points[:200]
        K2, K1 = DeepRelu(2, sw, sb).gram(X), ShallowReluNtk(sw, sb).gram(X)
        ident = float(np.max(np.abs(K2 - K1) / np.abs(K1)))
    for r in results:
        r["depth2_vs_shallow_max_rel"] = ident
    return results


def degeneracy_counts(eigenvalues, top: int = 200, rel_gap: float = 1e-3):
    """``(clusters, small_gaps)`` among the top eigenvalues.

    A small gap is ``(lambda_n - lambda_{n+1}) / lambda_n < rel_gap``; a cluster is
    a maximal run of consecutive small gaps.
    """
    lam = np.asarray(eigenvalues, dtype=float)[:top]
    small = (lam[:-1] - lam[1:]) / lam[:-1] < rel_gap
    starts = small & ~np.concatenate([[False], small[:-1]])
    return int(starts.sum()), int(small.sum())


def run_degeneracy(cfg, out):
    dg = cfg.get("degeneracy") or {}
    top, gap = int(dg.get("top", 200)), float(dg.get("rel_gap", 1e-3))
    seeds = [int(s) for s in dg.get("seeds", [cfg.get("seed", 0)])]
    kernel = kernel_from_dict(cfg.get("kernel", {"kind": "shallow_relu_ntk"}))
    results, rows = [], {"variant": [], "seed": [], "n": [], "eigenvalue": [], "relative_gap": []}
    for i, vcfg in enumerate(cfg["variants"]):
        vcfg = dict(vcfg)
        label = vcfg.pop("label", f"{vcfg['kind']}-{i}")
        counts, gaps = [], []
        for seed in seeds:
            with stage(f"{label} seed {seed}"):
                ds = _dataset(cfg, vcfg, seed)
                dec = eigendecompose(build_operator_matrix(ds, kernel))
            c, g = degeneracy_counts(dec.eigenvalues, top, gap)
            counts.append(c)
            gaps.append(g)
            lam = dec.eigenvalues[:top]
            rows["variant"] += [label] * lam.size
            rows["seed"] += [seed] * lam.size
            rows["n"] += list(range(lam.size))
            rows["eigenvalue"] += list(lam)
            rows["relative_gap"] += list(np.append((lam[:-1] - lam[1:]) / lam[:-1], np.nan))
        with stage(f"{label} fit"):
            res, _ = _spectrum_result(label, kernel, ds, dec, _window(cfg, ds.M, ds.dim))
        res.update(clusters=counts, small_gaps=gaps, clusters_total=int(sum(counts)), seeds=seeds,
                   top=top, rel_gap=gap)
        results.append(res)
    write_csv(out / "degeneracy.csv", "degeneracy", rows)
    return results


RUNNERS = {
    "spectrum": run_spectrum,
    "coefficients": run_coefficients,
    "linearized-loss": run_linearized_loss,
    "finite-training": run_finite_training,
    "mf-training": run_mf_training,
    "q-sweep": run_q_sweep,
    "depth-sweep": run_depth_sweep,
    "degeneracy": run_degeneracy,
}


def run(cfg: dict) -> dict:
    """Validate, run and write artifacts; returns the JSON summary."""
    report = validate(cfg)
    if not report.ok:
        raise ConfigError("; ".join(report.errors))
    for w in report.warnings:
        log.warning(w)
    out = output_dir(cfg)
    with stage("output directory"):
        out.mkdir(parents=True, exist_ok=True)
    results = RUNNERS[cfg["kind"]](cfg, out)
    _fits_csv(out, results)
    summary = _clean({"artifact_version": ARTIFACT_VERSION, "kind": cfg["kind"],
                      "name": cfg.get("name"), "config": cfg, "results": results})
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
