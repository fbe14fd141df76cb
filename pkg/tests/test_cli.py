import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from ntkscaling import cli
from ntkscaling.config import OUTPUT_ROOT_ENV, load_config, output_dir, validate
from ntkscaling.experiments import read_csv, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MIX2 = {"kind": "gaussian_mixture", "dim": 2, "n_g": 8, "sigma": 0.5}
GP = {"kind": "gp", "covariance": {"kind": "shallow_relu_cov"}}
BALL = {"kind": "ball_indicator", "radius": 0.5}

SMALL = {
    "spectrum": {"M": 120},
    "coefficients": {"M": 120, "target": GP, "prediction": {"n_samples": 2000}},
    "linearized-loss": {"M": 120, "target": BALL, "fit_window": [10, 60], "prediction": {"n_surface": 2000},
                        "time_grid": {"log10_start": 0, "log10_stop": 6, "num": 61}},
    "finite-training": {"M": 60, "target": GP, "fit_window": [10, 30],
                        "training": {"width": 200, "steps": 100, "decades": 1}},
    "mf-training": {"M": 80, "target": GP, "distribution": {**MIX2, "dim": 3}, "fit_window": [10, 40],
                    "training": {"width": 100, "steps": 60, "snapshot_steps": [0, 30, 60], "fit_steps": [5, 61]}},
    "q-sweep": {"M": 100, "q_values": [0.75, 2.0], "distribution": {**MIX2, "dim": 3}, "fit_window": [10, 50]},
    "depth-sweep": {"M": 100, "depths": [2, 3], "fit_window": [10, 50]},
    "degeneracy": {"M": 100, "fit_window": [10, 50], "degeneracy": {"top": 50, "seeds": [0, 1]},
                   "variants": [{"kind": "isotropic_gaussian", "dim": 2, "sigma": 1.0},
                                {**MIX2, "label": "mixture"}]},
}


def small_cfg(kind, tmp_path, **over):
    cfg = {"kind": kind, "seed": 0, "distribution": MIX2, "name": kind, **SMALL[kind], **over}
    cfg.setdefault("output_dir", str(tmp_path / kind))
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    report = validate(load_config(path))
    assert report.ok, report.lines()


def test_valid_config_empty_report(tmp_path):
    report = validate(small_cfg("spectrum", tmp_path))
    assert report.ok and not report.errors and not report.warnings


def test_half_integer_q_flagged(tmp_path):
    report = validate(small_cfg("q-sweep", tmp_path, q_values=[1.5]))
    assert not report.ok and any("half-integer" in e for e in report.errors)


def test_large_M_warns(tmp_path):
    report = validate(small_cfg("spectrum", tmp_path, M=6000))
    assert report.ok and any("M=6000" in w for w in report.warnings)


def test_empty_time_grid(tmp_path):
    cfg = small_cfg("linearized-loss", tmp_path, time_grid={"log10_start": 0, "log10_stop": 1, "num": 0})
    assert "time grid is empty" in validate(cfg).errors
    with pytest.raises(ValueError):
        run(cfg)
    assert not Path(cfg["output_dir"]).exists()


def test_validate_lists_every_problem(tmp_path):
    cfg = {"kind": "coefficients", "M": -1, "distribution": {"kind": "nope"}, "fit_window": [5, 2],
           "output_dir": str(tmp_path / "x")}
    assert len(validate(cfg).errors) >= 4
    assert validate({"kind": "bogus"}).errors


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert output_dir({"name": "abc"}) == tmp_path / "root" / "abc"
    assert output_dir({"name": "abc", "output_dir": "/elsewhere"}) == Path("/elsewhere")


@pytest.mark.parametrize("kind", list(SMALL))
def test_every_kind_runs(kind, tmp_path):
    cfg = small_cfg(kind, tmp_path)
    summary = run(cfg)
    out = Path(cfg["output_dir"])
    assert (out / "summary.json").exists() and (out / "fits.csv").exists()
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["kind"] == kind
    for r in on_disk["results"]:
        p = r["predicted"]
        if p.get("kappa") is not None:
            assert p["xi"] == p["kappa"] / p["nu"]
        for k in r["fitted"]:
            if k in p and p[k] is not None and r["fitted"][k] is not None:
                assert r["relative_deviation"][k] is not None
    fits = read_csv(out / "fits.csv")
    assert set(fits) == {"label", "quantity", "fitted", "predicted", "relative_deviation"}
    with open(out / "fits.csv") as fh:
        assert fh.readline().startswith("# ntkscaling-artifact fits v1")
    assert summary["results"]


@pytest.mark.parametrize("kind", ["spectrum", "linearized-loss", "finite-training"])
def test_byte_reproducible(kind, tmp_path):
    outs = []
    for i in range(2):
        cfg = small_cfg(kind, tmp_path, output_dir=str(tmp_path / f"run{i}"))
        run(cfg)
        outs.append(Path(cfg["output_dir"]))
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_spectrum_csv_layout(tmp_path):
    cfg = small_cfg("spectrum", tmp_path)
    run(cfg)
    cols = read_csv(Path(cfg["output_dir"]) / "eigenvalues.csv")
    assert list(cols) == ["n", "eigenvalue", "theory"]
    assert np.all(np.diff(cols["eigenvalue"]) <= 0)


def test_cli_exit_codes(tmp_path, capsys):
    good = write_cfg(tmp_path, small_cfg("spectrum", tmp_path), "good.yaml")
    assert cli.main(["validate", str(good)]) == 0
    assert cli.main(["run", str(good)]) == 0
    assert "artifacts written" in capsys.readouterr().out
    bad = write_cfg(tmp_path, small_cfg("spectrum", tmp_path, M=0), "bad.yaml")
    assert cli.main(["validate", str(bad)]) == 1
    assert cli.main(["run", str(bad)]) == 1
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == 1


def test_cli_runtime_failure_names_stage(tmp_path, capsys):
    # validation cannot see that the time grid misses the fit window entirely
    cfg = small_cfg("linearized-loss", tmp_path, time_grid={"log10_start": 0, "log10_stop": 0.1, "num": 3})
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["run", str(path)]) == 2
    assert "stage 'fit'" in capsys.readouterr().err


def test_cli_output_override_and_list(tmp_path, capsys):
    cfg = small_cfg("spectrum", tmp_path)
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["run", str(path), "-o", str(tmp_path / "override")]) == 0
    assert (tmp_path / "override" / "eigenvalues.csv").exists()
    assert cli.main(["list-kinds"]) == 0
    out = capsys.readouterr().out
    for kind in SMALL:
        assert kind in out
