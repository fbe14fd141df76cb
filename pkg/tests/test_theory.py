import math

import mpmath
import numpy as np
import pytest

from ntkscaling import distributions as D
from ntkscaling import spectral as S
from ntkscaling import targets as T
from ntkscaling import theory as TH
from ntkscaling.kernels import ReluPowerQ, ShallowReluCov, ShallowReluNtk, singularity_info


def test_c_fourier_examples():
    assert TH.c_fourier(1, 1) == pytest.approx(-2, abs=1e-12)
    assert TH.c_fourier(2, 1) == pytest.approx(-2 * np.pi, rel=1e-12)
    for d in (1, 2, 3, 5):
        assert TH.c_fourier(d, 0.7) < 0 and TH.c_fourier(d, 1.5) < 0
        assert TH.c_fourier(d, 3) > 0 and TH.c_fourier(d, 2.5) > 0


@pytest.mark.parametrize("alpha", [2, 4, 0, -1])
def test_c_fourier_poles_rejected(alpha):
    with pytest.raises(ValueError):
        TH.c_fourier(2, alpha)


def test_gamma_const_examples():
    assert TH.gamma_const(1, 1) == pytest.approx(2 / np.sqrt(np.pi) * (1 / (2 * np.pi)) ** 0.5, rel=1e-12)
    assert TH.gamma_const(1, 1) == pytest.approx(0.45016, abs=1e-5)
    # (1 / (4 sqrt(pi)))^(2/3) = 0.2709630...; the often-quoted 0.27094 is off in the fifth digit
    assert TH.gamma_const(2, 1) == pytest.approx((4 * np.sqrt(np.pi)) ** (-2 / 3), rel=1e-12)
    assert TH.gamma_const(2, 1) == pytest.approx(0.27094, abs=1e-4)
    for d in range(1, 6):
        for a in (0.5, 1, 3, 5.5):
            assert TH.gamma_const(d, a) > 0


def test_gamma_const_high_precision():
    mpmath.mp.dps = 40
    for d, a in [(1, 1), (3, 1), (2, 3), (4, 0.5)]:
        inner = mpmath.gamma(mpmath.mpf(d + a) / 2) / (mpmath.pi ** (mpmath.mpf(a) / 2)
                                                      * abs(mpmath.gamma(-mpmath.mpf(a) / 2)))
        want = inner ** (mpmath.mpf(d) / (d + a)) / mpmath.gamma(mpmath.mpf(d) / 2 + 1)
        assert TH.gamma_const(d, a) == pytest.approx(float(want), rel=1e-12)


def test_gamma_const_is_fourier_volume():
    # (2pi)^-d |{k : |c| |k|^(-d-a) > 1}| with |k|^d-volume of a ball
    for d, a in [(1, 1), (2, 1), (3, 3)]:
        radius = abs(TH.c_fourier(d, a)) ** (1 / (d + a))
        ball = np.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d
        assert TH.gamma_const(d, a) == pytest.approx(ball / (2 * np.pi) ** d, rel=1e-12)


def test_gamma_x_isotropic_example():
    A = singularity_info(ShallowReluNtk()).amplitude
    for d in (1, 2, 3):
        got = TH.gamma_x(np.zeros(d), 1.0, A(np.zeros((1, d))), 1.0, 1.0)
        assert got == pytest.approx((1 / (2 * np.pi)) ** (d / (d + 1)) * TH.gamma_const(d, 1), rel=1e-12)


def test_gamma_x_joint_scaling(rng):
    x = rng.normal(size=(4, 3))
    c, alpha, d = 1.7, 1.0, 3
    info = singularity_info(ShallowReluNtk(1.0, 0.8))
    info_c = singularity_info(ShallowReluNtk(c, 0.8 * c))
    base = TH.gamma_x(x, alpha, info.amplitude, 1.0, 0.8)
    scaled = TH.gamma_x(x, alpha, info_c.amplitude, c, 0.8 * c)
    np.testing.assert_allclose(scaled, base * c ** ((3 + alpha) * d / (d + alpha)), rtol=1e-12)
    with pytest.raises(ValueError):
        TH.gamma_x(x, alpha, np.zeros(4), 1.0, 1.0)


def test_fourier_singularity_isotropic_and_signs(rng):
    d = 3
    n = rng.normal(size=(50, d))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    ntk, cov = singularity_info(ShallowReluNtk()), singularity_info(ShallowReluCov())
    at0 = TH.fourier_singularity_value(np.zeros((50, d)), 1.0, ntk.amplitude, n, 1.0, 1.0)
    np.testing.assert_allclose(at0, -1 / (2 * np.pi) * TH.c_fourier(d, 1), rtol=1e-12)
    x = rng.normal(size=(50, d))
    assert np.all(TH.fourier_singularity_value(x, 1.0, ntk.amplitude, n, 1.0, 1.0) > 0)
    assert np.all(TH.fourier_singularity_value(x, 3.0, cov.amplitude, n, 1.0, 1.0) > 0)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_sphere_integral_identity(d):
    x = np.random.default_rng(d).normal(size=d)
    mc, se = TH.sphere_integral_mc(x, 1.2, 0.7, 10**6, seed=d)
    closed = TH.sphere_integral_closed(x, 1.2, 0.7)
    assert abs(mc / closed - 1) < 5e-3


def test_loss_asymptote_examples():
    assert TH.loss_asymptote(1, 1, 1, 1, 1.0) == pytest.approx(0.25)
    assert TH.loss_asymptote(1, 1, 1, 1, 8.0) == pytest.approx(1 / 32)
    want = np.sqrt(np.pi) / 4 * 1e-2
    assert TH.loss_asymptote(1, 2, 1, 1, 5000) == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(0.0044311, abs=1e-7)
    assert TH.direct_loss_sum(1, 2, 1, 1, 5000) == pytest.approx(want, rel=0.02)
    ratio = TH.loss_asymptote(2, 1.5, 1, 1, 100.0) / TH.loss_asymptote(1, 1.5, 1, 1, 100.0)
    assert ratio == pytest.approx(2 ** (-1 / 1.5), rel=1e-12)
    with pytest.raises(ValueError):
        TH.loss_asymptote(-1, 1, 1, 1, 1.0)


def test_exponents():
    assert TH.exponents("indicator", 2, 1) == (1.5, 0.5, 0.5 / 1.5)
    nu, kappa, xi = TH.exponents("gp", 2, 1, 3)
    assert (nu, kappa, xi) == (1.5, 1.5, 1.0)
    assert TH.exponents("indicator", 4, 1)[1] == 0.25
    assert TH.exponents("indicator", 2, 1)[2] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        TH.exponents("gp", 2, 1)


def test_eigenvalue_asymptote_exponents(small_ds):
    assert TH.eigenvalue_asymptote(ShallowReluNtk(), small_ds).nu == 1.5
    ds3 = D.sample(D.make_mixture(3, 8, 0.5, 0), 50, 0)
    assert TH.eigenvalue_asymptote(ReluPowerQ(2.0), ds3).nu == 2.0


def test_lambda_closed_form_cross_check(small_ds):
    law = TH.eigenvalue_asymptote(ShallowReluNtk(1.3, 0.6), small_ds)
    assert law.closed_form == pytest.approx(law.Lambda, rel=1e-10)
    assert any("agrees" in n for n in law.notes)


def test_relu_q_closed_form_disagreement_reported(small_ds):
    law = TH.eigenvalue_asymptote(ReluPowerQ(1.25), small_ds)
    assert any("disagrees" in n for n in law.notes)


def test_lambda_scale_covariance():
    spec = D.make_mixture(2, 8, 0.5, 3)
    ds = D.sample(spec, 300, 3)
    c = 1.6
    base = TH.eigenvalue_asymptote(ShallowReluNtk(1.0, 1.0), ds)
    scaled = TH.eigenvalue_asymptote(ShallowReluNtk(c, c), ds)
    assert scaled.nu == base.nu
    assert scaled.Lambda == pytest.approx(c**4 * base.Lambda, rel=1e-10)
    e0 = S.eigendecompose(S.build_operator_matrix(ds, ShallowReluNtk(1.0, 1.0))).eigenvalues
    e1 = S.eigendecompose(S.build_operator_matrix(ds, ShallowReluNtk(c, c))).eigenvalues
    np.testing.assert_allclose(e1[:100], c**4 * e0[:100], rtol=1e-8)
    q = TH.eigenvalue_asymptote(ReluPowerQ(1.25, c, c), ds).Lambda
    q0 = TH.eigenvalue_asymptote(ReluPowerQ(1.25), ds).Lambda
    assert q == pytest.approx(c ** (3 + 1.5) * q0, rel=1e-10)


def test_indicator_coefficient(mixture2):
    lc = TH.loss_coefficient_indicator(ShallowReluNtk(), mixture2, 0.5, 1.0, 20000, seed=1)
    assert lc.xi == pytest.approx(1 / 3)
    lc2 = TH.loss_coefficient_indicator(ShallowReluNtk(), mixture2, 0.5, 2.0, 20000, seed=1)
    assert lc2.C == pytest.approx(4 * lc.C, rel=1e-12)
    assert lc.C > 0


def test_gp_coefficient(small_ds):
    lc = TH.loss_coefficient_gp(ShallowReluNtk(), ShallowReluCov(), small_ds)
    assert lc.xi == 1.0 and lc.C > 0
    d = TH.loss_coefficient_gp(ShallowReluNtk(), ShallowReluCov(), small_ds, method="defensive",
                               n_samples=20000)
    assert d.C > 0
    with pytest.raises(ValueError):
        TH.loss_coefficient_gp(ShallowReluNtk(), ShallowReluCov(2.0, 1.0), small_ds)


def test_prediction_consistency(small_ds):
    for scenario, kw in (("gp", {"cov": ShallowReluCov()}), ("indicator", {"radius": 0.5})):
        p = TH.predict(scenario, ShallowReluNtk(), small_ds, n_surface=5000, **kw)
        assert p.xi == p.kappa / p.nu
        assert all(v > 0 for v in (p.nu, p.Lambda, p.kappa, p.K, p.xi, p.C))
        direct = [n for n in p.provenance["C"] if n.startswith("direct loss coefficient")][0]
        assert float(direct.split()[-1]) == pytest.approx(p.C, rel=1e-5)
    gp = TH.predict("gp", ShallowReluNtk(), small_ds, cov=ShallowReluCov())
    assert gp.kappa == 1.5
    with pytest.raises(ValueError):
        TH.AsymptoticPrediction(1.5, 1.0, 0.5, 1.0, 0.3, 1.0)


@pytest.fixture(scope="module")
def pipeline_d2():
    ds = D.sample(D.make_mixture(2, 8, 0.5, 0), 2000, 0)
    dec = S.eigendecompose(S.build_operator_matrix(ds, ShallowReluNtk()))
    lam = dec.eigenvalues
    times = np.logspace(0, 7, 141)
    sel = (times >= 1 / (2 * lam[20])) & (times <= 1 / (2 * lam[499]))
    return ds, dec, times[sel]


def _fitted_over_predicted(dec, c2, times, pred):
    L = S.loss_trajectory(dec, np.sqrt(c2), times)
    return float(np.exp(np.mean(np.log(L * times**pred.xi)))) / pred.C


def test_indicator_full_pipeline(pipeline_d2):
    ds, dec, times = pipeline_d2
    c = T.expansion_coefficients(T.realize_target(T.BallIndicator(0.5), ds), dec).c
    pred = TH.predict("indicator", ShallowReluNtk(), ds, radius=0.5)
    assert abs(_fitted_over_predicted(dec, c**2, times, pred) - 1) < 0.25


def test_gp_full_pipeline(pipeline_d2):
    ds, dec, times = pipeline_d2
    c2 = np.mean([T.expansion_coefficients(T.realize_target(T.GpDraw(ShallowReluCov(), seed=1000 * k), ds),
                                           dec).c ** 2 for k in range(16)], axis=0)
    pred = TH.predict("gp", ShallowReluNtk(), ds, cov=ShallowReluCov())
    assert abs(_fitted_over_predicted(dec, c2, times, pred) - 1) < 0.30
