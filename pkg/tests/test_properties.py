import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ntkscaling import kernels as Kn
from ntkscaling import spectral as S
from ntkscaling import targets as T
from ntkscaling import theory as TH

coord = st.floats(-3, 3, allow_nan=False)
sigma = st.floats(0.2, 3.0)
points = st.integers(1, 4).flatmap(
    lambda d: arrays(float, st.tuples(st.integers(2, 12), st.just(d)), elements=coord))
kernel = st.one_of(
    st.builds(Kn.ShallowReluNtk, sigma, sigma),
    st.builds(Kn.ShallowReluCov, sigma, sigma),
    st.builds(Kn.ReluPowerQ, st.floats(0.6, 3.0).filter(lambda q: abs(q - round(q * 2) / 2) > 1e-3), sigma, sigma),
    st.builds(Kn.DeepRelu, st.integers(2, 5), sigma, sigma),
)


@settings(max_examples=60, deadline=None)
@given(kernel, points)
def test_gram_symmetric_psd(spec, X):
    G = spec.gram(X)
    np.testing.assert_array_equal(G, G.T)
    assert np.linalg.eigvalsh(G).min() >= -1e-8 * max(np.trace(G), 1e-300)


@settings(max_examples=60, deadline=None)
@given(points, sigma, sigma)
def test_geometry_ranges(X, sw, sb):
    g = Kn.pair_geometry(X, sigma_w=sw, sigma_b=sb)
    assert np.all(g.r >= sb * (1 - 1e-15))
    assert np.all((g.phi >= 0) & (g.phi < np.pi))


@settings(max_examples=40, deadline=None)
@given(points, sigma, sigma, st.floats(0.3, 3.0))
def test_shallow_joint_scale(X, sw, sb, c):
    base = Kn.ShallowReluNtk(sw, sb).gram(X)
    np.testing.assert_allclose(Kn.ShallowReluNtk(c * sw, c * sb).gram(X), c**4 * base, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.1, 3.0), st.integers(15, 200))
def test_fit_recovers_exact_power_law(coef, expo, n):
    k = np.arange(n, dtype=float)
    seq = np.r_[1.0, coef * k[1:] ** -expo]
    fit = S.fit_power_law(seq, (1, n))
    assert abs(fit.exponent - expo) < 1e-9 and abs(fit.coefficient / coef - 1) < 1e-9


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(1, 20), elements=st.floats(0, 10)),
       arrays(float, 20, elements=st.floats(-3, 3)))
def test_loss_trajectory_nonincreasing(lam, c):
    lam = np.sort(lam)[::-1]
    dec = S.SpectralDecomposition(lam, np.eye(lam.size))
    L = S.loss_trajectory(dec, c[: lam.size], np.logspace(-2, 3, 30))
    assert np.all(np.diff(L) <= 1e-12 * max(L[0], 1e-300))
    assert np.isclose(S.loss_trajectory(dec, c[: lam.size], [0.0])[0], 0.5 * (c[: lam.size] ** 2).sum(),
                      rtol=1e-12, atol=0)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 15), st.integers(1, 3)), elements=coord),
       st.integers(0, 2**31 - 1))
def test_parseval(X, seed):
    dec = S.eigendecompose(S.build_operator_matrix(X, Kn.ShallowReluNtk()))
    g = np.random.default_rng(seed).normal(size=X.shape[0])
    prof = T.expansion_coefficients(g, dec)
    assert abs(prof.s[0] - g @ g / X.shape[0]) <= 1e-10 * (g @ g / X.shape[0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.floats(0.1, 5.9).filter(lambda a: abs(a / 2 - round(a / 2)) > 1e-3),
       st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 3), st.floats(1.0, 1e6))
def test_loss_law_identities(d, alpha, Lam, K, kappa, t):
    assert TH.gamma_const(d, alpha) > 0
    nu = 1 + alpha / d
    L = TH.loss_asymptote(Lam, nu, K, kappa, t)
    assert L > 0
    assert np.isclose(TH.loss_asymptote(2 * Lam, nu, K, kappa, t), L * 2 ** (-kappa / nu), rtol=1e-12)
    assert np.isclose(TH.loss_asymptote(Lam, nu, 3 * K, kappa, t), 3 * L, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(1, 4), elements=coord), sigma, sigma)
def test_fourier_values_positive(x, sw, sb):
    d = x.size
    n = np.random.default_rng(0).normal(size=(20, d))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    X = np.broadcast_to(x, (20, d))
    for spec, deg in ((Kn.ShallowReluNtk(sw, sb), 1.0), (Kn.ShallowReluCov(sw, sb), 3.0)):
        amp = Kn.singularity_info(spec).amplitude
        assert np.all(TH.fourier_singularity_value(X, deg, amp, n, sw, sb) > 0)
