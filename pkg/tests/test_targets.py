import numpy as np
import pytest
from scipy import stats

from ntkscaling import distributions as D
from ntkscaling import spectral as S
from ntkscaling import targets as T
from ntkscaling.kernels import ShallowReluCov, ShallowReluNtk


class Identity:
    sigma_w = sigma_b = 1.0

    def gram(self, X):
        return np.eye(len(X))


def test_ball_indicator_values():
    g = T.realize_target(T.BallIndicator(0.5, 1.0), np.array([[0.1, 0.2], [1.0, 1.0]]))
    np.testing.assert_array_equal(g, [1.0, 0.0])
    g = T.realize_target(T.BallIndicator(0.5, -2.0), np.array([[0.1, 0.2]]))
    assert g[0] == -2.0


def test_ball_indicator_validation():
    with pytest.raises(ValueError):
        T.BallIndicator(0.0)
    with pytest.raises(ValueError):
        T.BallIndicator(1.0, 0.0)


def test_identity_covariance_gives_standard_normals():
    X = np.zeros((10**4, 1))
    g = T.realize_target(T.GpDraw(Identity(), seed=4), X)
    assert stats.kstest(g, "norm").pvalue > 1e-3


def test_cholesky_seed_determinism(small_ds):
    a = T.realize_target(T.GpDraw(ShallowReluCov(), seed=3), small_ds)
    b = T.realize_target(T.GpDraw(ShallowReluCov(), seed=3), small_ds)
    c = T.realize_target(T.GpDraw(ShallowReluCov(), seed=4), small_ds)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_cholesky_jitter_escalation():
    K = np.ones((4, 4))  # rank one
    L, jitter = T.cholesky_with_jitter(K)
    np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(4), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        T.cholesky_with_jitter(-np.eye(3))


def test_wide_network_sampler_covariance():
    X = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 0.4]])
    draws = np.array([T.realize_target(T.GpDraw(ShallowReluCov(), seed=s, sampler="wide-network",
                                                 width=10**5), X) for s in range(200)])
    prod = draws[:, :, None] * draws[:, None, :]
    emp, se = prod.mean(0), prod.std(0, ddof=1) / np.sqrt(len(draws))
    want = ShallowReluCov().gram(X)
    assert np.all(np.abs(emp - want) < 5 * se)


def test_wide_network_needs_width():
    with pytest.raises(ValueError):
        T.GpDraw(ShallowReluCov(), sampler="wide-network")


def test_expansion_examples():
    dec = S.SpectralDecomposition(np.array([3.0, 2.0, 1.0]), np.eye(3))
    prof = T.expansion_coefficients(np.sqrt(3) * np.array([1.0, 0.0, 0.0]), dec)
    np.testing.assert_allclose(prof.c, [1, 0, 0], atol=1e-15)
    prof = T.expansion_coefficients(np.sqrt(3) * np.array([2.0, -1.0, 1.0]), dec)
    np.testing.assert_allclose(prof.s, [6, 2, 1], rtol=1e-14)
    with pytest.raises(ValueError):
        T.expansion_coefficients(np.ones(4), dec)


def test_parseval_and_tail_sums(small_ds):
    dec = S.eigendecompose(S.build_operator_matrix(small_ds, ShallowReluNtk()))
    g = T.realize_target(T.GpDraw(ShallowReluCov(), seed=0), small_ds)
    prof = T.expansion_coefficients(g, dec)
    assert (prof.c**2).sum() == pytest.approx(g @ g / small_ds.M, rel=1e-10)
    assert np.all(np.diff(prof.s) <= 0)
    assert prof.s[-1] == pytest.approx(prof.c[-1] ** 2)
    assert S.loss_trajectory(dec, prof.c, [0.0])[0] == pytest.approx(prof.s[0] / 2, rel=1e-12)
