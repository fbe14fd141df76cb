"""Eigenvalue power law of the shallow ReLU NTK on a random Gaussian mixture.

lambda_n ~ Lambda n^(-nu) with nu = 1 + 1/d and Lambda from local Weyl volumes.

Run: python demos/02_eigenvalue_law.py
"""
# %%
import numpy as np

from ntkscaling import distributions as D
from ntkscaling import spectral as S
from ntkscaling import theory as TH
from ntkscaling.kernels import ShallowReluNtk

mu = D.make_mixture(d=2, n_g=8, sigma=0.5, seed=0)
ds = D.sample(mu, 1500, seed=0)
print("centers:\n", np.round(mu.centers, 3))

# %%
A = S.build_operator_matrix(ds, ShallowReluNtk())
dec = S.eigendecompose(A)
fit = S.fit_spectrum(dec, d=2)
print("fit window", fit.window, "nu = %.4f, Lambda = %.4g" % (fit.exponent, fit.coefficient))

# %%
law = TH.eigenvalue_asymptote(ShallowReluNtk(), ds)
print("predicted nu = %.4f, Lambda = %.4g" % (law.nu, law.Lambda))
for note in law.notes:
    print("  ", note)

# compare at fixed exponent: the free fit trades Lambda against nu
n = np.arange(*fit.window)
lam_fixed = np.exp(np.mean(np.log(dec.eigenvalues[n] * n**law.nu)))
print("Lambda at predicted nu: %.4g (ratio %.3f)" % (lam_fixed, lam_fixed / law.Lambda))

# %%
# a few rows of the comparison table
for k in (10, 30, 100, 300):
    print(f"n={k:4d}  lambda_n={dec.eigenvalues[k]:.4e}  theory={law.Lambda * k**-law.nu:.4e}")

# %%
# counting function: N(lambda) ~ (Lambda / lambda)^(1/nu)
for lam in (1e-3, 1e-4):
    print("N(%g) = %d, predicted %.0f" % (lam, S.counting_function(dec, lam), (law.Lambda / lam) ** (1 / law.nu)))
