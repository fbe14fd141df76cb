"""Linearized training loss L(t) ~ C t^(-xi) for two targets.

A ball indicator has a jump (kappa = 1/d); a GP draw with the ReLU covariance
has a phi^3 singularity (kappa = 3/d).  In both cases xi = kappa / nu.

Run: python demos/03_loss_law.py
"""
# %%
import numpy as np

from ntkscaling import distributions as D
from ntkscaling import spectral as S
from ntkscaling import targets as T
from ntkscaling import theory as TH
from ntkscaling.kernels import ShallowReluCov, ShallowReluNtk

ds = D.sample(D.make_mixture(2, 8, 0.5, 0), 1500, 0)
dec = S.eigendecompose(S.build_operator_matrix(ds, ShallowReluNtk()))
times = np.logspace(0, 6, 61)
lo, hi = 20, 375
lam = dec.eigenvalues
in_window = (times >= 1 / (2 * lam[lo])) & (times <= 1 / (2 * lam[hi - 1]))

# %%
# indicator of the ball |x| < 0.5
g = T.realize_target(T.BallIndicator(0.5), ds)
prof = T.expansion_coefficients(g, dec)
L = S.loss_trajectory(dec, prof.c, times)
pred = TH.predict("indicator", ShallowReluNtk(), ds, radius=0.5)
fit = S.fit_power_law(L, (np.argmax(in_window), len(times) - np.argmax(in_window[::-1])), x=times)
print("indicator: xi fitted %.3f, predicted %.3f; C predicted %.4g" % (fit.exponent, pred.xi, pred.C))
print("  tail sums: kappa fitted %.3f, predicted %.3f" % (S.fit_power_law(prof.s, (lo, hi)).exponent, pred.kappa))

# %%
# GP draws; squared coefficients are averaged over a few draws to tame noise
c2 = np.mean([T.expansion_coefficients(T.realize_target(T.GpDraw(ShallowReluCov(), seed=s), ds), dec).c ** 2
              for s in range(8)], axis=0)
L_gp = S.loss_trajectory(dec, np.sqrt(c2), times)
pred_gp = TH.predict("gp", ShallowReluNtk(), ds, cov=ShallowReluCov())
print("GP: xi predicted %.3f (= kappa/nu = %.3f/%.3f)" % (pred_gp.xi, pred_gp.kappa, pred_gp.nu))

# %%
print("\n      t    L_ind   theory    L_gp   theory")
for t, a, b in zip(times[in_window][::4], L[in_window][::4], L_gp[in_window][::4]):
    print(f"{t:9.3g} {a:8.3g} {pred.loss(t):8.3g} {b:8.3g} {pred_gp.loss(t):8.3g}")

# %%
# the loss law itself, checked against direct summation over exact power laws
for t in (1e4, 1e5, 1e6):
    print("t=%g  direct/asymptote = %.5f" % (t, TH.direct_loss_sum(1, 1.5, 1, 1, t) / TH.loss_asymptote(1, 1.5, 1, 1, t)))
