"""Finite networks trained by gradient descent: NTK vs mean-field parametrization.

Run: python demos/04_training.py   (about a minute)
"""
# %%
import numpy as np

from ntkscaling import distributions as D
from ntkscaling import kernels as K
from ntkscaling import spectral as S
from ntkscaling import targets as T
from ntkscaling import trainer as TR

ds = D.sample(D.make_mixture(2, 8, 0.5, 0), 300, 0)
y = T.realize_target(T.GpDraw(K.ShallowReluCov(), seed=1), ds)

# %%
# NTK parametrization: training follows the linearized dynamics of the
# analytic kernel, step for step.
dec = S.eigendecompose(S.build_operator_matrix(ds, K.ShallowReluNtk()))
eta = 0.9 * TR.critical_lr(dec)
net = TR.init("ntk", 8000, 2, seed=0)
K0 = TR.function_kernel(net, ds)
e0 = TR.forward(net, ds) - y
log = TR.train(net, ds, y, eta, 400)
lin = S.loss_trajectory(dec, T.expansion_coefficients(e0, dec).c, log.steps, eta=eta)
for k in (0, 10, 100, 400):
    print(f"step {k:4d}  loss {log.losses[k]:.4e}  linearized {lin[k]:.4e}")
print("NTK-mode kernel moved by %.3f (relative Frobenius)"
      % (np.linalg.norm(TR.function_kernel(net, ds) - K0) / np.linalg.norm(K0)))

# %%
# Mean-field parametrization: the kernel itself is learned.
mf = TR.init("mf", 1000, 2, seed=0)
Kmf0 = TR.function_kernel(mf, ds)
dec0 = S.eigendecompose(Kmf0 / ds.M)
eta_mf = 0.4 * TR.critical_lr(dec0)
log_mf = TR.train(mf, ds, y, eta_mf, 2000, snapshot_steps=[0, 200, 2000])
for k, snap in log_mf.snapshots.items():
    d = S.eigendecompose(S.build_operator_matrix(ds, K.MfEmpirical(snap.params_rows())))
    print(f"step {k:5d}  loss {log_mf.losses[k]:.3e}  top eigenvalue {d.eigenvalues[0]:.3f}  "
          f"eta*lambda_0 {eta_mf * d.eigenvalues[0]:.2f}")
print("MF kernel moved by %.3f" % (np.linalg.norm(TR.function_kernel(mf, ds) - Kmf0) / np.linalg.norm(Kmf0)))
