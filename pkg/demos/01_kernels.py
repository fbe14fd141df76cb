"""Kernel families on the extended-input geometry.

Run: python demos/01_kernels.py
"""
# %%
import numpy as np

from ntkscaling import kernels as K

# Two points in the plane.  The bias enters as an extra coordinate, so the
# "angle" between x and x' is never pi and phi = 0 only on the diagonal.
g = K.geometry([1.0, 0.0], [0.0, 1.0])
print("r, r', phi/pi:", g.r, g.r_prime, g.phi / np.pi)

theta, sigma = K.ntk_shallow_relu(g)
print("shallow ReLU NTK %.6f, covariance %.6f" % (theta, sigma))

# %%
# ReLU^q with q = 1 is the ordinary ReLU kernel; quadrature and the
# hypergeometric form agree with the closed form.
for method in ("quad", "hyp"):
    print(method, K.ntk_relu_q(g, 1.0, method=method) - theta)

# %%
# Near the diagonal the kernel has a |phi| kink whose amplitude controls the
# eigenvalue decay.  Check the slope numerically at x = (0.4, 0.1).
x = np.array([0.4, 0.1])
r = K.extended_norm(x, 1.0, 1.0)
phis = np.array([1e-4, 2e-4])
vals = K.ntk_shallow_relu(K.Geometry(r, r, phis))[0]
A = K.singularity_info(K.ShallowReluNtk()).amplitude(x[None])[0]
print("slope %.6f vs amplitude %.6f" % (np.diff(vals)[0] / np.diff(phis)[0], A))

# degrees of the diagonal singularity for a few kernels
for spec in (K.ShallowReluNtk(), K.ShallowReluCov(), K.ReluPowerQ(0.75), K.ReluPowerQ(2.0), K.DeepRelu(4)):
    print(f"{type(spec).__name__:15s} degree {K.singularity_info(spec).degree:g}")

# %%
# Deep kernels: depth 2 is the shallow kernel; deeper kernels keep the same
# singularity degree, hence the same eigenvalue exponent.
X = np.random.default_rng(0).normal(size=(5, 3))
print("depth 2 - shallow:", np.abs(K.DeepRelu(2).gram(X) - K.ShallowReluNtk().gram(X)).max())
print(np.round(K.DeepRelu(4).gram(X), 3))

# %%
# The mean-field kernel of a wide net with Gaussian parameters is the same NTK.
rng = np.random.default_rng(1)
params = rng.standard_normal((200_000, 4))  # (c, w1, w2, b)
print("MF empirical %.4f vs analytic %.4f" % (K.ntk_mf_empirical(params, X[0, :2], X[1, :2]),
                                              K.ShallowReluNtk().gram(X[:2, :2])[0, 1]))
