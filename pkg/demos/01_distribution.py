"""A tour of the G0 intensity law.

Run with ``python3 demos/01_distribution.py``.

Returns from a textured SAR scene are modelled as speckle (Gamma with L
looks) times an inverse-Gamma backscatter.  The roughness alpha controls
the tail: near -1 the scene is extremely heterogeneous (urban), while
large |alpha| approaches fully developed speckle over homogeneous areas.
"""
import numpy as np

from g0reg import g0dist

looks = 4.0
print("Unit-mean laws with four looks")
print(f"{'alpha':>7} {'var':>9} {'q99':>8} {'q99.9':>8}")
for alpha in (-2.5, -5.0, -15.0, -100.0):
    p = g0dist.unit_mean(alpha, looks)
    q = g0dist.quantile(p, [0.99, 0.999])
    print(f"{alpha:7.1f} {g0dist.variance(p):9.4f} {q[0]:8.3f} {q[1]:8.3f}")

# The variance tends to 1/L as the texture disappears.
print(f"speckle-only variance 1/L = {1 / looks:.4f}")

# Moments of order h exist only for alpha < -h.
p = g0dist.unit_mean(-1.5, looks)
print(f"\nalpha = -1.5: mean {g0dist.mean(p):.3f}, variance defined: {p.variance_defined()}")
try:
    g0dist.variance(p)
except ArithmeticError as exc:
    print("  ", exc)

# Sampling is the product of the two components, so samples obey the closed forms.
p = g0dist.G0Params(-3.0, 2.0, 4.0)
z = g0dist.sample(p, 200_000, seed=1)
print(f"\nG0(-3, 2, 4): sample mean {z.mean():.4f} vs gamma/(-alpha-1) = {g0dist.mean(p):.4f}")
t = p.gamma + p.looks * z
print(f"E[1/T^2]: sample {np.mean(t ** -2.0):.5f} vs closed form {g0dist.reciprocal_t_moment(p, 2):.5f}")

# Scaling Z only rescales the brightness.
q = g0dist.scale(p, 3.0)
print(f"P(3Z <= 3) = {g0dist.cdf(q, 3.0):.6f} = P(Z <= 1) = {g0dist.cdf(p, 1.0):.6f}")
