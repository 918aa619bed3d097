"""
The G0 intensity distribution.

``Z = X * Y`` with ``X`` inverse-gamma backscatter (shape ``-alpha``,
scale ``gamma``) and ``Y ~ Gamma(L, L)`` unit-mean speckle.  The density is

    f(z) = L^L Gamma(L - alpha) z^(L-1) (gamma + L z)^(alpha - L)
           / (gamma^alpha Gamma(-alpha) Gamma(L)),    z > 0.

With ``T = gamma + L Z`` the ratio ``gamma / T`` follows Beta(-alpha, L),
which gives the cdf in terms of the regularized incomplete beta function
and the reciprocal moments of ``T`` in closed form.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, MomentDiverges
from .special import _inc_beta_pair, log_beta, log_gamma

__all__ = [
    "G0Params",
    "logpdf",
    "pdf",
    "cdf",
    "sf",
    "quantile",
    "sample",
    "moment",
    "mean",
    "variance",
    "reciprocal_t_moment",
    "reciprocal_t_moment_product",
    "scale",
    "unit_mean",
]


@dataclass(frozen=True)
class G0Params:
    """Roughness ``alpha < 0``, brightness ``gamma > 0`` and ``looks > 0``."""

    alpha: float
    gamma: float
    looks: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha < 0):
            raise DomainError(f"alpha must be finite and < 0, got {self.alpha!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"gamma must be finite and > 0, got {self.gamma!r}")
        if not (math.isfinite(self.looks) and self.looks > 0):
            raise DomainError(f"looks must be finite and > 0, got {self.looks!r}")

    def mean_defined(self):
        return self.alpha < -1

    def variance_defined(self):
        return self.alpha < -2


def unit_mean(alpha, looks):
    """Parameters of the unit-mean member, ``gamma = -alpha - 1``."""
    return G0Params(alpha, -alpha - 1.0, looks)


def _log_norm(p):
    a, L = -p.alpha, p.looks
    return (
        L * math.log(L)
        + log_gamma(L + a)
        - log_gamma(a)
        - log_gamma(L)
        - p.alpha * math.log(p.gamma)
    )


def _as_nonneg(z):
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    if np.any(np.isnan(z)) or np.any(z < 0):
        raise DomainError("z must be >= 0")
    return z, scalar


def logpdf(p, z):
    """Log-density, evaluated entirely in log space."""
    z, scalar = _as_nonneg(z)
    L = p.looks
    with np.errstate(divide="ignore"):
        if L == 1.0:
            zterm = np.zeros_like(z)
        else:
            zterm = (L - 1.0) * np.log(z)
        out = _log_norm(p) + zterm + (p.alpha - L) * np.log(p.gamma + L * z)
    return float(out) if scalar else out


def pdf(p, z):
    out = np.exp(logpdf(p, z))
    return float(out) if np.ndim(out) == 0 else out


def cdf(p, z):
    """``P(Z <= z) = I_x(L, -alpha)`` with ``x = L z / (gamma + L z)``."""
    z, scalar = _as_nonneg(z)
    t = p.gamma + p.looks * z
    out = _inc_beta_pair(p.looks * z / t, p.gamma / t, p.looks, -p.alpha)
    return float(out) if scalar else out


def sf(p, z):
    """Survival function ``1 - cdf``, accurate in the right tail."""
    z, scalar = _as_nonneg(z)
    t = p.gamma + p.looks * z
    out = _inc_beta_pair(p.gamma / t, p.looks * z / t, -p.alpha, p.looks)
    return float(out) if scalar else out


def quantile(p, u, tol=1e-13, maxiter=200):
    """Inverse cdf.

    Safeguarded Newton iteration on ``log z``: a bracket is grown from a
    gamma-law starting guess until it straddles ``u``, then each step is
    Newton when it stays inside the bracket and bisection otherwise.
    """
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("u must lie in (0, 1)")

    # speckle-only (gamma-law) guess: median of the unit-mean law scaled by gamma/(-alpha)
    t = np.full(u.shape, math.log(p.gamma / max(-p.alpha - 1.0, 0.5)))
    lo = t - 1.0
    hi = t + 1.0
    for _ in range(2000):
        bad = cdf(p, np.exp(lo)) > u
        if not bad.any():
            break
        lo[bad] -= 2.0 * (hi[bad] - lo[bad])
    for _ in range(2000):
        bad = cdf(p, np.exp(hi)) < u
        if not bad.any():
            break
        hi[bad] += 2.0 * (hi[bad] - lo[bad])

    t = 0.5 * (lo + hi)
    for _ in range(maxiter):
        z = np.exp(t)
        # F(z) - u, taken from the survival side in the upper half
        f = np.where(u > 0.5, (1.0 - u) - sf(p, z), cdf(p, z) - u)
        lo = np.where(f < 0, t, lo)
        hi = np.where(f > 0, t, hi)
        dens = np.exp(logpdf(p, z) + t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            newton = t - f / dens
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        t_new = np.where(inside, newton, 0.5 * (lo + hi))
        done = np.abs(t_new - t) <= tol * np.maximum(1.0, np.abs(t))
        t = t_new
        if done.all():
            break
    out = np.exp(t)
    return float(out[0]) if scalar else out


def sample(p, n, seed=None):
    """Draw ``n`` variates as the product of inverse-gamma and gamma draws.

    ``seed`` may be an int, a ``numpy.random.Generator`` or None.  The
    gamma draws use NumPy's Marsaglia-Tsang sampler.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.gamma(-p.alpha, 1.0 / p.gamma, size=n)
    y = rng.gamma(p.looks, 1.0 / p.looks, size=n)
    return y / g


def moment(p, h):
    """``E[Z^h] = (gamma/L)^h B(L+h, -alpha-h) / B(L, -alpha)`` for ``alpha < -h``."""
    if h < 1 or int(h) != h:
        raise DomainError("h must be a positive integer")
    a, L = -p.alpha, p.looks
    if a <= h:
        raise MomentDiverges(f"moment of order {h} diverges for alpha={p.alpha}")
    return math.exp(h * math.log(p.gamma / L) + log_beta(L + h, a - h) - log_beta(L, a))


def mean(p):
    return moment(p, 1)


def variance(p):
    """``mu^2 [((alpha+1)/(alpha+2)) (L+1)/L - 1]``, finite for ``alpha < -2``."""
    if p.alpha >= -2:
        raise MomentDiverges(f"variance diverges for alpha={p.alpha}")
    mu = p.gamma / (-p.alpha - 1.0)
    return mu * mu * (((p.alpha + 1.0) / (p.alpha + 2.0)) * (p.looks + 1.0) / p.looks - 1.0)


def reciprocal_t_moment(p, h):
    """``E[(gamma + L Z)^-h] = gamma^-h B(-alpha+h, L) / B(-alpha, L)``."""
    if h < 1 or int(h) != h:
        raise DomainError("h must be a positive integer")
    a = -p.alpha
    return math.exp(-h * math.log(p.gamma) + log_beta(a + h, p.looks) - log_beta(a, p.looks))


def reciprocal_t_moment_product(p, h):
    """Same quantity as :func:`reciprocal_t_moment` via the finite product form."""
    if h < 1 or int(h) != h:
        raise DomainError("h must be a positive integer")
    a = -p.alpha
    out = p.gamma ** -h
    for k in range(int(h)):
        out *= (a + k) / (a + p.looks + k)
    return out


def scale(p, c):
    """Law of ``c Z``: only the brightness changes, ``gamma -> c gamma``."""
    if not c > 0:
        raise DomainError(f"scale factor must be > 0, got {c!r}")
    return G0Params(p.alpha, c * p.gamma, p.looks)
