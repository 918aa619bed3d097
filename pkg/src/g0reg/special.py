"""
Special functions used by the likelihood machinery.

log-gamma, digamma, trigamma/tetragamma, beta and the regularized
incomplete beta function, implemented directly so that their numerical
behaviour is pinned by this package's tests rather than by a binding.

Every function accepts a Python scalar (fast pure-Python path, returns a
float) or an array-like (vectorized NumPy path, returns an ndarray).
"""
import math

import numpy as np

from .errors import DomainError

__all__ = [
    "log_gamma",
    "digamma",
    "polygamma",
    "trigamma",
    "log_beta",
    "beta",
    "reg_inc_beta",
]

EULER_GAMMA = 0.57721566490153286061
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# B_2, B_4, ..., B_18
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
)

# Asymptotic expansions are used from this point upward.
_ASYMPTOTIC_FROM = 10.0


def _zeta_minus_one(k, terms=50):
    # sum_{j>=2} j^-k with an Euler-Maclaurin tail past `terms`
    N = float(terms)
    head = math.fsum(j ** -k for j in range(terms, 1, -1))
    tail = (
        N ** (1 - k) / (k - 1)
        - 0.5 * N ** -k
        + k * N ** (-k - 1) / 12.0
        - k * (k + 1) * (k + 2) * N ** (-k - 3) / 720.0
    )
    return head + tail


# log Gamma(2 + d) = d (1 - gamma_E) + sum_{k>=2} (-1)^k (zeta(k) - 1) d^k / k,
# valid for |d| < 2; used on |d| <= 0.5 where 30 terms reach 1e-17.
_LG2_COEF = np.array(
    [(-1) ** k * _zeta_minus_one(k) / k for k in range(2, 32)]
)
_LG2_COEF_REV = tuple(reversed(_LG2_COEF.tolist()))


def _check_positive(x, name="x"):
    if isinstance(x, np.ndarray):
        if not np.all(x > 0):
            raise DomainError(f"{name} must be > 0")
    elif not x > 0:
        raise DomainError(f"{name} must be > 0, got {x!r}")


def _is_scalar(x):
    return isinstance(x, (int, float, np.floating, np.integer)) or (
        isinstance(x, np.ndarray) and x.ndim == 0
    )


# ---------------------------------------------------------------- log gamma


def _lg2_series_scalar(d):
    acc = 0.0
    for c in _LG2_COEF_REV:
        acc = acc * d + c
    return d * (1.0 - EULER_GAMMA) + acc * d * d


def _lg1_series_scalar(e):
    # log Gamma(1 + e) = log Gamma(2 + e) - log1p(e), regrouped to avoid cancellation
    acc = 0.0
    for c in _LG2_COEF_REV:
        acc = acc * e + c
    return -EULER_GAMMA * e + acc * e * e + (e - math.log1p(e))


def _stirling_scalar(x):
    inv = 1.0 / x
    inv2 = inv * inv
    acc = 0.0
    for k in range(len(_BERNOULLI), 0, -1):
        acc = acc * inv2 + _BERNOULLI[k - 1] / (2 * k * (2 * k - 1))
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + acc * inv


def _log_gamma_scalar(x):
    if x >= _ASYMPTOTIC_FROM:
        return _stirling_scalar(x)
    if x < 0.5:
        # Gamma(x) = Gamma(x + 1) / x
        return _log_gamma_scalar(x + 1.0) - math.log(x)
    if x < 1.5:
        return _lg1_series_scalar(x - 1.0)
    if x <= 2.5:
        return _lg2_series_scalar(x - 2.0)
    # step down into [1.5, 2.5]; all log terms are positive
    prod = 1.0
    logs = 0.0
    while x > 2.5:
        x -= 1.0
        prod *= x
        if prod > 1e280:
            logs += math.log(prod)
            prod = 1.0
    return _lg2_series_scalar(x - 2.0) + logs + math.log(prod)


def _lg2_series_array(d):
    acc = np.zeros_like(d)
    for c in _LG2_COEF_REV:
        acc = acc * d + c
    return d * (1.0 - EULER_GAMMA) + acc * d * d


def _lg1_series_array(e):
    acc = np.zeros_like(e)
    for c in _LG2_COEF_REV:
        acc = acc * e + c
    return -EULER_GAMMA * e + acc * e * e + (e - np.log1p(e))


def _stirling_array(x):
    inv = 1.0 / x
    inv2 = inv * inv
    acc = np.zeros_like(x)
    for k in range(len(_BERNOULLI), 0, -1):
        acc = acc * inv2 + _BERNOULLI[k - 1] / (2 * k * (2 * k - 1))
    return (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + acc * inv


def _log_gamma_array(x):
    out = np.empty_like(x)
    big = x >= _ASYMPTOTIC_FROM
    if big.any():
        out[big] = _stirling_array(x[big])
    small = ~big
    if small.any():
        xs = x[small].copy()
        corr = np.zeros_like(xs)
        low = xs < 0.5
        corr[low] -= np.log(xs[low])
        xs[low] += 1.0
        # (2.5, 10): walk down to [1.5, 2.5]
        logprod = np.zeros_like(xs)
        high = xs > 2.5
        while high.any():
            xs[high] -= 1.0
            logprod[high] += np.log(xs[high])
            high = xs > 2.5
        mid = xs < 1.5
        res = np.empty_like(xs)
        res[mid] = _lg1_series_array(xs[mid] - 1.0)
        res[~mid] = _lg2_series_array(xs[~mid] - 2.0)
        out[small] = res + logprod + corr
    return out


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``.

    Uses the Taylor series of ``log Gamma`` about 2 on ``[0.5, 2.5]``
    (reached by the recurrence from anywhere below 10) and the Stirling
    series beyond.

    Raises
    ------
    DomainError
        If any ``x <= 0``.
    """
    if _is_scalar(x):
        x = float(x)
        _check_positive(x)
        return _log_gamma_scalar(x)
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    return _log_gamma_array(x)


# ----------------------------------------------------------------- digamma


def _digamma_scalar(x):
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    s = 0.0
    for k in range(len(_BERNOULLI), 0, -1):
        s = s * inv2 + _BERNOULLI[k - 1] / (2 * k)
    return acc + math.log(x) - 0.5 / x - s * inv2


def _digamma_array(x):
    x = x.copy()
    acc = np.zeros_like(x)
    low = x < _ASYMPTOTIC_FROM
    while low.any():
        acc[low] -= 1.0 / x[low]
        x[low] += 1.0
        low = x < _ASYMPTOTIC_FROM
    inv2 = 1.0 / (x * x)
    s = np.zeros_like(x)
    for k in range(len(_BERNOULLI), 0, -1):
        s = s * inv2 + _BERNOULLI[k - 1] / (2 * k)
    return acc + np.log(x) - 0.5 / x - s * inv2


def digamma(x):
    """Digamma function, the derivative of ``log_gamma``."""
    if _is_scalar(x):
        x = float(x)
        _check_positive(x)
        return _digamma_scalar(x)
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    return _digamma_array(x)


# -------------------------------------------------------------- polygamma


def _trigamma_scalar(x):
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    s = 0.0
    for k in range(len(_BERNOULLI), 0, -1):
        s = s * inv2 + _BERNOULLI[k - 1]
    return acc + inv + 0.5 * inv2 + s * inv2 * inv


def _tetragamma_scalar(x):
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc -= 2.0 / (x * x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    s = 0.0
    for k in range(len(_BERNOULLI), 0, -1):
        s = s * inv2 + (2 * k + 1) * _BERNOULLI[k - 1]
    return acc - inv2 - inv2 * inv - s * inv2 * inv2


def _polygamma_array(k, x):
    x = x.copy()
    acc = np.zeros_like(x)
    low = x < _ASYMPTOTIC_FROM
    while low.any():
        xl = x[low]
        if k == 1:
            acc[low] += 1.0 / (xl * xl)
        else:
            acc[low] -= 2.0 / (xl * xl * xl)
        x[low] += 1.0
        low = x < _ASYMPTOTIC_FROM
    inv = 1.0 / x
    inv2 = inv * inv
    s = np.zeros_like(x)
    for j in range(len(_BERNOULLI), 0, -1):
        c = _BERNOULLI[j - 1] if k == 1 else (2 * j + 1) * _BERNOULLI[j - 1]
        s = s * inv2 + c
    if k == 1:
        return acc + inv + 0.5 * inv2 + s * inv2 * inv
    return acc - inv2 - inv2 * inv - s * inv2 * inv2


def polygamma(k, x):
    """Polygamma function of order ``k`` in {1, 2}.

    ``polygamma(1, x)`` is the trigamma function and ``polygamma(2, x)``
    the tetragamma function.
    """
    if k not in (1, 2):
        raise DomainError(f"polygamma order must be 1 or 2, got {k!r}")
    if _is_scalar(x):
        x = float(x)
        _check_positive(x)
        return _trigamma_scalar(x) if k == 1 else _tetragamma_scalar(x)
    x = np.asarray(x, dtype=float)
    _check_positive(x)
    return _polygamma_array(k, x)


def trigamma(x):
    return polygamma(1, x)


# -------------------------------------------------------------------- beta


def log_beta(a, b):
    """log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b)."""
    if _is_scalar(a) and _is_scalar(b):
        a, b = float(a), float(b)
        return log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def beta(a, b):
    lb = log_beta(a, b)
    return math.exp(lb) if isinstance(lb, float) else np.exp(lb)


# ------------------------------------------------------- incomplete beta

_TINY = 1e-300
_CF_EPS = 1e-16
_CF_MAXITER = 5000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz), vectorized."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAXITER + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        aa_, bb_, xx = a[idx], b[idx], x[idx]
        cc, dd, hh = c[idx], d[idx], h[idx]
        m2 = 2.0 * m
        num = m * (bb_ - m) * xx / ((qam[idx] + m2) * (aa_ + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        hh = hh * dd * cc
        num = -(aa_ + m) * (qab[idx] + m) * xx / ((aa_ + m2) * (qap[idx] + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        delta = dd * cc
        hh = hh * delta
        c[idx], d[idx], h[idx] = cc, dd, hh
        active[idx] = np.abs(delta - 1.0) > _CF_EPS
    return h


def _inc_beta_pair(x, y, a, b):
    """I_x(a, b) where ``y = 1 - x`` is supplied separately for accuracy."""
    x, y, a, b = np.broadcast_arrays(
        np.asarray(x, float), np.asarray(y, float), np.asarray(a, float), np.asarray(b, float)
    )
    shape = x.shape
    x, y, a, b = (v.ravel().copy() for v in (x, y, a, b))
    out = np.empty_like(x)
    zero = x <= 0.0
    one = y <= 0.0
    out[zero] = 0.0
    out[one] = 1.0
    mid = ~(zero | one)
    if mid.any():
        xm, ym, am, bm = x[mid], y[mid], a[mid], b[mid]
        logfront = (
            _log_gamma_array(am + bm)
            - _log_gamma_array(am)
            - _log_gamma_array(bm)
            + am * np.log(xm)
            + bm * np.log(ym)
        )
        front = np.exp(logfront)
        direct = xm < (am + 1.0) / (am + bm + 2.0)
        res = np.empty_like(xm)
        if direct.any():
            res[direct] = front[direct] * _betacf(am[direct], bm[direct], xm[direct]) / am[direct]
        flip = ~direct
        if flip.any():
            res[flip] = 1.0 - front[flip] * _betacf(bm[flip], am[flip], ym[flip]) / bm[flip]
        out[mid] = np.clip(res, 0.0, 1.0)
    return out.reshape(shape)


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function ``I_x(a, b)``.

    Parameters
    ----------
    x : float or array_like
        Upper integration limit in ``[0, 1]``.
    a, b : float or array_like
        Positive shape parameters.

    Returns
    -------
    float or ndarray
        ``B(x; a, b) / B(a, b)``, monotone nondecreasing in ``x``.
    """
    scalar = _is_scalar(x) and _is_scalar(a) and _is_scalar(b)
    x_arr = np.asarray(x, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(np.isnan(x_arr)) or np.any((x_arr < 0) | (x_arr > 1)):
        raise DomainError("x must lie in [0, 1]")
    _check_positive(np.atleast_1d(a_arr), "a")
    _check_positive(np.atleast_1d(b_arr), "b")
    out = _inc_beta_pair(x_arr, 1.0 - x_arr, a_arr, b_arr)
    return float(out) if scalar else out
