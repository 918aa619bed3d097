"""
G0 regression structure.

``Z_k ~ G0(alpha, gamma_k, L)`` with ``gamma_k = mu_k (-alpha - 1)`` and
``g(mu_k) = x_k' beta``.  This module holds the link functions, the
log-likelihood, its analytic gradient, the observed information and the
expected (Fisher) information with its partitioned closed-form inverse.

Parameter vectors are ordered ``(beta_0..beta_p, alpha, L)``; when the
spec fixes the number of looks the ``L`` entry is dropped everywhere.

Expected-information constants are obtained from the Beta(-alpha, L) law
of ``gamma_k / T_k`` (``T_k = gamma_k + L z_k``):

    E[1/T]   = a / ((a+L) mu c)
    E[1/T^2] = a (a+1) / ((a+L)(a+L+1) mu^2 c^2)
    E[z/T]   = 1 / (a+L)
    E[z/T^2] = a / ((a+L)(a+L+1) mu c)
    E[z^2/T^2] = (L+1) / (L (a+L)(a+L+1))

with ``a = -alpha`` and ``c = -alpha - 1``.  In particular the ``L`` row
is *not* orthogonal to ``beta`` or ``alpha``.
"""
from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np
import scipy.linalg

from .errors import DegenerateTheta, DomainError, NonFinite, SingularInformation
from .special import digamma, log_gamma, polygamma

__all__ = [
    "Link",
    "link_eval",
    "link_inv",
    "link_deriv",
    "link_deriv2",
    "RegressionSpec",
    "Theta",
    "Workspace",
    "workspace",
    "loglik",
    "loglik_terms",
    "score",
    "fisher_information",
    "fisher_information_inverse",
    "observed_information",
    "cross_derivatives",
    "info_constants",
]


class Link(str, Enum):
    """Mean link functions.

    ``EXTENDED_LOGIT`` uses the exponential cdf ``F(mu) = 1 - exp(-mu)``
    and ``COMP_LOG_LOG`` the log-logistic cdf ``F(mu) = mu / (1 + mu)``;
    with those choices neither collapses onto the log link.
    """

    LOG = "log"
    EXTENDED_LOGIT = "extended_logit"
    COMP_LOG_LOG = "cloglog"


def _check_mu(mu):
    mu = np.asarray(mu, dtype=float)
    if np.any(~(mu > 0)):
        raise DomainError("mu must be > 0")
    return mu


def link_eval(link, mu):
    mu = _check_mu(mu)
    link = Link(link)
    if link is Link.LOG:
        return np.log(mu)
    if link is Link.EXTENDED_LOGIT:
        # log(F / (1 - F)) = log(exp(mu) - 1)
        return np.where(mu > 30, mu + np.log1p(-np.exp(-mu)), np.log(np.expm1(np.minimum(mu, 30))))
    return np.log(np.log1p(mu))


def link_inv(link, eta):
    eta = np.asarray(eta, dtype=float)
    link = Link(link)
    if link is Link.LOG:
        return np.exp(eta)
    if link is Link.EXTENDED_LOGIT:
        return np.logaddexp(0.0, eta)
    return np.expm1(np.exp(eta))


def link_deriv(link, mu):
    """g'(mu)."""
    mu = _check_mu(mu)
    link = Link(link)
    if link is Link.LOG:
        return 1.0 / mu
    if link is Link.EXTENDED_LOGIT:
        return -1.0 / np.expm1(-mu)
    lp = np.log1p(mu)
    return 1.0 / ((1.0 + mu) * lp)


def link_deriv2(link, mu):
    """g''(mu)."""
    mu = _check_mu(mu)
    link = Link(link)
    if link is Link.LOG:
        return -1.0 / (mu * mu)
    if link is Link.EXTENDED_LOGIT:
        em = -np.expm1(-mu)
        return -np.exp(-mu) / (em * em)
    lp = np.log1p(mu)
    return -(lp + 1.0) / ((1.0 + mu) ** 2 * lp * lp)


@dataclass
class RegressionSpec:
    """Design matrix (intercept first), positive responses, link, optional fixed looks."""

    design: np.ndarray
    response: np.ndarray
    link: Link = Link.LOG
    fix_looks: float | None = None
    names: list | None = None

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        z = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != z.size:
            raise DomainError("design must be n x (p+1) with n = len(response)")
        n, k = X.shape
        if not np.all(X[:, 0] == 1.0):
            raise DomainError("first design column must be the intercept (all ones)")
        if n <= k:
            raise DomainError(f"need n > p+1 observations, got n={n} for {k} coefficients")
        if not np.all(np.isfinite(X)):
            raise DomainError("design contains non-finite values")
        if not np.all(np.isfinite(z)) or np.any(z <= 0):
            raise DomainError("responses must be finite and strictly positive")
        if k > 1:
            _, r, _ = scipy.linalg.qr(X, mode="economic", pivoting=True)
            d = np.abs(np.diag(r))
            if d[-1] <= max(n, k) * np.finfo(float).eps * d[0]:
                raise DomainError("design matrix is rank deficient")
        if self.fix_looks is not None and not self.fix_looks > 0:
            raise DomainError("fix_looks must be > 0")
        self.design = X
        self.response = z
        self.link = Link(self.link)
        if self.names is None:
            self.names = [f"beta{j}" for j in range(k)]

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def ncoef(self):
        return self.design.shape[1]

    @property
    def n_free(self):
        return self.ncoef + (1 if self.fix_looks is not None else 2)

    @property
    def param_names(self):
        names = list(self.names) + ["alpha"]
        if self.fix_looks is None:
            names.append("L")
        return names


@dataclass
class Theta:
    beta: np.ndarray
    alpha: float
    looks: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.alpha = float(self.alpha)
        self.looks = float(self.looks)
        if not self.alpha < -1:
            raise DomainError(f"alpha must be < -1, got {self.alpha}")
        if not self.looks > 0:
            raise DomainError(f"looks must be > 0, got {self.looks}")

    def vector(self, include_looks=True):
        tail = [self.alpha, self.looks] if include_looks else [self.alpha]
        return np.concatenate([self.beta, tail])

    @classmethod
    def from_vector(cls, vec, spec):
        vec = np.asarray(vec, dtype=float)
        k = spec.ncoef
        looks = spec.fix_looks if spec.fix_looks is not None else vec[k + 1]
        return cls(vec[:k], vec[k], looks)


@dataclass
class Workspace:
    """Per-call derived quantities; never shared between calls."""

    eta: np.ndarray
    mu: np.ndarray
    gamma_k: np.ndarray
    t: np.ndarray
    e_diag: np.ndarray
    w_diag: np.ndarray
    log_mu: np.ndarray = field(repr=False)


def workspace(spec, th):
    X, z = spec.design, spec.response
    L = spec.fix_looks if spec.fix_looks is not None else th.looks
    a, c = -th.alpha, -th.alpha - 1.0
    eta = X @ th.beta
    if spec.link is Link.LOG:
        mu = np.exp(eta)
        log_mu = eta
        e = mu
        gp = None
    else:
        mu = link_inv(spec.link, eta)
        log_mu = np.log(mu)
        gp = link_deriv(spec.link, mu)
        e = 1.0 / gp
    gam = mu * c
    t = gam + L * z
    if not (np.all(np.isfinite(t)) and np.all(gam > 0)):
        raise NonFinite("non-finite or non-positive T_k")
    inv_mu_gp2 = (e / mu) ** 2
    w = (L / (L + a + 1.0)) * inv_mu_gp2
    return Workspace(eta=eta, mu=mu, gamma_k=gam, t=t, e_diag=e, w_diag=w, log_mu=log_mu)


def _looks(spec, th):
    return spec.fix_looks if spec.fix_looks is not None else th.looks


def loglik_terms(spec, th, ws=None):
    """Per-observation log-likelihood contributions."""
    ws = ws or workspace(spec, th)
    L, al = _looks(spec, th), th.alpha
    a, c = -al, -al - 1.0
    z = spec.response
    const = L * math.log(L) + log_gamma(L + a) - al * math.log(c) - log_gamma(a) - log_gamma(L)
    zterm = 0.0 if L == 1.0 else (L - 1.0) * np.log(z)
    return const - al * ws.log_mu + zterm + (al - L) * np.log(ws.t)


def loglik(spec, th):
    """Log-likelihood ``sum_k l_k(theta)``.

    Raises
    ------
    NonFinite
        If some ``T_k`` is not positive or the sum is not finite.
    """
    val = float(np.sum(loglik_terms(spec, th)))
    if not math.isfinite(val):
        raise NonFinite("log-likelihood is not finite")
    return val


def _score(spec, th, ws):
    X, z = spec.design, spec.response
    L, al = _looks(spec, th), th.alpha
    a, c = -al, -al - 1.0
    n = spec.n
    mu, t, e = ws.mu, ws.t, ws.e_diag
    c1 = (L + a) * c
    dl_dmu = -al / mu - c1 / t
    u_beta = X.T @ (dl_dmu * e)
    u1 = -digamma(L + a) + digamma(a) - math.log(c) + al / c
    u_alpha = n * u1 + np.sum(np.log(t) - ws.log_mu) - (al - L) * np.sum(mu / t)
    if spec.fix_looks is not None:
        return np.concatenate([u_beta, [u_alpha]])
    u2 = 1.0 + math.log(L) + digamma(L + a) - digamma(L)
    zt = z / t
    u_l = n * u2 + np.sum(np.log(zt)) + (al - L) * np.sum(zt)
    return np.concatenate([u_beta, [u_alpha, u_l]])


def score(spec, th):
    """Gradient of :func:`loglik` in natural parameters."""
    return _score(spec, th, workspace(spec, th))


def loglik_and_score(spec, th):
    ws = workspace(spec, th)
    val = float(np.sum(loglik_terms(spec, th, ws)))
    if not math.isfinite(val):
        raise NonFinite("log-likelihood is not finite")
    return val, _score(spec, th, ws)


def info_constants(alpha, looks):
    """Per-observation expected second-derivative constants.

    Returns a dict with

    ``c1``        (L - alpha)(-alpha - 1)
    ``c2``        mu * E[d2 l / d mu d alpha]
    ``c3``        E[d2 l / d alpha^2]
    ``c_beta_L``  mu * E[d2 l / d mu d L]
    ``c_alpha_L`` E[d2 l / d alpha d L]
    ``c4``        E[d2 l / d L^2]
    ``omega``     L / (L - alpha + 1), so E[d2 l / d mu^2] = alpha * omega / mu^2
    """
    L, a = float(looks), -float(alpha)
    c = a - 1.0
    aL = a + L
    aL1 = a + L + 1.0
    du1 = polygamma(1, aL) - polygamma(1, a) + 1.0 / c - 1.0 / (c * c)
    c2 = -1.0 + (2 * a + L - 1.0) * a / (c * aL) - a * (a + 1.0) / (c * aL1)
    c3 = du1 - 2.0 * a / (aL * c) + a * (a + 1.0) / (aL1 * c * c)
    c_beta_l = -a / (aL * aL1)
    c_alpha_l = -polygamma(1, aL) + 1.0 / aL + a / (aL * c) - a / (aL1 * c)
    c4 = polygamma(1, aL) - polygamma(1, L) + 1.0 / L - 2.0 / aL + (L + 1.0) / (L * aL1)
    return {
        "c1": aL * c,
        "c2": c2,
        "c3": c3,
        "c_beta_L": c_beta_l,
        "c_alpha_L": c_alpha_l,
        "c4": c4,
        "omega": L / aL1,
        "du1": du1,
    }


def _fisher_blocks(spec, th, ws):
    X = spec.design
    n = spec.n
    L, al = _looks(spec, th), th.alpha
    k = info_constants(al, L)
    xtwx = X.T @ (ws.w_diag[:, None] * X)
    v = X.T @ (ws.e_diag / ws.mu)  # X' E mu*
    return k, xtwx, v, n


def fisher_information(spec, th):
    """Expected information ``K(theta) = -E[Hessian]`` (positive definite).

    Blocks: ``K_bb = -alpha X'WX``, ``K_ba = -c2 X'E mu*``,
    ``K_aa = -n c3``, ``K_bL = -c_beta_L X'E mu*``, ``K_aL = -n c_alpha_L``,
    ``K_LL = -n c4``.
    """
    ws = workspace(spec, th)
    k, xtwx, v, n = _fisher_blocks(spec, th, ws)
    p = spec.ncoef
    q = spec.n_free
    K = np.zeros((q, q))
    K[:p, :p] = -th.alpha * xtwx
    K[:p, p] = K[p, :p] = -k["c2"] * v
    K[p, p] = -n * k["c3"]
    if spec.fix_looks is None:
        K[:p, p + 1] = K[p + 1, :p] = -k["c_beta_L"] * v
        K[p, p + 1] = K[p + 1, p] = -n * k["c_alpha_L"]
        K[p + 1, p + 1] = -n * k["c4"]
    try:
        np.linalg.cholesky(K[:p, :p])
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("beta block of the information is not positive definite") from exc
    return K


def fisher_information_inverse(spec, th):
    """Closed-form partitioned inverse of :func:`fisher_information`.

    The ``(beta, alpha)`` block is inverted through the Schur complement
    ``s = K_aa - K_ab K_bb^{-1} K_ba`` (only ``X'WX`` is factorized); the
    ``L`` row, when free, is appended by a second Schur step.
    """
    ws = workspace(spec, th)
    k, xtwx, v, n = _fisher_blocks(spec, th, ws)
    p = spec.ncoef
    try:
        cf = scipy.linalg.cho_factor(xtwx)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("X'WX is not positive definite") from exc
    al = th.alpha
    # K_bb^{-1} = (X'WX)^{-1} / (-alpha);  K_ba = -c2 v
    xtwx_inv_v = scipy.linalg.cho_solve(cf, v)
    zeta = (k["c2"] / al) * xtwx_inv_v  # K_bb^{-1} K_ba
    schur = -n * k["c3"] - (k["c2"] ** 2 / -al) * float(v @ xtwx_inv_v)
    if not schur > 0:
        raise DegenerateTheta(f"Schur complement of the alpha block is {schur:.3g}")
    kbb_inv = scipy.linalg.cho_solve(cf, np.eye(p)) / -al
    A_inv = np.empty((p + 1, p + 1))
    A_inv[:p, :p] = kbb_inv + np.outer(zeta, zeta) / schur
    A_inv[:p, p] = A_inv[p, :p] = -zeta / schur
    A_inv[p, p] = 1.0 / schur
    if spec.fix_looks is not None:
        return A_inv
    b = np.concatenate([-k["c_beta_L"] * v, [-n * k["c_alpha_L"]]])
    ups = A_inv @ b
    phi = -n * k["c4"] - float(b @ ups)
    if not phi > 0:
        raise DegenerateTheta(f"Schur complement of the looks block is {phi:.3g}")
    out = np.empty((p + 2, p + 2))
    out[: p + 1, : p + 1] = A_inv + np.outer(ups, ups) / phi
    out[: p + 1, p + 1] = out[p + 1, : p + 1] = -ups / phi
    out[p + 1, p + 1] = 1.0 / phi
    return out


def _obs_diagonals(spec, th, ws):
    """Diagonal weights of the observed information (all as -d2 l)."""
    z = spec.response
    L, al = _looks(spec, th), th.alpha
    a, c = -al, -al - 1.0
    c1 = (L + a) * c
    mu, t, e = ws.mu, ws.t, ws.e_diag
    dl_dmu = -al / mu - c1 / t
    d2_mumu = al / mu**2 + c1 * c / t**2
    if spec.link is Link.LOG:
        # mu'' = d2 mu / d eta2 = mu for the log link
        q = -(d2_mumu * e * e + dl_dmu * mu)
    else:
        gp = 1.0 / e
        mu2 = -link_deriv2(spec.link, mu) / gp**3
        q = -(d2_mumu * e * e + dl_dmu * mu2)
    m = -(-1.0 / mu + (L - 2 * al - 1.0) / t - c1 * mu / t**2)
    nn = -(-c / t + c1 * z / t**2)
    return q, m * e, nn * e


def observed_information(spec, th):
    """``-d2 l / d theta d theta'`` assembled from per-observation weights."""
    ws = workspace(spec, th)
    X, z = spec.design, spec.response
    n = spec.n
    L, al = _looks(spec, th), th.alpha
    a = -al
    mu, t = ws.mu, ws.t
    q, me, ne = _obs_diagonals(spec, th, ws)
    p = spec.ncoef
    J = np.zeros((spec.n_free, spec.n_free))
    J[:p, :p] = X.T @ (q[:, None] * X)
    J[:p, p] = J[p, :p] = X.T @ me
    du1 = polygamma(1, L + a) - polygamma(1, a) + 1.0 / (a - 1.0) - 1.0 / (a - 1.0) ** 2
    mt = mu / t
    J[p, p] = -(n * du1 - 2.0 * np.sum(mt) - (al - L) * np.sum(mt * mt))
    if spec.fix_looks is None:
        zt = z / t
        J[:p, p + 1] = J[p + 1, :p] = X.T @ ne
        J[p, p + 1] = J[p + 1, p] = -(
            -n * polygamma(1, L + a) + np.sum(zt) + np.sum(mt) + (al - L) * np.sum(mt * zt)
        )
        J[p + 1, p + 1] = -(
            n * (polygamma(1, L + a) - polygamma(1, L) + 1.0 / L)
            - 2.0 * np.sum(zt)
            - (al - L) * np.sum(zt * zt)
        )
    return J


def cross_derivatives(spec, th):
    """``d2 l / d theta d z'`` as a (n_free x n) matrix."""
    ws = workspace(spec, th)
    X, z = spec.design, spec.response
    L, al = _looks(spec, th), th.alpha
    a, c = -al, -al - 1.0
    c1 = (L + a) * c
    t, mu = ws.t, ws.mu
    d_mu_z = L * c1 / t**2
    rows = [X.T * (ws.e_diag * d_mu_z)]
    rows.append((L * (t + (al - L) * mu) / t**2)[None, :])
    if spec.fix_looks is None:
        b = 1.0 / z - L / t + (1.0 - L * z / t) * (al - L) / t
        rows.append(b[None, :])
    return np.vstack(rows)
