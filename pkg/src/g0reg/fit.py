"""
Maximum-likelihood fitting of the G0 regression and of its Gamma and
Exponential baselines.

The optimizer works on an unconstrained vector
``w = (b, log(-alpha - 1), log L)`` where ``b`` are coefficients of an
internally standardized design.  Everything reported (estimates, score,
covariance) is in natural parameters.
"""
from dataclasses import dataclass, field
from enum import Enum
import math
import warnings

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats

from .errors import (
    DegenerateTheta,
    DomainError,
    G0Error,
    NonFinite,
    NotConverged,
    SingularInformation,
)
from .model import (
    Link,
    RegressionSpec,
    Theta,
    fisher_information_inverse,
    link_deriv,
    link_eval,
    link_inv,
    loglik,
    loglik_and_score,
    observed_information,
    fisher_information,
)
from .special import digamma, log_gamma, trigamma

__all__ = [
    "Optimizer",
    "Family",
    "FitOptions",
    "FitResult",
    "WaldRow",
    "init_theta",
    "fit_mle",
    "fit_baseline",
    "confidence_intervals",
    "wald_table",
    "information_criteria",
]

ALPHA_INIT_RANGE = (-60.0, -1.5)
LOOKS_WARN = 50.0


class Optimizer(str, Enum):
    CG = "CG"
    BFGS = "BFGS"
    NELDER_MEAD = "NelderMead"


class Family(str, Enum):
    G0 = "G0"
    GAMMA = "Gamma"
    EXPONENTIAL = "Exponential"


@dataclass
class FitOptions:
    """Optimizer controls.

    Parameters
    ----------
    optimizer : Optimizer
        CG (Polak-Ribiere), BFGS or Nelder-Mead.
    max_iter : int
        Iteration cap for gradient methods; Nelder-Mead gets ten times as many.
    grad_tol : float
        Converged when ``max|score| < grad_tol * max(1, |loglik|)``.
    polish : bool
        Finish with safeguarded Newton steps on the observed information.
    strict : bool
        Raise :class:`NotConverged` instead of returning an unconverged result.
    start : Theta, optional
        Warm start; :func:`init_theta` is used otherwise.
    seed : int, optional
        Accepted for interface symmetry; the fit itself is deterministic.
    """

    optimizer: Optimizer = Optimizer.CG
    max_iter: int = 500
    grad_tol: float = 1e-6
    polish: bool = True
    strict: bool = True
    start: Theta | None = None
    seed: int | None = None

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be > 0")


@dataclass
class FitResult:
    """Outcome of a likelihood fit.

    ``estimates`` and ``cov`` cover the free parameters in the order of
    ``param_names``.  ``theta`` is set for G0 fits; ``shape`` for the Gamma
    baseline.
    """

    family: Family
    estimates: np.ndarray
    param_names: list
    cov: np.ndarray
    loglik: float
    aic: float
    aicc: float
    bic: float
    converged: bool
    iterations: int
    optimizer: Optimizer
    grad_norm: float
    n_obs: int
    mu_hat: np.ndarray
    theta: Theta | None = None
    shape: float | None = None
    notes: list = field(default_factory=list)

    @property
    def n_free(self):
        return len(self.estimates)

    @property
    def beta(self):
        k = len([nm for nm in self.param_names if nm not in ("alpha", "L", "shape")])
        return self.estimates[:k]

    @property
    def std_errors(self):
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.cov))


@dataclass
class WaldRow:
    name: str
    estimate: float
    std_error: float
    t_stat: float
    p_value: float


def information_criteria(ll, q, n):
    """``(aic, aicc, bic)`` for ``q`` free parameters and ``n`` observations."""
    aic = -2.0 * ll + 2.0 * q
    aicc = aic + 2.0 * q * (q + 1) / (n - q - 1) if n - q - 1 > 0 else math.inf
    bic = -2.0 * ll + q * math.log(n)
    return aic, aicc, bic


# initialization ----------------------------------------------------------


def _alpha_of_gamma(g, u, L):
    s = np.sum(1.0 / (g + L * u))
    return L * s / (s - u.size / g)


def init_theta(spec, notes=None):
    """Starting values: OLS on the linked responses plus a moment-type alpha.

    Responses are divided by their OLS-fitted means and the intercept-only
    equations are solved on the normalized sample ``u``:

        alpha(gamma) = L S / (S - n/gamma),   S = sum 1/T_k,
        mean log(T_k / gamma) = psi(L - alpha) - psi(-alpha),

    with ``T_k = gamma + L u_k``.  The root in ``gamma`` is bracketed on a
    log grid; on failure alpha falls back to -3 and a note is appended.
    """
    notes = notes if notes is not None else []
    X, z = spec.design, spec.response
    y = link_eval(spec.link, z)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    L = spec.fix_looks if spec.fix_looks is not None else 1.0
    mu = link_inv(spec.link, X @ beta)
    u = z / mu
    lo_a, hi_a = ALPHA_INIT_RANGE

    def h(lg):
        g = math.exp(lg)
        al = _alpha_of_gamma(g, u, L)
        a = min(max(-al, 1e-8), 1e8)
        return float(np.mean(np.log1p(L * u / g))) - (digamma(L + a) - digamma(a))

    alpha = None
    try:
        med = float(np.median(u))
        grid = math.log(med) + np.linspace(-12.0, 12.0, 25)
        vals = [h(v) for v in grid]
        for i in range(len(grid) - 1):
            if np.sign(vals[i]) != np.sign(vals[i + 1]) and np.isfinite(vals[i] + vals[i + 1]):
                lg = scipy.optimize.brentq(h, grid[i], grid[i + 1], xtol=1e-10)
                alpha = _alpha_of_gamma(math.exp(lg), u, L)
                break
    except (ArithmeticError, ValueError, G0Error):
        alpha = None
    if alpha is None or not math.isfinite(alpha):
        alpha = -3.0
        notes.append("alpha initialization fell back to -3")
    alpha = float(np.clip(alpha, lo_a + 1e-9, hi_a - 1e-9))
    return Theta(beta, alpha, L)


# optimization ------------------------------------------------------------


class _Problem:
    """Unconstrained reparameterization with a standardized design."""

    def __init__(self, spec):
        self.spec = spec
        X = spec.design
        k = spec.ncoef
        self.k = k
        self.free_l = spec.fix_looks is None
        m = X[:, 1:].mean(axis=0)
        s = X[:, 1:].std(axis=0)
        s[s == 0] = 1.0
        # beta = A b
        A = np.eye(k)
        A[1:, 1:] = np.diag(1.0 / s)
        A[0, 1:] = -m / s
        self.A = A
        self.A_inv = np.linalg.inv(A)
        self.n = spec.n
        self.best = (-math.inf, None)

    def to_w(self, th):
        w = [self.A_inv @ th.beta, [math.log(-th.alpha - 1.0)]]
        if self.free_l:
            w.append([math.log(th.looks)])
        return np.concatenate(w)

    def from_w(self, w):
        a = w[self.k]
        if not -700 < a < 700:
            raise NonFinite("alpha left the representable range")
        alpha = -1.0 - math.exp(a)
        if self.free_l:
            lw = w[self.k + 1]
            if not -700 < lw < 700:
                raise NonFinite("looks left the representable range")
            looks = math.exp(lw)
        else:
            looks = self.spec.fix_looks
        return Theta(self.A @ w[: self.k], alpha, looks)

    def fun(self, w):
        try:
            th = self.from_w(w)
            ll, u = loglik_and_score(self.spec, th)
        except (G0Error, FloatingPointError):
            return math.inf, np.zeros_like(w)
        if ll > self.best[0]:
            self.best = (ll, th)
        g = np.empty_like(w)
        g[: self.k] = self.A.T @ u[: self.k]
        g[self.k] = u[self.k] * (th.alpha + 1.0)
        if self.free_l:
            g[self.k + 1] = u[self.k + 1] * th.looks
        return -ll / self.n, -g / self.n

    def value(self, w):
        return self.fun(w)[0]


def _conv(ll, u, tol):
    gn = float(np.max(np.abs(u)))
    return gn < tol * max(1.0, abs(ll)), gn


def _newton_polish(spec, th, tol, max_steps=50):
    """Safeguarded Newton ascent in natural parameters."""
    k = spec.ncoef
    free_l = spec.fix_looks is None
    ll, u = loglik_and_score(spec, th)
    steps = 0
    for _ in range(max_steps):
        ok, _gn = _conv(ll, u, tol)
        if ok:
            break
        J = observed_information(spec, th)
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(J), u)
        except (np.linalg.LinAlgError, ValueError):
            try:
                K = fisher_information(spec, th)
                step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(K), u)
            except (np.linalg.LinAlgError, ValueError, G0Error):
                break
        v = th.vector(free_l)
        t = 1.0
        moved = False
        while t > 1e-12:
            cand = v + t * step
            if cand[k] < -1.0 and (not free_l or cand[k + 1] > 0):
                try:
                    th_c = Theta.from_vector(cand, spec)
                    ll_c, u_c = loglik_and_score(spec, th_c)
                except G0Error:
                    ll_c = -math.inf
                if ll_c >= ll - 1e-12 * abs(ll):
                    th, ll, u = th_c, ll_c, u_c
                    moved = True
                    break
            t *= 0.5
        steps += 1
        if not moved:
            break
    return th, ll, u, steps


def _finish(spec, th, ll, u, tol, iterations, optimizer, notes, strict):
    converged, gn = _conv(ll, u, tol)
    q = spec.n_free
    try:
        cov = fisher_information_inverse(spec, th)
        if not np.all(np.linalg.eigvalsh(cov) > 0):
            raise SingularInformation("covariance is not positive definite")
    except (SingularInformation, DegenerateTheta) as exc:
        if strict:
            raise
        notes.append(f"covariance unavailable: {exc}")
        cov = np.full((q, q), np.nan)
        converged = False
    aic, aicc, bic = information_criteria(ll, q, spec.n)
    fr = FitResult(
        family=Family.G0,
        estimates=th.vector(spec.fix_looks is None),
        param_names=spec.param_names,
        cov=cov,
        loglik=ll,
        aic=aic,
        aicc=aicc,
        bic=bic,
        converged=converged,
        iterations=iterations,
        optimizer=optimizer,
        grad_norm=gn,
        n_obs=spec.n,
        mu_hat=link_inv(spec.link, spec.design @ th.beta),
        theta=th,
        notes=notes,
    )
    if spec.fix_looks is None and th.looks > LOOKS_WARN:
        warnings.warn(f"fitted looks {th.looks:.1f} > {LOOKS_WARN:g}: looks weakly identified", RuntimeWarning)
    if strict and not converged:
        raise NotConverged(f"gradient norm {gn:.3g} above tolerance after {iterations} iterations", result=fr)
    return fr


def fit_mle(spec, opts=None):
    """Maximize the G0 regression log-likelihood.

    Parameters
    ----------
    spec : RegressionSpec
    opts : FitOptions, optional

    Returns
    -------
    FitResult

    Raises
    ------
    NotConverged
        When ``opts.strict`` and the gradient criterion is not met; the
        best-so-far result is attached.
    SingularInformation, DegenerateTheta
        When the information cannot be inverted at the estimate.
    """
    opts = opts or FitOptions()
    notes = []
    th0 = opts.start if opts.start is not None else init_theta(spec, notes)
    if th0.alpha >= -1.0:
        raise DomainError("start alpha must be < -1")
    prob = _Problem(spec)
    w0 = prob.to_w(th0)
    f0, _ = prob.fun(w0)
    if not math.isfinite(f0):
        raise NonFinite("log-likelihood is not finite at the starting point")
    ll0 = -f0 * spec.n
    gtol = 0.1 * opts.grad_tol * max(1.0, abs(ll0)) / spec.n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if opts.optimizer is Optimizer.NELDER_MEAD:
            res = scipy.optimize.minimize(
                prob.value,
                w0,
                method="Nelder-Mead",
                options={"maxiter": 10 * opts.max_iter, "maxfev": 20 * opts.max_iter, "xatol": 1e-9, "fatol": 1e-13},
            )
        else:
            method = "CG" if opts.optimizer is Optimizer.CG else "BFGS"
            res = scipy.optimize.minimize(
                prob.fun, w0, jac=True, method=method, options={"maxiter": opts.max_iter, "gtol": gtol}
            )
    iterations = int(res.nit)
    try:
        th = prob.from_w(res.x)
        ll, u = loglik_and_score(spec, th)
    except G0Error:
        ll, th = prob.best
        if th is None:
            raise NonFinite("optimizer never reached a finite log-likelihood") from None
        ll, u = loglik_and_score(spec, th)
    if prob.best[0] > ll + 1e-9 * abs(ll):
        ll, th = prob.best
        ll, u = loglik_and_score(spec, th)
    if opts.polish:
        th, ll, u, steps = _newton_polish(spec, th, opts.grad_tol)
        iterations += steps
    return _finish(spec, th, ll, u, opts.grad_tol, iterations, opts.optimizer, notes, opts.strict)


# inference ---------------------------------------------------------------


def confidence_intervals(fr, eps=0.05):
    """Normal-theory intervals ``estimate -/+ z_{eps/2} * se`` per free parameter."""
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    zq = scipy.stats.norm.ppf(1.0 - eps / 2.0)
    se = fr.std_errors
    return [(float(e - zq * s), float(e + zq * s)) for e, s in zip(fr.estimates, se)]


def wald_table(fr):
    rows = []
    for name, est, se in zip(fr.param_names, fr.estimates, fr.std_errors):
        t = float(est / se) if se > 0 else math.nan
        p = float(2.0 * scipy.stats.norm.sf(abs(t))) if math.isfinite(t) else math.nan
        rows.append(WaldRow(name, float(est), float(se), t, p))
    return rows


# baselines ---------------------------------------------------------------


def _gamma_parts(spec, beta, shape):
    X, z = spec.design, spec.response
    mu = link_inv(spec.link, X @ beta)
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise NonFinite("non-finite fitted mean")
    e = 1.0 / link_deriv(spec.link, mu)
    lz = np.log(z)
    lm = np.log(mu)
    r = z / mu
    n = spec.n
    ll = n * (shape * math.log(shape) - log_gamma(shape)) + np.sum((shape - 1.0) * lz - shape * lm - shape * r)
    u_beta = X.T @ (shape * (r - 1.0) / mu * e)
    u_shape = n * (math.log(shape) + 1.0 - digamma(shape)) + np.sum(lz - lm - r)
    w = shape * (e / mu) ** 2
    return float(ll), u_beta, float(u_shape), w, mu


def fit_baseline(spec, family, opts=None):
    """Gamma or Exponential GLM with the spec's link, fitted by Fisher scoring.

    The Gamma shape is updated by a one-dimensional Newton step on its own
    (concave) score after each coefficient step; beta and shape are
    orthogonal under the expected information.
    """
    family = Family(family)
    if family is Family.G0:
        return fit_mle(spec, opts)
    opts = opts or FitOptions()
    X = spec.design
    y = link_eval(spec.link, spec.response)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    free_shape = family is Family.GAMMA
    if free_shape:
        # moment start on the log scale
        resid = spec.response / link_inv(spec.link, X @ beta)
        cv2 = float(np.var(resid) / np.mean(resid) ** 2)
        shape = 1.0 / cv2 if cv2 > 0 else 1.0
    else:
        shape = 1.0
    ll, ub, us, w, mu = _gamma_parts(spec, beta, shape)
    it = 0
    conv = False
    for it in range(1, opts.max_iter + 1):
        u = np.append(ub, us) if free_shape else ub
        conv, gn = _conv(ll, u, opts.grad_tol)
        if conv:
            break
        step = scipy.linalg.solve(X.T @ (w[:, None] * X), ub, assume_a="pos")
        t = 1.0
        while t > 1e-12:
            try:
                cand = _gamma_parts(spec, beta + t * step, shape)
                if cand[0] >= ll - 1e-12 * abs(ll):
                    break
            except G0Error:
                pass
            t *= 0.5
        else:
            break
        beta = beta + t * step
        ll, ub, us, w, mu = cand
        if free_shape:
            for _ in range(50):
                h = spec.n * (1.0 / shape - trigamma(shape))
                new = shape - us / h
                shape = new if new > 0 else shape / 2.0
                ll, ub, us, w, mu = _gamma_parts(spec, beta, shape)
                if abs(us) < 1e-10 * spec.n:
                    break
    u = np.append(ub, us) if free_shape else ub
    conv, gn = _conv(ll, u, opts.grad_tol)
    q = spec.ncoef + (1 if free_shape else 0)
    cov = np.zeros((q, q))
    cov[: spec.ncoef, : spec.ncoef] = np.linalg.inv(X.T @ (w[:, None] * X))
    if free_shape:
        cov[-1, -1] = 1.0 / (spec.n * (trigamma(shape) - 1.0 / shape))
    aic, aicc, bic = information_criteria(ll, q, spec.n)
    names = list(spec.names) + (["shape"] if free_shape else [])
    fr = FitResult(
        family=family,
        estimates=np.append(beta, shape) if free_shape else beta.copy(),
        param_names=names,
        cov=cov,
        loglik=ll,
        aic=aic,
        aicc=aicc,
        bic=bic,
        converged=conv,
        iterations=it,
        optimizer=opts.optimizer,
        grad_norm=gn,
        n_obs=spec.n,
        mu_hat=mu,
        shape=shape,
    )
    if opts.strict and not conv:
        raise NotConverged(f"baseline fit did not converge (gradient {gn:.3g})", result=fr)
    return fr
