"""
Residuals, influence measures and adequacy checks for fitted G0 regressions.

Conventions: ``p`` in the flag thresholds and in the deviance scale ``S``
is the number of regression coefficients (columns of the design).
"""
from dataclasses import dataclass, field
from enum import Enum
import csv
import json
import math

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats

from . import g0dist
from .errors import DomainError, G0Error, LeverageAtOne, SingularInformation, VarianceUndefined
from .fit import FitOptions, fit_mle
from .model import RegressionSpec, cross_derivatives, observed_information, workspace
from .special import log_gamma

__all__ = [
    "GLMode",
    "Envelope",
    "DiagnosticsReport",
    "standardized_residuals",
    "deviance_residuals",
    "saturated_loglik_terms",
    "simulated_envelope",
    "leverage",
    "generalized_leverage",
    "cook_distance",
    "dffits",
    "flag_observations",
    "fit_metrics",
    "cvm_statistic",
    "cvm_adequacy",
    "mmse_alpha0",
    "diagnose",
]

SCHEMA_VERSION = 1


class GLMode(str, Enum):
    BETA_ONLY = "BetaOnly"
    FULL = "Full"
    EXPECTED = "Expected"


def _theta(fr):
    if fr.theta is None:
        raise DomainError("diagnostics need a G0 fit")
    return fr.theta


def _looks(spec, th):
    return spec.fix_looks if spec.fix_looks is not None else th.looks


def standardized_residuals(spec, fr):
    """``(z - mu_hat) / sd_hat`` with the plug-in G0 variance.

    Raises
    ------
    VarianceUndefined
        If ``alpha_hat >= -2``.
    """
    th = _theta(fr)
    if th.alpha >= -2.0:
        raise VarianceUndefined(f"alpha_hat = {th.alpha:.4g} >= -2: variance does not exist")
    L = _looks(spec, th)
    mu = fr.mu_hat
    var = mu * mu * (((th.alpha + 1.0) / (th.alpha + 2.0)) * (L + 1.0) / L - 1.0)
    return (spec.response - mu) / np.sqrt(var)


def _raw_deviance(spec, th, mu):
    z = spec.response
    L = _looks(spec, th)
    al = th.alpha
    c = -al - 1.0
    t = mu * c + L * z
    # log T_diamond, T_diamond = T / (z (c + L))
    ltd = np.log(t) - np.log(z) - math.log(c + L)
    inner = 2.0 * (al * (np.log(z) - np.log(mu) + ltd) - L * ltd)
    return np.sign(z - mu) * np.sqrt(np.abs(inner))


def leverage(spec, fr):
    """Diagonal of ``W^{1/2} X (X'WX)^{-1} X' W^{1/2}``."""
    th = _theta(fr)
    ws = workspace(spec, th)
    A = np.sqrt(ws.w_diag)[:, None] * spec.design
    q, r = np.linalg.qr(A)
    d = np.abs(np.diag(r))
    if d.min() <= 1e-13 * d.max():
        raise SingularInformation("weighted design is numerically rank deficient")
    return np.einsum("ij,ij->i", q, q)


def deviance_residuals(spec, fr, h=None):
    """Signed-root deviance residuals and their standardized version.

    ``SR_k = D_k / (S sqrt(1 - h_kk))`` with ``S = sum D_k^2 / (n - p)``.

    Returns
    -------
    raw, standardized : ndarray
    """
    th = _theta(fr)
    raw = _raw_deviance(spec, th, fr.mu_hat)
    h = leverage(spec, fr) if h is None else h
    if np.any(h >= 1.0 - 1e-12):
        raise LeverageAtOne(f"observation {int(np.argmax(h))} has leverage 1")
    s = float(np.sum(raw * raw)) / (spec.n - spec.ncoef)
    return raw, raw / (s * np.sqrt(1.0 - h))


def saturated_loglik_terms(spec, th):
    """Per-observation maxima of ``l_k`` over ``mu_k`` with alpha, L fixed.

    The maximizer is available in closed form, ``mu = a z / (a - 1)``
    (``a = -alpha``); it is returned alongside the values.
    """
    a = -th.alpha
    mu_sat = a * spec.response / (a - 1.0)
    return _terms_at(spec, th, mu_sat), mu_sat


def _terms_at(spec, th, mu):
    L = _looks(spec, th)
    al = th.alpha
    c = -al - 1.0
    z = spec.response
    const = L * math.log(L) + log_gamma(L - al) - al * math.log(c) - log_gamma(-al) - log_gamma(L)
    return const - al * np.log(mu) + (L - 1.0) * np.log(z) + (al - L) * np.log(mu * c + L * z)


@dataclass
class Envelope:
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    replicates: int
    dropped: int

    def exceedance(self):
        """Fraction of observed sorted residuals above the upper band."""
        return float(np.mean(self.observed > self.upper))

    def outside_fraction(self):
        """Fraction of observed sorted residuals outside ``[lower, upper]``."""
        return float(np.mean((self.observed > self.upper) | (self.observed < self.lower)))


def simulated_envelope(spec, fr, nu=19, seed=0):
    """Bands for sorted ``|SR_k|`` from ``nu`` datasets simulated at the fit.

    Each replicate draws responses from G0(alpha_hat, mu_hat_k(-alpha_hat-1), L_hat),
    refits from the fitted values and records the sorted absolute
    standardized deviance residuals.  Failed refits are dropped and counted.
    """
    th = _theta(fr)
    if nu < 1:
        raise DomainError("nu must be >= 1")
    _, sr = deviance_residuals(spec, fr)
    observed = np.sort(np.abs(sr))
    L = _looks(spec, th)
    c = -th.alpha - 1.0
    sims = []
    dropped = 0
    for j in range(nu):
        rng = np.random.default_rng([int(seed), j])
        y = rng.gamma(L, 1.0 / L, spec.n)
        g = rng.gamma(-th.alpha, 1.0, spec.n) / (fr.mu_hat * c)
        zs = y / g
        try:
            sp = RegressionSpec(spec.design, zs, spec.link, spec.fix_looks, spec.names)
            f2 = fit_mle(sp, FitOptions(start=th, strict=False))
            if not f2.converged:
                raise G0Error("refit did not converge")
            _, s2 = deviance_residuals(sp, f2)
            sims.append(np.sort(np.abs(s2)))
        except G0Error:
            dropped += 1
    if not sims:
        raise G0Error("every envelope replicate failed")
    S = np.vstack(sims)
    return Envelope(S.min(axis=0), np.median(S, axis=0), S.max(axis=0), observed, len(sims), dropped)


def generalized_leverage(spec, fr, mode=GLMode.FULL):
    """Generalized leverage matrix ``d mu_hat / d z'`` (n x n).

    ``Full`` differentiates the whole score system implicitly, so it is the
    exact refit Jacobian.  ``BetaOnly`` keeps alpha and L fixed.
    ``Expected`` swaps the observed information for its expectation; its
    diagonal is ``h_kk (1 - alpha) / (-alpha - 1)``.
    """
    mode = GLMode(mode)
    th = _theta(fr)
    ws = workspace(spec, th)
    X = spec.design
    p = spec.ncoef
    dmu = ws.e_diag[:, None] * X  # d mu / d beta'
    if mode is GLMode.EXPECTED:
        a = -th.alpha
        xtwx = X.T @ (ws.w_diag[:, None] * X)
        try:
            cf = scipy.linalg.cho_factor(xtwx)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation("X'WX is not positive definite") from exc
        right = (X * (ws.w_diag / ws.e_diag)[:, None]).T
        return ((a + 1.0) / (a - 1.0)) * dmu @ scipy.linalg.cho_solve(cf, right)
    J = observed_information(spec, th)
    C = cross_derivatives(spec, th)
    try:
        if mode is GLMode.BETA_ONLY:
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(J[:p, :p]), C[:p])
        else:
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(J), C)[:p]
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("observed information is not positive definite") from exc
    return dmu @ sol


def cook_distance(spec, fr, r=None, h=None):
    """One-pass approximation ``h r^2 / (p (1 - h)^2)``."""
    r = standardized_residuals(spec, fr) if r is None else r
    h = leverage(spec, fr) if h is None else h
    return h * r * r / (spec.ncoef * (1.0 - h) ** 2)


def dffits(spec, fr, r=None, h=None):
    """One-step deletion approximation ``r sqrt(h / (1 - h)) / (1 - h)``."""
    r = standardized_residuals(spec, fr) if r is None else r
    h = leverage(spec, fr) if h is None else h
    return r * np.sqrt(h / (1.0 - h)) / (1.0 - h)


def flag_observations(n, p, cook, h, dff):
    """Sets of flag names per observation.

    ``cook``: Cook > 8/(n - 2p); ``leverage``: h > 3p/n;
    ``dffits``: |DFFITS| > 2 sqrt(p/(n - p)).
    """
    cook_t = 8.0 / (n - 2 * p)
    lev_t = 3.0 * p / n
    dff_t = 2.0 * math.sqrt(p / (n - p))
    out = []
    for k in range(n):
        s = set()
        if cook[k] > cook_t:
            s.add("cook")
        if h[k] > lev_t:
            s.add("leverage")
        if abs(dff[k]) > dff_t:
            s.add("dffits")
        out.append(s)
    return out


def fit_metrics(spec, fr):
    """``(MAB, RMSE)`` of the fitted means against the responses."""
    d = spec.response - fr.mu_hat
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d * d)))


# Cramer-von Mises -------------------------------------------------------


def cvm_statistic(u):
    """``W^2 = 1/(12n) + sum (u_(k) - (2k-1)/(2n))^2`` for cdf values ``u``."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    k = np.arange(1, n + 1)
    return 1.0 / (12.0 * n) + float(np.sum((u - (2 * k - 1) / (2.0 * n)) ** 2))


def _ratios(ratios):
    r = np.asarray(ratios, dtype=float).ravel()
    r = r[np.isfinite(r)]
    if r.size < 2 or np.any(r <= 0):
        raise DomainError("ratios must contain at least two positive values")
    if np.ptp(r) == 0:
        raise DomainError("ratios have zero spread; the adequacy test is degenerate")
    return r


def cvm_adequacy(ratios, alpha0, looks):
    """Test ``ratios ~ G0(alpha0, -alpha0 - 1, looks)``.

    Returns
    -------
    statistic, p_value : float
        The p-value uses the finite-sample corrected asymptotic law of W^2.
    """
    if not alpha0 < -1:
        raise DomainError("alpha0 must be < -1")
    r = _ratios(ratios)
    p = g0dist.unit_mean(alpha0, looks)
    stat = cvm_statistic(g0dist.cdf(p, r))
    res = scipy.stats.cramervonmises(r, lambda x: g0dist.cdf(p, np.asarray(x)))
    return stat, float(res.pvalue)


def mmse_alpha0(ratios, looks, log_range=(-7.0, 6.0)):
    """Roughness of the unit-mean law closest to ``ratios`` in CvM distance.

    Minimizes the mean squared gap between the empirical and model cdfs over
    ``alpha0 = -1 - exp(s)``, ``s`` in ``log_range``.
    """
    r = np.sort(_ratios(ratios))

    def obj(s):
        return cvm_statistic(g0dist.cdf(g0dist.unit_mean(-1.0 - math.exp(s), looks), r))

    res = scipy.optimize.minimize_scalar(obj, bounds=log_range, method="bounded", options={"xatol": 1e-8})
    return -1.0 - math.exp(res.x)


# report -------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    """Per-observation diagnostics of one fit."""

    std_resid: np.ndarray
    dev_resid: np.ndarray
    std_dev_resid: np.ndarray
    leverage: np.ndarray
    gl_diag: np.ndarray
    cook: np.ndarray
    dffits: np.ndarray
    envelope: Envelope | None
    flags: list
    mab: float
    rmse: float
    z: np.ndarray = field(repr=False, default=None)
    mu_hat: np.ndarray = field(repr=False, default=None)
    notes: list = field(default_factory=list)

    def to_dict(self):
        def arr(v):
            return None if v is None else [None if not math.isfinite(x) else float(x) for x in v]

        env = None
        if self.envelope is not None:
            env = {
                k: arr(getattr(self.envelope, k)) for k in ("lower", "median", "upper", "observed")
            } | {"replicates": self.envelope.replicates, "dropped": self.envelope.dropped}
        return {
            "schema_version": SCHEMA_VERSION,
            "std_resid": arr(self.std_resid),
            "dev_resid": arr(self.dev_resid),
            "std_dev_resid": arr(self.std_dev_resid),
            "leverage": arr(self.leverage),
            "gl_diag": arr(self.gl_diag),
            "cook": arr(self.cook),
            "dffits": arr(self.dffits),
            "envelope": env,
            "flags": [sorted(s) for s in self.flags],
            "mab": self.mab,
            "rmse": self.rmse,
            "notes": list(self.notes),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path):
        cols = ["index", "z", "mu_hat", "r", "d_dev", "sr", "h", "gl", "cook", "dffits", "flags"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self.dev_resid)):
                w.writerow(
                    [k]
                    + [repr(float(v[k])) for v in (self.z, self.mu_hat, self.std_resid, self.dev_resid, self.std_dev_resid, self.leverage, self.gl_diag, self.cook, self.dffits)]
                    + [";".join(sorted(self.flags[k]))]
                )

    def envelope_csv(self, path):
        if self.envelope is None:
            raise DomainError("no envelope in this report")
        e = self.envelope
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["position", "lower", "median", "upper", "observed"])
            for k in range(len(e.lower)):
                w.writerow([k + 1] + [repr(float(v[k])) for v in (e.lower, e.median, e.upper, e.observed)])


def diagnose(spec, fr, nu=19, seed=0):
    """Assemble a :class:`DiagnosticsReport`.

    ``nu = 0`` skips the envelope.  When the variance does not exist the
    standardized residual, Cook and DFFITS columns are NaN and a note says why.
    """
    notes = []
    h = leverage(spec, fr)
    raw, sr = deviance_residuals(spec, fr, h)
    try:
        r = standardized_residuals(spec, fr)
    except VarianceUndefined as exc:
        notes.append(str(exc))
        r = np.full(spec.n, np.nan)
    cook = cook_distance(spec, fr, r, h)
    dff = dffits(spec, fr, r, h)
    gl = np.diag(generalized_leverage(spec, fr, GLMode.FULL)).copy()
    env = simulated_envelope(spec, fr, nu, seed) if nu > 0 else None
    mab, rmse = fit_metrics(spec, fr)
    flags = flag_observations(spec.n, spec.ncoef, np.nan_to_num(cook), h, np.nan_to_num(dff))
    return DiagnosticsReport(
        std_resid=r,
        dev_resid=raw,
        std_dev_resid=sr,
        leverage=h,
        gl_diag=gl,
        cook=cook,
        dffits=dff,
        envelope=env,
        flags=flags,
        mab=mab,
        rmse=rmse,
        z=spec.response,
        mu_hat=fr.mu_hat,
        notes=notes,
    )
