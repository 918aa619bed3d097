import math

import numpy as np
import pytest
from scipy import integrate, stats

from g0reg import g0dist
from g0reg.errors import DomainError
from g0reg.model import (
    Link,
    RegressionSpec,
    Theta,
    cross_derivatives,
    fisher_information,
    fisher_information_inverse,
    info_constants,
    link_deriv,
    link_deriv2,
    link_eval,
    link_inv,
    loglik,
    loglik_terms,
    observed_information,
    score,
    workspace,
)

LINKS = list(Link)


def _draw(rng, X, beta, alpha, looks):
    mu = np.exp(X @ beta)
    return rng.gamma(looks, 1 / looks, len(mu)) / (rng.gamma(-alpha, 1.0, len(mu)) / (mu * (-alpha - 1)))


def _random_case(rng, link=Link.LOG, free=True):
    n = int(rng.integers(15, 60))
    k = int(rng.integers(1, 4))
    X = np.column_stack([np.ones(n), rng.uniform(-1, 1, (n, k))])
    beta = rng.normal(0.0, 0.4, k + 1)
    if link is not Link.LOG:
        beta[0] = abs(beta[0]) + 0.5
    alpha = -1.2 - rng.exponential(5.0)
    looks = float(rng.uniform(0.5, 10.0))
    spec0 = RegressionSpec(X, np.ones(n), link=link)
    mu = workspace(spec0, Theta(beta, alpha, looks)).mu
    z = rng.gamma(looks, 1 / looks, n) / (rng.gamma(-alpha, 1.0, n) / (mu * (-alpha - 1)))
    spec = RegressionSpec(X, z, link=link, fix_looks=None if free else looks)
    return spec, Theta(beta, alpha, looks)


def _fd(spec, th, fn):
    v = th.vector(spec.fix_looks is None)
    cols = []
    for j in range(v.size):
        h = 1e-6 * max(1.0, abs(v[j]))
        e = np.zeros_like(v)
        e[j] = h
        cols.append((fn(Theta.from_vector(v + e, spec)) - fn(Theta.from_vector(v - e, spec))) / (2 * h))
    return np.array(cols).T


class TestLinks:
    def test_log_identity(self):
        assert link_inv(Link.LOG, 0.0) == 1.0

    @pytest.mark.parametrize("link", LINKS)
    def test_roundtrip(self, link):
        eta = np.linspace(-20, 20 if link is not Link.COMP_LOG_LOG else 4, 401)
        np.testing.assert_allclose(link_eval(link, link_inv(link, eta)), eta, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("link", LINKS)
    def test_derivatives(self, link):
        mu = np.geomspace(0.05, 20, 60)
        h = 1e-6 * mu
        np.testing.assert_allclose(link_deriv(link, mu), (link_eval(link, mu + h) - link_eval(link, mu - h)) / (2 * h), rtol=1e-7)
        np.testing.assert_allclose(link_deriv2(link, mu), (link_deriv(link, mu + h) - link_deriv(link, mu - h)) / (2 * h), rtol=1e-6, atol=1e-9)

    def test_log_curvature_ratio(self):
        mu = np.geomspace(0.1, 10, 7)
        np.testing.assert_allclose(link_deriv2(Link.LOG, mu) / link_deriv(Link.LOG, mu), -1 / mu)

    def test_rejects_nonpositive_mu(self):
        with pytest.raises(DomainError):
            link_eval(Link.LOG, [1.0, 0.0])


class TestSpec:
    def test_valid(self):
        s = RegressionSpec(np.column_stack([np.ones(5), np.arange(5.0)]), np.ones(5))
        assert (s.n, s.ncoef, s.n_free) == (5, 2, 4)
        assert s.param_names == ["beta0", "beta1", "alpha", "L"]
        assert RegressionSpec(s.design, s.response, fix_looks=2).param_names == ["beta0", "beta1", "alpha"]

    @pytest.mark.parametrize(
        "X,z",
        [
            (np.column_stack([np.ones(3), np.arange(3.0), np.arange(3.0) ** 2]), np.ones(3)),  # n = p+1
            (np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)]), np.ones(6)),  # rank deficient
            (np.column_stack([np.zeros(6), np.arange(6.0)]), np.ones(6)),  # no intercept
            (np.ones((4, 1)), np.array([1.0, 0.0, 2.0, 1.0])),  # non-positive response
        ],
    )
    def test_rejected(self, X, z):
        with pytest.raises(DomainError):
            RegressionSpec(X, z)

    def test_theta_domain(self):
        with pytest.raises(DomainError):
            Theta([0.0], -1.0, 1.0)
        with pytest.raises(DomainError):
            Theta([0.0], -3.0, 0.0)


class TestLoglik:
    def test_hand_value(self):
        # l = ln 6 + 3 ln 2 - ln 2 - 4 ln 3
        spec = RegressionSpec(np.ones((2, 1)), np.ones(2))
        val = loglik(spec, Theta([0.0], -3.0, 1.0)) / 2
        assert val == pytest.approx(math.log(6) + 2 * math.log(2) - 4 * math.log(3), abs=1e-12)
        assert val == pytest.approx(-1.216395, abs=1e-6)

    def test_equals_sum_of_logpdfs(self):
        spec, th = _random_case(np.random.default_rng(1))
        mu = workspace(spec, th).mu
        ref = sum(g0dist.logpdf(g0dist.G0Params(th.alpha, m * (-th.alpha - 1), th.looks), z) for m, z in zip(mu, spec.response))
        assert loglik(spec, th) == pytest.approx(ref, abs=1e-10)

    def test_stacking_doubles(self):
        spec, th = _random_case(np.random.default_rng(2))
        big = RegressionSpec(np.vstack([spec.design] * 2), np.tile(spec.response, 2))
        assert loglik(big, th) == pytest.approx(2 * loglik(spec, th), rel=1e-12, abs=1e-9)

    def test_terms_shape(self):
        spec, th = _random_case(np.random.default_rng(3))
        assert loglik_terms(spec, th).shape == (spec.n,)


class TestDerivatives:
    @pytest.mark.parametrize("link", LINKS)
    @pytest.mark.parametrize("free", [True, False])
    def test_score_and_hessian_vs_fd(self, link, free):
        rng = np.random.default_rng(10 + LINKS.index(link))
        for _ in range(20):
            spec, th = _random_case(rng, link, free)
            U = score(spec, th)
            np.testing.assert_allclose(U, _fd(spec, th, lambda t: loglik(spec, t)), rtol=1e-4, atol=1e-4 * np.max(np.abs(U)))
            J = observed_information(spec, th)
            H = _fd(spec, th, lambda t: score(spec, t))
            np.testing.assert_allclose(J, -H, rtol=1e-4, atol=1e-5 * np.max(np.abs(J)))

    def test_cross_derivatives_vs_fd(self):
        spec, th = _random_case(np.random.default_rng(20))
        D = cross_derivatives(spec, th)
        for k in range(0, spec.n, 7):
            h = 1e-6 * spec.response[k]
            zp, zm = spec.response.copy(), spec.response.copy()
            zp[k] += h
            zm[k] -= h
            fd = (score(RegressionSpec(spec.design, zp), th) - score(RegressionSpec(spec.design, zm), th)) / (2 * h)
            np.testing.assert_allclose(D[:, k], fd, rtol=1e-5, atol=1e-7 * np.max(np.abs(D)))

    def test_mean_score_vanishes(self):
        rng = np.random.default_rng(30)
        n, beta, alpha, looks = 60, np.array([0.5, -1.0]), -4.0, 3.0
        X = np.column_stack([np.ones(n), rng.uniform(0, 1, n)])
        th = Theta(beta, alpha, looks)
        U = np.array([score(RegressionSpec(X, _draw(rng, X, beta, alpha, looks)), th) for _ in range(2000)])
        se = U.std(0, ddof=1) / math.sqrt(len(U))
        np.testing.assert_array_less(np.abs(U.mean(0)), 4 * se)


class TestFisher:
    @pytest.mark.parametrize("alpha,looks", [(-1.7, 1.0), (-5.0, 4.0), (-25.0, 8.0)])
    def test_constants_by_quadrature(self, alpha, looks):
        # E over s = gamma/T ~ Beta(-alpha, L) of the observed information equals K
        X = np.ones((2, 1))
        th = Theta([0.3], alpha, looks)
        gam = math.exp(0.3) * (-alpha - 1)

        def integrand(s):
            z = gam * (1 - s) / (looks * s)
            return observed_information(RegressionSpec(X, np.full(2, z)), th).ravel() * stats.beta.pdf(s, -alpha, looks) / 2

        expected, _ = integrate.quad_vec(integrand, 1e-300, 1 - 1e-16, epsabs=1e-12, epsrel=1e-10)
        K = fisher_information(RegressionSpec(X, np.ones(2)), th) / 2
        np.testing.assert_allclose(K.ravel(), expected, rtol=1e-7, atol=1e-10)

    def test_monte_carlo_mean_of_observed(self):
        rng = np.random.default_rng(40)
        n, beta, alpha, looks = 100, np.array([1.0, 1.0]), -5.0, 4.0
        X = np.column_stack([np.ones(n), rng.uniform(0, 1, n)])
        th = Theta(beta, alpha, looks)
        Js = np.array([observed_information(RegressionSpec(X, _draw(rng, X, beta, alpha, looks)), th) for _ in range(1000)])
        K = fisher_information(RegressionSpec(X, np.ones(n)), th)
        dev = np.abs(K - Js.mean(0))
        assert np.all((dev <= 0.05 * np.abs(K)) | (dev <= 4 * Js.std(0) / math.sqrt(len(Js))))

    def test_not_orthogonal(self):
        spec, th = _random_case(np.random.default_rng(41))
        th = Theta(th.beta, -5.0, th.looks)
        K = fisher_information(spec, th)
        p = spec.ncoef
        assert abs(info_constants(-5.0, th.looks)["c2"]) > 0
        assert np.linalg.norm(K[:p, p]) > 0

    @pytest.mark.parametrize("free", [True, False])
    def test_inverse(self, free):
        rng = np.random.default_rng(42)
        for _ in range(10):
            spec, th = _random_case(rng, free=free)
            K = fisher_information(spec, th)
            Ki = fisher_information_inverse(spec, th)
            assert np.linalg.norm(K @ Ki - np.eye(K.shape[0])) < 1e-8
            np.testing.assert_allclose(Ki, np.linalg.inv(K), rtol=1e-8, atol=1e-8 * np.max(np.abs(Ki)))

    def test_stacking_doubles(self):
        spec, th = _random_case(np.random.default_rng(43))
        big = RegressionSpec(np.vstack([spec.design] * 2), np.tile(spec.response, 2))
        np.testing.assert_allclose(fisher_information(big, th), 2 * fisher_information(spec, th), rtol=1e-13)
        np.testing.assert_allclose(observed_information(big, th), 2 * observed_information(spec, th), rtol=1e-12)

    def test_positive_definite(self):
        spec, th = _random_case(np.random.default_rng(44))
        assert np.all(np.linalg.eigvalsh(fisher_information(spec, th)) > 0)
