import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from copulaabc.copula import (NU_BOUNDS, MetaTPosterior, TCopulaParams, fit_t_copula,
                              meta_t_log_density, pseudo_obs, sample_meta_t, sample_t_copula,
                              t_copula_log_density, t_quantile)
from copulaabc.evaluation import weighted_ks


def ks_stat(x, F):
    return weighted_ks(x, np.full(len(x), 1 / len(x)), F)[1]


def eq_rho(r, d=2):
    R = np.full((d, d), r)
    np.fill_diagonal(R, 1.0)
    return R


def test_params_validation():
    with pytest.raises(ValueError):
        TCopulaParams(5.0, [[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(ValueError):
        TCopulaParams(5.0, [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        TCopulaParams(0.0, np.eye(2))
    assert TCopulaParams(NU_BOUNDS[1], np.eye(2)).gaussian_limit


@given(st.floats(1e-9, 1 - 1e-9), st.sampled_from([1.0, 2.5, 7.0, 80.0, 5e5]))
def test_t_quantile_inverts_cdf(u, nu):
    z = t_quantile(u, nu)
    assert stats.t.cdf(z, nu) == pytest.approx(u, rel=1e-9, abs=1e-15)


def test_cauchy_copula_at_centre():
    assert math.exp(t_copula_log_density([0.5, 0.5], TCopulaParams(1.0, np.eye(2)))) == pytest.approx(math.pi / 2)


def test_independence_limit():
    assert abs(t_copula_log_density([0.3, 0.7], TCopulaParams(1e6, np.eye(2)))) < 1e-3
    assert t_copula_log_density([0.3, 0.7], TCopulaParams(math.inf, np.eye(2))) == 0.0


def test_gaussian_copula_matches_scipy():
    R = eq_rho(0.4)
    u = np.array([0.2, 0.9])
    z = stats.norm.ppf(u)
    want = stats.multivariate_normal(cov=R).logpdf(z) - stats.norm.logpdf(z).sum()
    assert t_copula_log_density(u, TCopulaParams(math.inf, R)) == pytest.approx(want, rel=1e-12)


def test_t_copula_matches_scipy():
    R = np.array([[1, 0.3, -0.2], [0.3, 1, 0.5], [-0.2, 0.5, 1]])
    u = np.array([0.1, 0.55, 0.93])
    z = stats.t.ppf(u, 4.0)
    want = stats.multivariate_t(shape=R, df=4.0).logpdf(z) - stats.t.logpdf(z, 4.0).sum()
    assert t_copula_log_density(u, TCopulaParams(4.0, R)) == pytest.approx(want, rel=1e-10)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(-0.9, 0.9))
def test_exchangeable(u1, u2, r):
    p = TCopulaParams(3.0, eq_rho(r))
    assert t_copula_log_density([u1, u2], p) == pytest.approx(t_copula_log_density([u2, u1], p), abs=1e-12)


def test_boundary_rejected():
    with pytest.raises(ValueError):
        t_copula_log_density([0.0, 0.5], TCopulaParams(3.0, np.eye(2)))


@pytest.mark.parametrize("nu,r", [(2.0, 0.0), (2.0, 0.5), (10.0, 0.0), (10.0, 0.5)])
def test_density_integrates_to_one(nu, r):
    p = TCopulaParams(nu, eq_rho(r))
    # tensor trapezoid rule in t-score space, z = sinh(s) to reach the heavy tails
    s = np.linspace(-9, 9, 1201)
    z, dz = np.sinh(s), np.cosh(s)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    zz = np.column_stack([Z1.ravel(), Z2.ravel()])
    U = stats.t.cdf(zz, nu)
    ok = np.all((U > 0) & (U < 1), axis=1)
    f = np.zeros(len(zz))
    f[ok] = np.exp(t_copula_log_density(U[ok], p) + stats.t.logpdf(zz[ok], nu).sum(axis=1))
    f = f.reshape(Z1.shape) * dz[:, None] * dz[None, :]
    val = np.trapezoid(np.trapezoid(f, s, axis=1), s)
    assert abs(val - 1) < 1e-3


def test_fit_independent_uniforms():
    U = np.random.default_rng(0).random((10_000, 2))
    fit = fit_t_copula(U)
    assert abs(fit.params.rho[0, 1]) < 0.05
    assert fit.params.nu > 50
    assert np.all(np.diff(fit.history) >= 0)


@pytest.mark.parametrize("seed", [0, 1])
def test_fit_recovers_t_copula(seed):
    U = sample_t_copula(TCopulaParams(5.0, eq_rho(0.5)), 10_000, np.random.default_rng(seed))
    fit = fit_t_copula(U)
    assert abs(fit.params.rho[0, 1] - 0.5) < 0.05 and 3 <= fit.params.nu <= 7
    assert np.all(np.diff(fit.history) >= 0) and fit.converged
    assert np.linalg.eigvalsh(fit.params.rho).min() > 1e-10


def test_fit_needs_rows():
    with pytest.raises(ValueError):
        fit_t_copula(np.full((3, 2), 0.5))


# --- pseudo-observations ----------------------------------------------------------------------

def test_pseudo_obs_ecdf_and_drop():
    theta = np.array([[1.0], [2.0], [3.0], [4.0]])
    U, kept = pseudo_obs(theta, np.full((1, 4), 0.25))
    # the largest atom has cdf 1 and is dropped
    assert kept.tolist() == [0, 1, 2] and U[:, 0].tolist() == [0.25, 0.5, 0.75]


def test_pseudo_obs_below_support_dropped():
    theta = np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 0.0], [3.0, 3.0]])
    w = np.array([[0.0, 0.5, 0.5, 0.0], [0.25] * 4])
    U, kept = pseudo_obs(theta, w)
    assert 0 not in kept.tolist()  # theta_1 = 0 lies below every weighted atom of margin 1
    assert np.all((U > 0) & (U < 1))


def test_pseudo_obs_all_dropped():
    with pytest.raises(ValueError):
        pseudo_obs(np.array([[1.0], [2.0]]), np.array([[0.0, 1.0]]))


def test_pseudo_obs_calibrated():
    rng = np.random.default_rng(2)
    theta = rng.normal(size=(4000, 2))
    U, _ = pseudo_obs(theta, np.full((2, 4000), 1 / 4000))
    for k in range(2):
        assert ks_stat(U[:, k], lambda t: t) < 1.628


# --- meta-t ------------------------------------------------------------------------------------

class AnalyticMargin:
    def __init__(self, dist):
        self.dist = dist

    def logpdf(self, t):
        return self.dist.logpdf(t)


def _uniform_post(d, n, copula, rng):
    vals = rng.random((n, d))
    return MetaTPosterior(vals, np.full((d, n), 1 / n), [AnalyticMargin(stats.uniform())] * d, copula)


def test_meta_t_univariate_is_margin(rng):
    vals = rng.normal(size=(200, 1))
    post = MetaTPosterior(vals, np.full((1, 200), 1 / 200), [AnalyticMargin(stats.norm())], None)
    assert meta_t_log_density([0.3], post) == pytest.approx(stats.norm.logpdf(0.3))


def test_meta_t_product_oracle(rng):
    margins = [AnalyticMargin(stats.norm(1, 2)), AnalyticMargin(stats.gamma(3))]
    vals = np.column_stack([rng.normal(1, 2, 500), rng.gamma(3, size=500)])
    post = MetaTPosterior(vals, np.full((2, 500), 1 / 500), margins, TCopulaParams(math.inf, np.eye(2)))
    pts = np.column_stack([rng.normal(1, 1, 20), rng.gamma(3, size=20)])
    got = post.log_density(pts)
    want = stats.norm(1, 2).logpdf(pts[:, 0]) + stats.gamma(3).logpdf(pts[:, 1])
    # points outside the weighted support of a margin get -inf by construction
    inside = np.all([(pts[:, k] >= vals[:, k].min()) & (pts[:, k] < vals[:, k].max()) for k in range(2)], axis=0)
    assert np.max(np.abs(got[inside] - want[inside])) < 1e-10


def test_meta_t_outside_support(rng):
    post = _uniform_post(2, 100, TCopulaParams(4.0, eq_rho(0.3)), rng)
    assert post.log_density([2.0, 0.5]) == -np.inf
    assert post.log_density([-1.0, -1.0]) == -np.inf


def test_meta_t_sample_uniform_margins(rng):
    post = _uniform_post(2, 20_000, TCopulaParams(1e6, np.eye(2)), rng)
    draws = sample_meta_t(post, 10_000, np.random.default_rng(1))
    for k in range(2):
        assert ks_stat(draws[:, k], lambda t: np.clip(t, 0, 1)) < 1.628


def test_meta_t_kendall_tau(rng):
    post = _uniform_post(2, 20_000, TCopulaParams(4.0, eq_rho(0.6)), rng)
    draws = sample_meta_t(post, 10_000, np.random.default_rng(3))
    tau = stats.kendalltau(draws[:, 0], draws[:, 1]).statistic
    assert abs(tau - 2 / math.pi * math.asin(0.6)) < 0.05


def test_meta_t_single_draw(rng):
    post = _uniform_post(3, 50, TCopulaParams(4.0, eq_rho(0.2, 3)), rng)
    x = sample_meta_t(post, 1, rng)
    assert x.shape == (1, 3)
    assert np.all(x >= post.values.min(axis=0)) and np.all(x <= post.values.max(axis=0))


def test_margins_free_of_correlation(rng):
    vals = rng.gamma(2.0, size=(5000, 2))
    w = np.full((2, 5000), 1 / 5000)
    m = [AnalyticMargin(stats.gamma(2.0))] * 2
    a = MetaTPosterior(vals, w, m, TCopulaParams(4.0, np.eye(2))).sample(10_000, np.random.default_rng(5))
    b = MetaTPosterior(vals, w, m, TCopulaParams(4.0, eq_rho(0.8))).sample(10_000, np.random.default_rng(6))
    for k in range(2):
        assert stats.ks_2samp(a[:, k], b[:, k]).statistic < 0.03


def test_fit_nearly_collinear_stays_valid():
    rng = np.random.default_rng(0)
    u = rng.uniform(0.01, 0.99, 200)
    U = np.column_stack([u, np.clip(u + 1e-9 * rng.standard_normal(200), 1e-6, 1 - 1e-6)])
    fit = fit_t_copula(U)
    assert fit.params.rho[0, 1] > 0.99
    assert np.linalg.eigvalsh(fit.params.rho).min() > 1e-10
