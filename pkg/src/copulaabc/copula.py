"""Student-t copula: density, ECME fitting, sampling, and the meta-t posterior."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._rng import as_generator
from .drf import weighted as wt

log = logging.getLogger(__name__)

NU_BOUNDS = (1.0, 1000.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TCopulaParams:
    """Degrees of freedom and correlation matrix; ``nu = inf`` is the Gaussian copula."""

    nu: float
    rho: np.ndarray

    def __post_init__(self):
        rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        d = rho.shape[0]
        if rho.shape != (d, d):
            raise ValueError("rho must be square")
        if not np.allclose(rho, rho.T, atol=1e-12) or not np.allclose(np.diag(rho), 1.0, atol=1e-10):
            raise ValueError("rho must be a symmetric matrix with unit diagonal")
        if np.linalg.eigvalsh(rho).min() <= 1e-10:
            raise ValueError("rho must be positive definite")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        object.__setattr__(self, "rho", rho)

    @property
    def d(self) -> int:
        return self.rho.shape[0]

    @property
    def gaussian_limit(self) -> bool:
        return self.nu >= NU_BOUNDS[1] * (1 - 1e-6)


def t_quantile(u, nu):
    """Student-t quantile through the inverse regularized incomplete beta function.

    Tails use ``I^-1(nu/2, 1/2)``; the centre uses the complementary inverse,
    which avoids cancellation in ``1/x - 1`` for large ``nu``.
    """
    u = np.asarray(u, dtype=float)
    m = np.minimum(u, 1.0 - u)
    out = np.empty(u.shape)
    tail = m < 0.25
    if np.any(tail):
        x = special.betaincinv(nu / 2.0, 0.5, 2.0 * m[tail])
        out[tail] = np.sqrt(nu * ((1.0 - x) / x))
    mid = ~tail
    if np.any(mid):
        y = special.betainccinv(0.5, nu / 2.0, 2.0 * m[mid])
        out[mid] = np.sqrt(nu * (y / (1.0 - y)))
    return np.where(u < 0.5, -out, out)


def t_cdf(z, nu):
    return special.stdtr(nu, z)


def _t1_logpdf(z, nu):
    return (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
            - (nu + 1) / 2 * np.log1p(z * z / nu))


def _loglik_z(z, nu, chol):
    """Per-row log copula density for t-scores ``z`` (n x d) and ``rho = chol chol^T``."""
    d = z.shape[1]
    sol = np.linalg.solve(chol, z.T)
    m = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    joint = (special.gammaln((nu + d) / 2) - special.gammaln(nu / 2) - d / 2 * math.log(nu * math.pi)
             - 0.5 * logdet - (nu + d) / 2 * np.log1p(m / nu))
    return joint - np.sum(_t1_logpdf(z, nu), axis=1)


def _check_u(U):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if np.any(U <= 0) or np.any(U >= 1):
        raise ValueError("copula arguments must lie strictly inside (0, 1)")
    return U


def t_copula_log_density(u, params: TCopulaParams):
    """log c(u) = log t_{d,nu,rho}(z) - sum_k log t_nu(z_k) with z_k = T_nu^-1(u_k)."""
    single = np.ndim(u) == 1
    U = _check_u(u)
    if U.shape[1] != params.d:
        raise ValueError(f"expected {params.d} columns")
    chol = np.linalg.cholesky(params.rho)
    if math.isinf(params.nu):
        # Gaussian copula; exactly 0 when rho is the identity
        z = special.ndtri(U)
        sol = np.linalg.solve(chol, z.T)
        out = -np.sum(np.log(np.diag(chol))) - 0.5 * (np.sum(sol * sol, axis=0) - np.sum(z * z, axis=1))
    else:
        out = _loglik_z(t_quantile(U, params.nu), params.nu, chol)
    return float(out[0]) if single else out


def _to_correlation(S):
    dinv = 1.0 / np.sqrt(np.diag(S))
    R = S * dinv[:, None] * dinv[None, :]
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


MIN_EIG = 1e-8


def _safe_cholesky(R):
    # the eigenvalue floor keeps every iterate valid for TCopulaParams
    for attempt in range(20):
        if np.linalg.eigvalsh(R).min() > MIN_EIG:
            try:
                return R, np.linalg.cholesky(R)
            except np.linalg.LinAlgError:
                pass
        log.warning("correlation iterate not positive definite; adding a ridge")
        R = _to_correlation(R + 1e-8 * (10 ** attempt) * np.eye(R.shape[0]))
    raise np.linalg.LinAlgError("could not repair correlation matrix")


@dataclass
class CopulaFit:
    params: TCopulaParams
    loglik: float
    history: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _golden_max(f, lo, hi, tol=1e-5):
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    return max(cands)[::-1]


def fit_t_copula(U, nu_bounds=NU_BOUNDS, tol: float = 1e-8, max_iter: int = 200,
                 rho_steps: int = 20) -> CopulaFit:
    """ECME maximum-likelihood fit of (nu, rho) to pseudo-observations.

    Each outer iteration runs up to ``rho_steps`` fixed-point updates of rho
    with nu held fixed (latent-scale weights (nu + d) / (nu + m_j), then
    projection to unit diagonal), then maximizes the profile likelihood in
    log nu by golden section.  A step is kept only if it does not lower the
    log-likelihood, so ``history`` is nondecreasing.
    """
    U = _check_u(U)
    n, d = U.shape
    if n < d + 2:
        raise ValueError(f"need at least {d + 2} pseudo-observation rows, got {n}")
    lo, hi = math.log(nu_bounds[0]), math.log(nu_bounds[1])

    zcache = {}

    def scores(nu):
        key = float(nu)
        if key not in zcache:
            if len(zcache) > 64:
                zcache.clear()
            zcache[key] = t_quantile(U, nu)
        return zcache[key]

    def ll(nu, chol):
        return float(np.sum(_loglik_z(scores(nu), nu, chol)))

    # start: normal-score correlation, moderate nu
    R = _to_correlation(np.cov(special.ndtri(U), rowvar=False).reshape(d, d) + 1e-12 * np.eye(d))
    R, chol = _safe_cholesky(R)
    nu = 10.0
    cur = ll(nu, chol)
    history = [cur]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prev = cur
        z = scores(nu)
        for _ in range(rho_steps):
            sol = np.linalg.solve(chol, z.T)
            m = np.sum(sol * sol, axis=0)
            wts = (nu + d) / (nu + m)
            S = (z * wts[:, None]).T @ z / n
            R_new, chol_new = _safe_cholesky(_to_correlation(S))
            new = ll(nu, chol_new)
            if new < cur:
                break
            gain = new - cur
            R, chol, cur = R_new, chol_new, new
            if gain < tol:
                break
        lnu, best = _golden_max(lambda t: ll(math.exp(t), chol), lo, hi)
        if best >= cur:
            nu, cur = math.exp(lnu), best
        history.append(cur)
        if abs(cur - prev) < tol:
            converged = True
            break
    R = _to_correlation(R)
    return CopulaFit(TCopulaParams(nu, R), cur, history, it, converged)


def sample_t_copula(params: TCopulaParams, n: int, rng) -> np.ndarray:
    rng = as_generator(rng)
    chol = np.linalg.cholesky(params.rho)
    g = rng.standard_normal((n, params.d)) @ chol.T
    if params.nu >= 1e8:
        return special.ndtr(g)
    w = rng.chisquare(params.nu, size=(n, 1)) / params.nu
    u = t_cdf(g / np.sqrt(w), params.nu)
    # keep draws strictly inside the unit cube
    return np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


# --- pseudo-observations and the meta-t posterior --------------------------------------

def pseudo_obs(theta, weights, rescale: bool = False):
    """``u[j, k] = sum_i w_k[i] 1(theta[i, k] <= theta[j, k])`` at the table's own rows.

    ``weights`` is a (d, N) array (one weight vector per parameter).  Rows with
    any ``u`` in {0, 1} are dropped.  Returns ``(U, kept_rows)``.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    N, d = theta.shape
    if weights.shape != (d, N):
        raise ValueError("weights must have shape (d, N)")
    U = np.column_stack([wt.cdf(weights[k], theta[:, k], theta[:, k]) for k in range(d)])
    if rescale:
        U = U * N / (N + 1.0)
    keep = np.all((U > 0) & (U < 1), axis=1)
    if not keep.any():
        raise ValueError("every pseudo-observation row touches the boundary of (0, 1)")
    return U[keep], np.flatnonzero(keep)


@dataclass(eq=False)
class MetaTPosterior:
    """Weighted-empirical margins joined by a t copula.

    ``values[:, k]`` and ``weights[k]`` define margin ``k``'s CDF and
    quantile function; ``densities[k]`` its density estimate.
    """

    values: np.ndarray
    weights: np.ndarray
    densities: list
    copula: TCopulaParams | None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        d = self.values.shape[1]
        if self.weights.shape != (d, self.values.shape[0]) or len(self.densities) != d:
            raise ValueError("values, weights and densities disagree on dimension")
        if d > 1 and (self.copula is None or self.copula.d != d):
            raise ValueError("a d-dimensional copula is required when d > 1")
        self._sorted = []
        for k in range(d):
            order = np.argsort(self.values[:, k], kind="stable")
            self._sorted.append((self.values[order, k], np.cumsum(self.weights[k, order])))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def marginal_cdf(self, k, t):
        ys, cw = self._sorted[k]
        idx = np.searchsorted(ys, t, side="right")
        return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)

    def marginal_quantile(self, k, u):
        ys, cw = self._sorted[k]
        idx = np.searchsorted(cw / cw[-1], u, side="left")
        return ys[np.minimum(idx, len(ys) - 1)]

    def log_density(self, theta):
        """Log meta-t density; -inf where a margin density is 0 or a CDF hits 0 or 1."""
        single = np.ndim(theta) == 1
        T = np.atleast_2d(np.asarray(theta, dtype=float))
        if T.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional points")
        out = np.zeros(T.shape[0])
        for k in range(self.d):
            out += self.densities[k].logpdf(T[:, k])
        if self.d > 1:
            U = np.column_stack([self.marginal_cdf(k, T[:, k]) for k in range(self.d)])
            ok = np.all((U > 0) & (U < 1), axis=1) & np.isfinite(out)
            cop = np.full(T.shape[0], -np.inf)
            if ok.any():
                cop[ok] = t_copula_log_density(U[ok], self.copula)
            out = out + cop
        return float(out[0]) if single else out

    def sample(self, n: int, rng) -> np.ndarray:
        """Draws ``theta_k = Q_k(u_k)`` with ``u`` from the fitted copula."""
        rng = as_generator(rng)
        if self.d == 1:
            U = rng.random((n, 1))
        else:
            U = sample_t_copula(self.copula, n, rng)
        return np.column_stack([self.marginal_quantile(k, U[:, k]) for k in range(self.d)])


def meta_t_log_density(theta, post: MetaTPosterior):
    return post.log_density(theta)


def sample_meta_t(post: MetaTPosterior, n_plus: int, rng) -> np.ndarray:
    return post.sample(n_plus, rng)
