"""Nearest-neighbour rejection ABC with kernel-density mode/MLE and summary pre-selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from ._rng import child_seed
from .density import sj_bandwidth
from .drf import ForestConfig, train
from .inference import PosteriorReport, _argmax_pair, summarize
from .models.priors import Prior
from .reftable import ReferenceTable

MULTIVARIATE_KDE_MAX_DIM = 6


@dataclass
class RejectionResult:
    accepted: np.ndarray     # row indices, nearest first
    epsilon: float           # largest accepted distance
    distances: np.ndarray    # distances of the accepted rows

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.accepted), 1.0 / len(self.accepted))


def column_scales(summaries) -> np.ndarray:
    sd = np.std(summaries, axis=0)
    return np.where(sd > 0, sd, 1.0)


def distances(summaries, s_obs, standardize: bool = True) -> np.ndarray:
    S = np.asarray(summaries, dtype=float)
    diff = S - np.asarray(s_obs, dtype=float)
    if standardize:
        diff = diff / column_scales(S)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def reject(table: ReferenceTable, s_obs, q: float = 0.01, standardize: bool = True,
           columns=None) -> RejectionResult:
    """Keep the ``ceil(q N)`` rows nearest to ``s_obs`` (ties go to the lower row index)."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    S = table.summaries if columns is None else table.summaries[:, list(columns)]
    s = np.asarray(s_obs, dtype=float)
    if columns is not None and s.shape[-1] != S.shape[1]:
        s = s[list(columns)]
    dist = distances(S, s, standardize)
    k = math.ceil(q * table.N - 1e-9)
    order = np.argsort(dist, kind="stable")[:k]
    return RejectionResult(order, float(dist[order[-1]]), dist[order])


# --- KDE mode / MLE -------------------------------------------------------------------------

def mvn_kde_logdens(points, data) -> np.ndarray:
    """Log of a Gaussian KDE with normal-reference bandwidth matrix, at ``points``."""
    X = np.atleast_2d(data)
    n, d = X.shape
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    H = n ** (-2.0 / (d + 4)) * cov
    L = np.linalg.cholesky(H)
    Z = np.linalg.solve(L, (np.atleast_2d(points)[:, None, :] - X[None, :, :]).reshape(-1, d).T)
    q = -0.5 * np.sum(Z * Z, axis=0).reshape(-1, n)
    lognorm = -0.5 * d * math.log(2 * math.pi) - np.log(np.diag(L)).sum() - math.log(n)
    return logsumexp(q, axis=1) + lognorm


def product_kde_logdens(points, data) -> np.ndarray:
    """Log of a product of univariate Gaussian KDEs with Sheather-Jones bandwidths."""
    X = np.atleast_2d(data)
    P = np.atleast_2d(points)
    n, d = X.shape
    out = np.zeros(P.shape[0])
    for k in range(d):
        h = sj_bandwidth(X[:, k])
        z = (P[:, k, None] - X[None, :, k]) / h
        out += logsumexp(-0.5 * z * z, axis=1) - math.log(n * h * math.sqrt(2 * math.pi))
    return out


def kde_mode_mle(accepted, prior: Prior):
    """Mode and MLE over the accepted draws under a kernel density estimate.

    Returns ``(mode, mle, estimator_tag)``; the tag names the KDE family used.
    """
    X = np.atleast_2d(np.asarray(accepted, dtype=float))
    k, d = X.shape
    if np.any(np.ptp(X, axis=0) == 0):
        raise ValueError("a parameter has zero spread among the accepted draws")
    if d <= MULTIVARIATE_KDE_MAX_DIM:
        if k < d + 1:
            raise ValueError(f"multivariate KDE needs at least {d + 1} accepted draws")
        ld, tag = mvn_kde_logdens(X, X), "rejectionABCkern"
    else:
        if k < 3:
            raise ValueError("product KDE needs at least 3 accepted draws")
        ld, tag = product_kde_logdens(X, X), "rejectionABCprodkern"
    i, j = _argmax_pair(ld, prior.log_density_many(X))
    return X[i].copy(), X[j].copy(), tag


# --- summary pre-selection -----------------------------------------------------------------

def preselect(table: ReferenceTable, d: int | None = None, forest: ForestConfig = ForestConfig(),
              seed: int = 0, workers: int = 1) -> np.ndarray:
    """Indices of the ``d`` most important summaries, ascending.

    One regression forest per parameter; summaries are ranked within each
    forest by importance and the ranks summed (lower is better, ties go to the
    lower column index).
    """
    dim = table.theta.shape[1]
    d = dim if d is None else int(d)
    p = table.p
    if p < d:
        raise ValueError(f"cannot pick {d} of {p} summaries")
    if p == d:
        return np.arange(p)
    rank_sum = np.zeros(p)
    for k in range(dim):
        cfg = replace(forest, seed=child_seed(forest.seed, seed, 20_011, k) >> 1)
        imp = train(table.summaries, table.theta[:, k], cfg, workers=workers).importance()
        order = np.argsort(-imp, kind="stable")
        ranks = np.empty(p)
        ranks[order] = np.arange(p)
        rank_sum += ranks
    return np.sort(np.argsort(rank_sum, kind="stable")[:d])


# --- reports -------------------------------------------------------------------------------

def rejection_abc(table: ReferenceTable, s_obs, prior: Prior, q: float = 0.01,
                  standardize: bool = True, columns=None) -> PosteriorReport:
    """Rejection ABC posterior report; tagged ``rejectionABCselect`` when ``columns`` is given."""
    res = reject(table, s_obs, q, standardize, columns)
    d = len(prior.bounds()[0])
    theta = table.theta[res.accepted, :d]
    W = np.tile(res.weights, (d, 1))
    mean, sd, qs = summarize(W, theta)
    mode, mle, tag = kde_mode_mle(theta, prior)
    method = "rejectionABC" if columns is None else "rejectionABCselect"
    diag = {"n_table": int(table.N), "n_accepted": int(len(res.accepted)), "epsilon": res.epsilon,
            "mode_estimator": tag}
    if columns is not None:
        diag["summaries_used"] = [table.summary_names[c] for c in columns]
    return PosteriorReport(method, list(table.param_names[:d]), mean, sd, qs, mode, mle,
                           diagnostics=diag, atoms=theta, atom_weights=W)
