"""Posterior estimation from a reference table: forest weights, margins, copula, mode/MLE.

The forests regress each parameter on the summaries and never see the
observed data, so weights for several observed summary vectors can be
computed from one training pass (``forest_weights_for``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import child_rng, child_seed
from .copula import MetaTPosterior, TCopulaParams, fit_t_copula, pseudo_obs
from .density import marginal_density
from .drf import ForestConfig, class_probs, one_hot, train
from .drf import weighted as wt
from .models.priors import Prior
from .reftable import ReferenceTable

log = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)
QUANTILE_LABELS = ("q2.5", "q25", "q50", "q75", "q97.5")
MIN_COPULA_ROWS = 4
FALLBACK_DRAWS = 10_000
METHODS = ("copulaABCdrf", "rejectionABC", "rejectionABCselect")


@dataclass(frozen=True)
class InferenceConfig:
    """Options for the copula-forest posterior.

    ``marginal=None`` picks the histogram for d < 6 and the KDE otherwise.
    ``n_plus=None`` draws 10^5 extra candidates for the mode/MLE when d >= 6
    and KDE margins are in use, and otherwise scores the table's own rows;
    ``n_plus=0`` always scores the table rows.
    """

    forest: ForestConfig = ForestConfig()
    marginal: str | None = None
    n_plus: int | None = None
    rescale_u: bool = False
    workers: int = 1

    def marginal_for(self, d: int) -> str:
        return self.marginal or ("hist" if d < 6 else "kde")

    def n_plus_for(self, d: int) -> int:
        if self.n_plus is not None:
            return int(self.n_plus)
        return 100_000 if (d >= 6 and self.marginal_for(d) == "kde") else 0


@dataclass
class PosteriorReport:
    method: str
    param_names: list
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray            # (len(QUANTILE_LEVELS), d)
    mode: np.ndarray
    mle: np.ndarray
    copula_nu: float | None = None
    copula_rho: np.ndarray | None = None
    model_probs: np.ndarray | None = None
    model_index: int | None = None
    diagnostics: dict = field(default_factory=dict)
    atoms: np.ndarray | None = None          # (N, d) values of the weighted margins
    atom_weights: np.ndarray | None = None   # (d, N)

    @property
    def median(self) -> np.ndarray:
        return self.quantiles[QUANTILE_LEVELS.index(0.5)]

    def interval(self, level: float = 0.95):
        lo = QUANTILE_LEVELS.index(round((1 - level) / 2, 4))
        hi = QUANTILE_LEVELS.index(round(1 - (1 - level) / 2, 4))
        return self.quantiles[lo], self.quantiles[hi]

    def csv_rows(self) -> list[list]:
        header = ["method", "parameter", "mean", "median", "mode", "MLE", "s.d.", *QUANTILE_LABELS]
        rows = [header]
        for k, name in enumerate(self.param_names):
            rows.append([self.method, name, self.mean[k], self.median[k], self.mode[k], self.mle[k],
                         self.sd[k], *self.quantiles[:, k]])
        return rows

    def to_csv(self, path, extra_header: str | None = None) -> None:
        with open(path, "w") as f:
            if extra_header:
                f.write(f"# {extra_header}\n")
            for row in self.csv_rows():
                f.write(",".join(v if isinstance(v, str) else format(float(v), ".17g") for v in row) + "\n")

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "parameters": list(self.param_names),
            "mean": self.mean.tolist(), "sd": self.sd.tolist(),
            "quantile_levels": list(QUANTILE_LEVELS), "quantiles": self.quantiles.tolist(),
            "mode": self.mode.tolist(), "mle": self.mle.tolist(),
            "diagnostics": self.diagnostics,
        }
        if self.copula_nu is not None:
            out["copula"] = {"nu": self.copula_nu, "rho": self.copula_rho.tolist(),
                             "gaussian_limit": bool(self.copula_nu >= 1000 * (1 - 1e-6))}
        if self.model_probs is not None:
            out["model_probs"] = self.model_probs.tolist()
            out["model_index"] = self.model_index
        return out

    def to_json(self, path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        with open(path, "w") as f:
            json.dump(d, f, indent=2, sort_keys=True)


# --- weighted summaries -------------------------------------------------------------------

def weighted_summary(w, y):
    """(mean, variance, quantiles at QUANTILE_LEVELS) of one weighted margin."""
    q = wt.quantile(w, y, QUANTILE_LEVELS)
    return wt.wmean(w, y), wt.wvar(w, y), np.asarray(q)


def summarize(weights, theta):
    """Per-parameter means, sds and quantiles; ``weights`` is (d, N)."""
    theta = np.atleast_2d(theta)
    d = theta.shape[1]
    mean, sd, qs = np.empty(d), np.empty(d), np.empty((len(QUANTILE_LEVELS), d))
    for k in range(d):
        m, v, q = weighted_summary(weights[k], theta[:, k])
        mean[k], sd[k], qs[:, k] = m, np.sqrt(max(v, 0.0)), q
    return mean, sd, qs


# --- forests ---------------------------------------------------------------------------------

def forest_weights_for(table: ReferenceTable, S_obs, cfg: InferenceConfig, seed: int,
                       groups=None) -> np.ndarray:
    """Weights of shape (m, d, N) for ``m`` observed summary vectors.

    Parameter ``k`` is regressed on summary columns ``groups[k]`` (all columns
    by default) with forest seed ``(seed, k)``.  Each forest is discarded once
    its weights are computed.
    """
    S_obs = np.atleast_2d(np.asarray(S_obs, dtype=float))
    N, d = table.theta.shape
    out = np.empty((S_obs.shape[0], d, N))
    for k in range(d):
        cols = list(range(table.p)) if groups is None else list(groups[k])
        fcfg = replace(cfg.forest, seed=child_seed(cfg.forest.seed, seed, k) >> 1)
        forest = train(table.summaries[:, cols], table.theta[:, k], fcfg, workers=cfg.workers)
        out[:, k, :] = forest.weights_many(S_obs[:, cols])
        del forest
    return out


# --- mode and MLE ----------------------------------------------------------------------------

def _argmax_pair(log_post, log_prior):
    """Indices of the largest posterior and posterior/prior scores (lowest index on ties)."""
    log_post = np.asarray(log_post, dtype=float)
    if not np.any(np.isfinite(log_post)):
        raise ValueError("every candidate has zero posterior density")
    mode = int(np.argmax(log_post))
    finite_prior = np.isfinite(log_prior)
    ok = finite_prior & np.isfinite(log_post)
    if not ok.any():
        raise ValueError("no candidate has finite posterior and prior density")
    lp = log_prior[ok]
    if np.all(lp == lp[0]):
        # a constant prior cancels from the ratio
        ratio = np.where(ok, log_post, -np.inf)
    else:
        ratio = np.where(ok, log_post - np.where(finite_prior, log_prior, 0.0), -np.inf)
    return mode, int(np.argmax(ratio))


def mode_mle_from_candidates(post: MetaTPosterior, prior: Prior, candidates):
    """Return ``(mode, mle, mode_index, mle_index)`` over a candidate set."""
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    if C.shape[0] == 0:
        raise ValueError("candidate set is empty")
    lpost = post.log_density(C)
    lprior = prior.log_density_many(C)
    i, j = _argmax_pair(np.atleast_1d(lpost), np.atleast_1d(lprior))
    return C[i].copy(), C[j].copy(), i, j


def mode_mle_extra_draws(post: MetaTPosterior, prior: Prior, n_plus: int, rng):
    if n_plus < 1:
        raise ValueError("n_plus must be >= 1")
    return mode_mle_from_candidates(post, prior, post.sample(n_plus, rng))


# --- model selection -------------------------------------------------------------------------

@dataclass
class ModelSelection:
    probs: np.ndarray
    best: int
    reduced: ReferenceTable


def select_model_many(table: ReferenceTable, S_obs, cfg: InferenceConfig, seed: int):
    """Classification forest on one-hot model labels; returns (m, M) probabilities."""
    M = len(table.meta.get("models", [])) or int(table.model.max()) + 1
    present = np.bincount(table.model, minlength=M)
    if M < 2:
        raise ValueError("model selection needs at least two candidate models")
    if np.any(present == 0):
        raise ValueError(f"models {np.flatnonzero(present == 0).tolist()} have no rows in the table")
    fcfg = replace(cfg.forest, seed=child_seed(cfg.forest.seed, seed, 10_007) >> 1)
    forest = train(table.summaries, one_hot(table.model, M), fcfg, workers=cfg.workers)
    W = forest.weights_many(np.atleast_2d(S_obs))
    return np.vstack([class_probs(w, table.model, M) for w in W])


def select_model(table: ReferenceTable, s_obs, cfg: InferenceConfig = InferenceConfig(),
                 seed: int = 0) -> ModelSelection:
    probs = select_model_many(table, s_obs, cfg, seed)[0]
    best = int(np.argmax(probs))
    return ModelSelection(probs, best, reduce_table(table, best))


def reduce_table(table: ReferenceTable, m: int) -> ReferenceTable:
    """Rows of model ``m`` with theta cut back to that model's dimension."""
    rows = table.rows_for_model(m)
    sub = table.subset(rows)
    models = table.meta.get("models")
    if models:
        d = len(models[m]["params"])
        sub.theta, sub.jitter = sub.theta[:, :d].copy(), sub.jitter[:, :d].copy()
        sub.meta = dict(table.meta, param_names=list(models[m]["params"]), selected_model=m)
    return sub


# --- full posterior ----------------------------------------------------------------------------

def _margin_bounds(prior: Prior, k: int):
    lo, hi = prior.bounds()
    return (lo[k], hi[k])


def posterior_from_weights(table: ReferenceTable, weights, prior: Prior,
                           cfg: InferenceConfig = InferenceConfig(), seed: int = 0,
                           method: str = "copulaABCdrf") -> PosteriorReport:
    """Margins, copula fit and mode/MLE given per-parameter weights (d, N)."""
    theta = table.theta
    N, d = theta.shape
    weights = np.asarray(weights, dtype=float)
    mean, sd, qs = summarize(weights, theta)
    kind = cfg.marginal_for(d)
    densities = []
    for k in range(d):
        support = np.unique(theta[weights[k] > 0, k])
        if support.size == 1:
            densities.append(_PointMass(support[0]))
        else:
            densities.append(marginal_density(theta[:, k], weights[k], kind, _margin_bounds(prior, k)))
    diag = {"n_table": int(N), "marginal": kind}
    copula = None
    if d > 1:
        try:
            U, kept = pseudo_obs(theta, weights, rescale=cfg.rescale_u)
        except ValueError:
            U, kept = np.empty((0, d)), np.empty(0, dtype=np.int64)
        diag["n_pseudo_obs"] = int(len(kept))
        diag["n_pseudo_dropped"] = int(N - len(kept))
        if len(kept) >= MIN_COPULA_ROWS:
            fit = fit_t_copula(U)
            copula = fit.params
            diag["copula_loglik"] = fit.loglik
            diag["copula_iterations"] = fit.n_iter
            diag["copula_monotone"] = bool(np.all(np.diff(fit.history) >= -1e-9))
        else:
            log.warning("only %d pseudo-observation rows lie inside (0,1)^%d; "
                        "using the independence copula", len(kept), d)
            copula = TCopulaParams(math.inf, np.eye(d))
            diag["copula_fallback"] = "independence"
    post = MetaTPosterior(theta, weights, densities, copula)
    n_plus = cfg.n_plus_for(d)
    if n_plus > 0:
        mode, mle, i, j = mode_mle_extra_draws(post, prior, n_plus, child_rng(seed, 77))
        diag["candidates"] = f"{n_plus} meta-t draws"
    else:
        try:
            mode, mle, i, j = mode_mle_from_candidates(post, prior, theta)
            diag["candidates"] = f"{N} table rows"
        except ValueError:
            # no table row lies inside every margin's weighted support
            log.warning("no table row has positive posterior density; scoring %d meta-t draws instead",
                        FALLBACK_DRAWS)
            mode, mle, i, j = mode_mle_extra_draws(post, prior, FALLBACK_DRAWS, child_rng(seed, 78))
            diag["candidates"] = f"{FALLBACK_DRAWS} meta-t draws (fallback)"
    diag["mode_index"], diag["mle_index"] = i, j
    return PosteriorReport(method, list(table.param_names[:d]), mean, sd, qs, mode, mle,
                           None if copula is None else copula.nu,
                           None if copula is None else copula.rho,
                           diagnostics=diag, atoms=theta, atom_weights=weights)


class _PointMass:
    """All weight on one value; log density 0 there and -inf elsewhere."""

    def __init__(self, x):
        self.x = float(x)

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == self.x, 0.0, -np.inf)


def copula_abc(table: ReferenceTable, s_obs, prior: Prior, cfg: InferenceConfig = InferenceConfig(),
               seed: int = 0, groups=None) -> PosteriorReport:
    """Steps 2-4 for one observed summary vector (model selection when M > 1)."""
    probs, best = None, None
    if len(table.meta.get("models", [])) > 1:
        sel = select_model(table, s_obs, cfg, seed)
        probs, best, table = sel.probs, sel.best, sel.reduced
    W = forest_weights_for(table, s_obs, cfg, seed, groups)[0]
    rep = posterior_from_weights(table, W, prior, cfg, seed)
    rep.model_probs, rep.model_index = probs, best
    return rep
