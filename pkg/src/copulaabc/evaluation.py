"""Scoring against the truth and against exact posteriors, and replicated experiments."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import logsumexp

from ._rng import child_rng, child_seed
from .inference import (InferenceConfig, forest_weights_for, posterior_from_weights,
                        reduce_table, select_model_many, PosteriorReport)
from .models.benchmarks import MIXTURE_SD
from .models.registry import GPrior, ModelSpec
from . import reftable
from .rejection import preselect, rejection_abc

log = logging.getLogger(__name__)

KS_CRIT_95 = 1.358
KS_CRIT_99 = 1.628


# --- weighted Kolmogorov-Smirnov -------------------------------------------------------------

def weighted_ks(atoms, w, F0):
    """Distance between a weighted ECDF and ``F0`` and its finite-sample test statistic.

    The distance takes both one-sided limits at every atom.  The statistic uses
    the effective sample size ``1 / sum(w^2)`` in the usual multiplier
    ``sqrt(n) + 0.12 + 0.11 / sqrt(n)``.
    """
    y = np.asarray(atoms, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if y.shape != w.shape or y.size == 0:
        raise ValueError("atoms and weights must be nonempty and the same length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("weights must be nonnegative and sum to 1")
    keep = w > 0
    y, w = y[keep], w[keep]
    t, inv = np.unique(y, return_inverse=True)
    mass = np.bincount(inv, weights=w, minlength=len(t))
    upper = np.minimum(np.cumsum(mass), 1.0)
    lower = upper - mass
    f0 = np.asarray(F0(t), dtype=float)
    D = float(max(np.max(np.abs(upper - f0)), np.max(np.abs(lower - f0))))
    n_eff = 1.0 / np.sum(w * w)
    sq = math.sqrt(n_eff)
    return D, (sq + 0.12 + 0.11 / sq) * D


# --- exact and numerically exact posteriors ---------------------------------------------------

@dataclass(frozen=True)
class GammaPosterior:
    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def cdf(self, t):
        return stats.gamma.cdf(t, self.shape, scale=1.0 / self.rate)

    def pdf(self, t):
        return stats.gamma.pdf(t, self.shape, scale=1.0 / self.rate)

    def ppf(self, u):
        return stats.gamma.ppf(u, self.shape, scale=1.0 / self.rate)


def exact_poisson_posterior(counts, a: float = 0.5, b: float = 0.1) -> GammaPosterior:
    """Conjugate gamma(a + sum x, b + n) posterior of a Poisson rate under a gamma(a, b) prior."""
    x = np.asarray(counts).ravel()
    if x.size < 1:
        raise ValueError("need at least one observation")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise ValueError("counts must be nonnegative integers")
    return GammaPosterior(a + float(x.sum()), b + x.size)


@dataclass(frozen=True)
class GridMarginal:
    """A 1-d posterior tabulated on a grid; CDF by trapezoid integration."""

    grid: np.ndarray
    density: np.ndarray

    @classmethod
    def from_log(cls, grid, logdens):
        grid = np.asarray(grid, dtype=float)
        f = np.exp(np.asarray(logdens) - np.max(logdens))
        return cls(grid, f / np.trapezoid(f, grid))

    @property
    def _cum(self):
        c = cumulative_trapezoid(self.density, self.grid, initial=0.0)
        return c / c[-1]

    @property
    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.density, self.grid))

    def cdf(self, t):
        return np.interp(t, self.grid, self._cum, left=0.0, right=1.0)

    def ppf(self, u):
        return np.interp(u, self._cum, self.grid)


def mixture_location_posterior(x, lower: float = -10.0, upper: float = 10.0,
                               n_grid: int = 20001) -> GridMarginal:
    """Posterior of the common location of 0.5 N(mu, 1) + 0.5 N(mu, 0.1^2) under a uniform prior."""
    x = np.asarray(x, dtype=float).ravel()
    centre, spread = float(np.median(x)), 12.0 / math.sqrt(max(x.size, 1))
    lo, hi = max(lower, centre - spread - 1.0), min(upper, centre + spread + 1.0)
    grid = np.linspace(lo, hi, n_grid)
    sd = np.asarray(MIXTURE_SD)
    z = (x[None, :, None] - grid[:, None, None]) / sd
    comp = -0.5 * z * z - np.log(sd) + math.log(0.5)
    ll = logsumexp(comp, axis=2).sum(axis=1)
    return GridMarginal.from_log(grid, ll)


def twisted_pair_posterior(x1: float, x2: float, b: float = 0.1, n_grid: int = 400):
    """Marginals of (theta1, theta2) under the twisted prior and one N(theta, I) observation.

    The remaining coordinates are independent of the pair a posteriori, so the
    pair's joint density is tabulated directly on an ``n_grid`` square grid.
    """
    t1 = np.linspace(x1 - 8.0, x1 + 8.0, n_grid)
    cond = (b * t1 ** 2 - 100.0 * b + x2) / 2.0
    t2 = np.linspace(cond.min() - 6.0, cond.max() + 6.0, n_grid)
    T1, T2 = np.meshgrid(t1, t2, indexing="ij")
    logp = (-T1 ** 2 / 200.0 - (T2 - b * T1 ** 2 + 100.0 * b) ** 2 / 2.0
            - (x1 - T1) ** 2 / 2.0 - (x2 - T2) ** 2 / 2.0)
    P = np.exp(logp - logp.max())
    m1 = np.trapezoid(P, t2, axis=1)
    m2 = np.trapezoid(P, t1, axis=0)
    return GridMarginal.from_log(t1, np.log(m1 + 1e-300)), GridMarginal.from_log(t2, np.log(m2 + 1e-300))


def exact_marginals(model: ModelSpec, data) -> dict:
    """Parameter index -> exact posterior marginal, where an oracle exists."""
    if model.kind == "poisson_mixture":
        return {0: exact_poisson_posterior(data[:, 0]), 1: mixture_location_posterior(data[:, 1])}
    if model.kind == "twisted_gaussian" and np.asarray(data).shape[0] == 1:
        x = np.asarray(data)[0]
        a, c = twisted_pair_posterior(x[0], x[1], getattr(model.prior, "b", 0.1))
        return {0: a, 1: c}
    return {}


# --- per-replica scoring ---------------------------------------------------------------------

POINT_ESTIMATES = ("mean", "median", "mode", "MLE")


def score_report(rep: PosteriorReport, truth, oracles: dict | None = None) -> dict:
    """Errors, coverage and KS distances for one report; keyed by parameter name."""
    truth = np.asarray(truth, dtype=float)
    oracles = oracles or {}
    lo95, hi95 = rep.interval(0.95)
    lo50, hi50 = rep.interval(0.5)
    est = {"mean": rep.mean, "median": rep.median, "mode": rep.mode, "MLE": rep.mle}
    out = {}
    for k, name in enumerate(rep.param_names):
        row = {"s.d.": float(rep.sd[k])}
        for e in POINT_ESTIMATES:
            row[e] = float(est[e][k])
            row[f"AE({e})"] = abs(float(est[e][k]) - truth[k])
            row[f"SE({e})"] = (float(est[e][k]) - truth[k]) ** 2
        row["cover95"] = float(lo95[k] <= truth[k] <= hi95[k])
        row["cover50"] = float(lo50[k] <= truth[k] <= hi50[k])
        if k in oracles and rep.atoms is not None:
            D, T = weighted_ks(rep.atoms[:, k], rep.atom_weights[k], oracles[k].cdf)
            row["KS distance"], row["KS statistic"] = D, T
            row["oracle mean"] = float(oracles[k].mean)
        out[name] = row
    if rep.copula_nu is not None:
        out["_copula"] = {"nu": float(rep.copula_nu)}
    if rep.model_probs is not None:
        out["_model"] = _model_probs(rep)
    return out


def _model_probs(rep: PosteriorReport) -> dict:
    return {f"p(model {m})": float(p) for m, p in enumerate(rep.model_probs)}


# --- experiments -----------------------------------------------------------------------------

def config_hash(cfg_dict: dict) -> str:
    """Hash of the settings that determine results (output paths and thread counts excluded)."""
    clean = {k: v for k, v in cfg_dict.items() if k not in ("out", "threads")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    replicas: list            # one dict per replica: {"metrics": {method: score}, "runtime": {...}}
    config_hash: str
    rows: list = field(default_factory=list)

    def aggregate(self) -> list:
        """Long-form rows (method, parameter, statistic, mean, sd) over replicas.

        MAE and MSE rows are the averages of the per-replica absolute and
        squared errors of each point estimate.
        """
        acc: dict = {}
        for rep in self.replicas:
            for method, per_param in rep["metrics"].items():
                for param, row in per_param.items():
                    for stat, v in row.items():
                        stat = stat.replace("AE(", "MAE(").replace("SE(", "MSE(") if stat[:3] in ("AE(", "SE(") else stat
                        acc.setdefault((method, param, stat), []).append(v)
        rows = []
        for (method, param, stat), vals in sorted(acc.items(), key=lambda kv: kv[0]):
            v = np.asarray(vals, dtype=float)
            sd = float(np.std(v, ddof=1)) if v.size > 1 and np.all(np.isfinite(v)) else None
            rows.append((method, param, stat, float(v.mean()), sd, int(v.size)))
        self.rows = rows
        return rows

    def to_csv(self, path) -> None:
        rows = self.rows or self.aggregate()
        lines = [f"# config_hash={self.config_hash}", "method,parameter,statistic,mean,sd,replicas"]
        for method, param, stat, m, sd, n in rows:
            lines.append(",".join([method, param, stat, format(m, ".10g"),
                                   "" if sd is None else format(sd, ".10g"), str(n)]))
        Path(path).write_text("\n".join(lines) + "\n")

    def value(self, method, param, stat) -> float:
        for r in self.rows or self.aggregate():
            if r[:3] == (method, param, stat):
                return r[3]
        raise KeyError((method, param, stat))

    def per_replica(self, method, param, stat) -> np.ndarray:
        return np.array([r["metrics"][method][param][stat] for r in self.replicas])


@dataclass
class Experiment:
    """Everything ``replicate_experiment`` needs, already resolved to objects."""

    models: list
    truth: np.ndarray
    truth_model: int = 0
    N: int = 10_000
    n_sim: int = 100
    n: int = 100
    replicas: int = 10
    methods: tuple = ("copulaABCdrf",)
    inference: InferenceConfig = InferenceConfig()
    q: float = 0.01
    seed: int = 0
    share_table: bool = True
    table_workers: int = 1
    observed: np.ndarray | None = None          # fixed dataset used by every replica
    echo: dict = field(default_factory=dict)   # config as given, for hashing and provenance


def _observed(exp: Experiment, r: int):
    model = exp.models[exp.truth_model]
    if exp.observed is not None:
        return exp.observed, model.summarize(exp.observed)
    data = model.simulate(exp.truth, exp.n, child_rng(exp.seed, 1, r))
    return data, model.summarize(data)


def _build_table(exp: Experiment, models, key, out_dir):
    path = None if out_dir is None else Path(out_dir) / f"table_{key}.bin"
    if path is not None and path.exists():
        return reftable.load(path)
    t = reftable.build(models, exp.N, exp.n_sim, child_seed(exp.seed, 2, key) >> 1, workers=exp.table_workers)
    if path is not None:
        reftable.save(t, path)
    return t


def _copula_reports(exp, table, S_obs, seed):
    """copulaABCdrf reports for every row of ``S_obs`` against one table."""
    cfg = exp.inference
    m = len(S_obs)
    probs = best = None
    if len(exp.models) > 1:
        probs = select_model_many(table, S_obs, cfg, seed)
        best = np.argmax(probs, axis=1)
    reports = [None] * m
    for mi in (range(1) if best is None else np.unique(best)):
        idx = np.arange(m) if best is None else np.flatnonzero(best == mi)
        sub = table if best is None else reduce_table(table, int(mi))
        spec = exp.models[int(mi)]
        W = forest_weights_for(sub, S_obs[idx], cfg, seed, spec.summary_groups)
        for i, w in zip(idx, W):
            rep = posterior_from_weights(sub, w, spec.prior, cfg, seed)
            if best is not None:
                rep.model_probs, rep.model_index = probs[i], int(best[i])
            reports[i] = rep
    return reports


def replicate_experiment(exp: Experiment, out_dir=None, resume: bool = True) -> ExperimentResult:
    """Simulate ``exp.replicas`` observed datasets at the truth and score every method.

    With ``share_table`` the reference table and forests are built once and
    reused by all replicas (forests never see the observed data).  Per-replica
    results are written to ``out_dir/replicas`` and reused on rerun.
    """
    chash = config_hash(exp.echo)
    rdir = None
    if out_dir is not None:
        rdir = Path(out_dir) / "replicas"
        rdir.mkdir(parents=True, exist_ok=True)
    done, todo = {}, []
    for r in range(exp.replicas):
        f = None if rdir is None else rdir / f"replica_{r:03d}.json"
        if resume and f is not None and f.exists():
            rec = json.loads(f.read_text())
            if rec.get("config_hash") == chash:
                done[r] = rec
                continue
        todo.append(r)
    if not exp.methods:
        return ExperimentResult([{"metrics": {}, "runtime": {}} for _ in range(exp.replicas)], chash)

    observed = {r: _observed(exp, r) for r in todo}
    g_prior = any(isinstance(m.prior, GPrior) for m in exp.models)
    share = exp.share_table and not g_prior
    groups = [todo] if share else [[r] for r in todo]
    truth_spec = exp.models[exp.truth_model]
    for group in groups:
        if not group:
            continue
        t0 = time.perf_counter()
        if share:
            models, key = exp.models, 0
        else:
            models = [m.resolve_prior(observed[group[0]][0]) for m in exp.models]
            key = 1000 + group[0]
        table = _build_table(exp, models, key, out_dir)
        t_table = time.perf_counter() - t0
        S_obs = np.vstack([observed[r][1] for r in group])
        results = {r: {"metrics": {}, "runtime": {"table": t_table}, "candidates": {}} for r in group}
        seed = child_seed(exp.seed, 3) >> 1
        for method in exp.methods:
            t0 = time.perf_counter()
            if method == "copulaABCdrf":
                reports = _copula_reports(exp, table, S_obs, seed)
            elif method in ("rejectionABC", "rejectionABCselect"):
                cols = None
                if method == "rejectionABCselect":
                    cols = preselect(table, models[exp.truth_model].d, exp.inference.forest, seed,
                                     exp.inference.workers)
                prior = models[exp.truth_model].prior
                reports = [rejection_abc(table, s, prior, exp.q, columns=cols) for s in S_obs]
            else:
                raise ValueError(f"unknown method {method!r}")
            per = (time.perf_counter() - t0) / len(group)
            for r, rep in zip(group, reports):
                if rep.model_index is not None and rep.model_index != exp.truth_model:
                    # wrong model picked: parameters are not comparable with the truth
                    results[r]["metrics"][method] = {"_model": _model_probs(rep)}
                else:
                    oracles = exact_marginals(truth_spec, observed[r][0])
                    results[r]["metrics"][method] = score_report(rep, exp.truth, oracles)
                results[r]["runtime"][method] = per
                if "mode_index" in rep.diagnostics:
                    results[r]["candidates"][method] = [int(rep.diagnostics["mode_index"]),
                                                        int(rep.diagnostics["mle_index"])]
        for r in group:
            rec = {"config_hash": chash, "replica": r, **results[r]}
            done[r] = rec
            if rdir is not None:
                (rdir / f"replica_{r:03d}.json").write_text(json.dumps(rec, indent=1, sort_keys=True))
    res = ExperimentResult([done[r] for r in range(exp.replicas)], chash)
    res.aggregate()
    return res
