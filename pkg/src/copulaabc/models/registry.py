"""Model specifications: prior, simulator, summaries, and their config form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .. import netstats
from ..netstats import ErgmStatSpec, Term
from ..network import Network
from . import benchmarks, growth
from .ergm import build_g_prior, simulate_ergm
from .priors import (GammaPrior, MVNormalPrior, ParamSpace, Prior, ProductPrior,
                     TwistedGaussianPrior, UniformPrior)

IID_KINDS = ("poisson_mixture", "bivariate_gaussian", "twisted_gaussian", "gaussian_location")
NETWORK_KINDS = ("price", "nlpa", "dmc", "dmr", "ergm")
MODEL_KINDS = IID_KINDS + NETWORK_KINDS


@dataclass(frozen=True)
class GPrior(Prior):
    """Placeholder for a g-prior; becomes an ``MVNormalPrior`` once data are seen."""

    g: float
    d: int

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")

    @property
    def dim(self) -> int:
        return self.d

    def sample_n(self, rng, n):
        raise RuntimeError("g-prior must be resolved against the observed network first")

    def log_density(self, theta):
        raise RuntimeError("g-prior must be resolved against the observed network first")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A generative model usable by the reference-table builder.

    ``options`` holds kind-specific settings: ``n0`` (growth models, defaults
    to ``n_sim - 1``), ``terms`` and ``burn`` (ERGM), ``summary_groups``
    (lists of summary indices to regress each parameter on).
    """

    name: str
    kind: str
    space: ParamSpace
    prior: Prior
    summaries: tuple[str, ...]
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "summaries", tuple(self.summaries))
        if self.prior.dim != self.space.d:
            raise ValueError("prior dimension does not match parameter space")
        if not self.summaries:
            raise ValueError("at least one summary statistic is required")
        if self.kind in IID_KINDS:
            benchmarks.check_iid_summary_names(self.summaries)
        else:
            netstats.check_summary_names(self.summaries)
        if self.kind == "ergm" and len(self.ergm_spec) != self.space.d:
            raise ValueError("ERGM terms must match the parameter dimension")

    @property
    def d(self) -> int:
        return self.space.d

    @property
    def p(self) -> int:
        return len(self.summaries)

    @property
    def is_network(self) -> bool:
        return self.kind in NETWORK_KINDS

    @property
    def ergm_spec(self) -> ErgmStatSpec:
        terms = self.options.get("terms", ("kstar2", "triangles"))
        return ErgmStatSpec(tuple(Term(t) if isinstance(t, str) else Term(*t) for t in terms))

    @property
    def summary_groups(self):
        groups = self.options.get("summary_groups")
        return None if groups is None else [list(map(int, g)) for g in groups]

    def simulate(self, theta, n_sim: int, rng):
        """One dataset of size ``n_sim`` (rows or nodes)."""
        t = np.asarray(theta, dtype=float)
        if t.shape != (self.d,):
            raise ValueError(f"{self.name}: theta must have length {self.d}")
        if n_sim < 1:
            raise ValueError("n_sim must be >= 1")
        if not self.space.contains(t):
            raise ValueError(f"{self.name}: theta {t} outside the parameter space")
        n0 = self.options.get("n0") or max(1, n_sim - 1)
        k = self.kind
        if k == "poisson_mixture":
            return benchmarks.simulate_poisson_mixture(t, n_sim, rng)
        if k == "bivariate_gaussian":
            return benchmarks.simulate_bivariate_gaussian(t, n_sim, rng)
        if k in ("twisted_gaussian", "gaussian_location"):
            return benchmarks.simulate_gaussian_location(t, n_sim, rng)
        if k == "price":
            return growth.grow_price(t[0], t[1], n_sim, n0, rng)
        if k == "nlpa":
            return growth.grow_nlpa(t[0], t[1], n_sim, n0, rng)
        if k == "dmc":
            return growth.grow_dmc(t[0], t[1], n_sim, rng)
        if k == "dmr":
            return growth.grow_dmr(t[0], t[1], n_sim, rng)
        return simulate_ergm(t, self.ergm_spec, n_sim, self.options.get("burn"), rng)

    def summarize(self, data) -> np.ndarray:
        """Summary vector; raises when a summary is undefined for this dataset."""
        if isinstance(data, Network):
            if self.options.get("undirected"):
                data = data.to_undirected()
            s = netstats.stats_by_name(data, self.summaries)
        else:
            s = benchmarks.iid_summaries(data, self.summaries)
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite summary statistic")
        return s

    def simulate_summaries(self, theta, n_sim: int, rng) -> np.ndarray:
        return self.summarize(self.simulate(theta, n_sim, rng))

    def resolve_prior(self, observed) -> "ModelSpec":
        """Replace a g-prior placeholder by the normal prior implied by ``observed``."""
        if not isinstance(self.prior, GPrior):
            return self
        if not isinstance(observed, Network):
            raise ValueError("a g-prior needs an observed network")
        return replace(self, prior=build_g_prior(observed, self.ergm_spec, self.prior.g))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "params": list(self.space.names),
            "prior": prior_to_dict(self.prior),
            "summaries": list(self.summaries),
            "options": _jsonable(self.options),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --- prior (de)serialization ----------------------------------------------------------------

def prior_to_dict(prior: Prior) -> dict:
    if isinstance(prior, UniformPrior):
        return {"kind": "uniform", "lower": list(prior.lower), "upper": list(prior.upper)}
    if isinstance(prior, GammaPrior):
        return {"kind": "gamma", "shape": list(prior.shape), "rate": list(prior.rate)}
    if isinstance(prior, MVNormalPrior):
        return {"kind": "normal", "mean": prior.mean.tolist(), "cov": prior.cov.tolist()}
    if isinstance(prior, TwistedGaussianPrior):
        return {"kind": "twisted", "d": prior.d, "b": prior.b}
    if isinstance(prior, GPrior):
        return {"kind": "g", "g": prior.g, "d": prior.d}
    if isinstance(prior, ProductPrior):
        return {"kind": "product", "parts": [prior_to_dict(p) for p in prior.parts]}
    raise TypeError(f"cannot serialize {type(prior).__name__}")


def prior_from_dict(cfg: dict) -> Prior:
    kind = cfg.get("kind")
    if kind == "uniform":
        return UniformPrior(tuple(cfg["lower"]), tuple(cfg["upper"]))
    if kind == "gamma":
        return GammaPrior(tuple(np.atleast_1d(cfg["shape"])), tuple(np.atleast_1d(cfg["rate"])))
    if kind == "normal":
        return MVNormalPrior(np.array(cfg["mean"], float), np.array(cfg["cov"], float))
    if kind == "twisted":
        return TwistedGaussianPrior(int(cfg["d"]), float(cfg.get("b", 0.1)))
    if kind == "g":
        return GPrior(float(cfg["g"]), int(cfg["d"]))
    if kind == "product":
        return ProductPrior(tuple(prior_from_dict(p) for p in cfg["parts"]))
    raise ValueError(f"unknown prior kind {kind!r}")


def _space_for(prior: Prior, names) -> ParamSpace:
    lo, hi = prior.bounds()
    return ParamSpace(tuple(names), tuple(lo), tuple(hi))


def model_from_dict(cfg: dict) -> ModelSpec:
    prior = prior_from_dict(cfg["prior"])
    names = cfg.get("params") or [f"theta{k + 1}" for k in range(prior.dim)]
    if len(names) != prior.dim:
        raise ValueError(f"model {cfg.get('name')!r}: {len(names)} parameter names for a {prior.dim}-d prior")
    return ModelSpec(cfg.get("name", cfg["kind"]), cfg["kind"], _space_for(prior, names), prior,
                     tuple(cfg["summaries"]), dict(cfg.get("options", {})))


# --- built-in model definitions ---------------------------------------------------------------

def poisson_mixture() -> ModelSpec:
    prior = ProductPrior((GammaPrior((0.5,), (0.1,)), UniformPrior((-10.0,), (10.0,))))
    return ModelSpec("poisson_mixture", "poisson_mixture", _space_for(prior, ("lambda", "mu")),
                     prior, ("mean[0]", "mean[1]"))


def bivariate_gaussian() -> ModelSpec:
    prior = UniformPrior((-3.0, -4.0, -3.0, -3.0, -3.0), (3.0, 4.0, 3.0, 3.0, 3.0))
    return ModelSpec("bivariate_gaussian", "bivariate_gaussian",
                     _space_for(prior, [f"theta{k}" for k in range(1, 6)]), prior,
                     ("mean[0]", "mean[1]", "var[0]", "var[1]", "cov[0,1]"))


def twisted_gaussian(d: int = 30, b: float = 0.1) -> ModelSpec:
    prior = TwistedGaussianPrior(d, b)
    groups = [[0, 1], [0, 1]] + [[k] for k in range(2, d)]
    return ModelSpec("twisted_gaussian", "twisted_gaussian",
                     _space_for(prior, [f"theta{k}" for k in range(1, d + 1)]), prior,
                     tuple(f"mean[{k}]" for k in range(d)), {"summary_groups": groups})


def price(b: float = 0.1, summaries=None, undirected: bool = False) -> ModelSpec:
    """Price model; ``undirected=True`` summarizes the undirected projection."""
    prior = UniformPrior((0.9, 0.0), (1.1, b))
    summaries = summaries or ("mple_gwdegree", "density", "var_indegree")
    return ModelSpec("price", "price", _space_for(prior, ("k0", "p")), prior, tuple(summaries),
                     {"undirected": True} if undirected else {})


def nlpa(summaries=None) -> ModelSpec:
    prior = UniformPrior((0.0, 0.0), (3.0, 0.2))
    summaries = summaries or ("density", "clustering_avg_local", "mean_path")
    return ModelSpec("nlpa", "nlpa", _space_for(prior, ("alpha", "p")), prior, tuple(summaries))


def dmc() -> ModelSpec:
    prior = UniformPrior((0.15, 0.0), (0.35, 1.0))
    return ModelSpec("dmc", "dmc", _space_for(prior, ("q_mod", "q_con")), prior,
                     ("mple:meandeg+triangles:0", "mple:meandeg+triangles:1"))


def dmr() -> ModelSpec:
    prior = UniformPrior((0.15, 0.0), (0.35, 1.0))
    return ModelSpec("dmr", "dmr", _space_for(prior, ("q_del", "q_new")), prior,
                     ("clustering_avg_local", "clustering_global", "assortativity"))


def ergm(g: float = 100.0, terms=("kstar2", "triangles"), burn: int | None = None) -> ModelSpec:
    terms = tuple(terms)
    joint = "+".join(terms)
    names = tuple(f"mple:{joint}:{k}" for k in range(len(terms)))
    space = ParamSpace(tuple(terms), (-np.inf,) * len(terms), (np.inf,) * len(terms))
    opts = {"terms": list(terms)}
    if burn is not None:
        opts["burn"] = int(burn)
    return ModelSpec("ergm", "ergm", space, GPrior(g, len(terms)), names, opts)


BUILTIN = {
    "poisson_mixture": poisson_mixture,
    "bivariate_gaussian": bivariate_gaussian,
    "twisted_gaussian": twisted_gaussian,
    "price": price,
    "nlpa": nlpa,
    "dmc": dmc,
    "dmr": dmr,
    "ergm": ergm,
}


def get_model(name: str, **kwargs) -> ModelSpec:
    try:
        return BUILTIN[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown built-in model {name!r}; choose from {sorted(BUILTIN)}") from None
