"""TOML experiment configuration: parsing, validation and conversion to runtime objects.

A config names one or more ``[[model]]`` blocks plus top-level settings::

    seed = 1
    N = 10000
    n_sim = 100
    n = 100
    replicas = 10
    methods = ["copulaABCdrf", "rejectionABC"]

    [forest]
    n_trees = 2000

    [[model]]
    name = "poisson_mixture"
    truth = [3.0, 0.0]

Validation collects every problem before raising, so one run reports all
offending keys.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .drf import ForestConfig
from .evaluation import Experiment
from .inference import METHODS, InferenceConfig
from .models.registry import BUILTIN, ModelSpec, get_model, prior_from_dict, _space_for

_TOP = {
    "seed": int, "N": int, "n_sim": int, "n": int, "replicas": int, "methods": list,
    "q": float, "marginal": str, "nplus": int, "rescale_u": bool, "share_table": bool,
    "out": str, "threads": int, "truth_model": int, "model_prior": list,
    "forest": dict, "model": list, "observed": list,
}
_REQUIRED = ("seed", "N", "n_sim", "model")
_FOREST = {"n_trees": int, "sample_fraction": float, "min_leaf": int, "mtry": int,
           "n_features": int, "max_candidates": int}
_MODEL = {"name": str, "truth": list, "options": dict, "prior": dict}


class ConfigError(ValueError):
    """Raised with every validation problem listed, one per line."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    raw: dict
    models: list
    seed: int
    N: int
    n_sim: int
    n: int = 100
    replicas: int = 10
    methods: tuple = ("copulaABCdrf",)
    q: float = 0.01
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    share_table: bool = True
    out: str = "out"
    threads: int = 1
    truth: np.ndarray | None = None
    truth_model: int = 0
    model_prior: np.ndarray | None = None
    observed: np.ndarray | None = None

    def experiment(self) -> Experiment:
        if self.truth is None:
            raise ConfigError([f"model[{self.truth_model}].truth: required for replicate"])
        return Experiment(self.models, self.truth, self.truth_model, self.N, self.n_sim, self.n,
                          self.replicas, tuple(self.methods), self.inference, self.q, self.seed,
                          self.share_table, self.threads, self.observed, echo=self.raw)


def _type_ok(value, kind) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def _check_block(block: dict, schema: dict, where: str, problems: list) -> None:
    for key, value in block.items():
        if key not in schema:
            problems.append(f"{where}{key}: unknown key")
        elif not _type_ok(value, schema[key]):
            problems.append(f"{where}{key}: expected {schema[key].__name__}, got {type(value).__name__}")


def validate(raw: dict) -> list[str]:
    """All problems in a parsed config (empty when valid)."""
    problems: list[str] = []
    _check_block(raw, _TOP, "", problems)
    for key in _REQUIRED:
        if key not in raw:
            problems.append(f"{key}: missing required key")
    for key in ("N", "n_sim", "n", "replicas", "threads", "nplus"):
        if _type_ok(raw.get(key), int) and raw[key] < (0 if key in ("nplus",) else 1):
            problems.append(f"{key}: must be positive")
    if _type_ok(raw.get("q"), float) and not 0 < raw["q"] <= 1:
        problems.append("q: must lie in (0, 1]")
    if raw.get("marginal") not in (None, "hist", "kde"):
        problems.append("marginal: must be 'hist' or 'kde'")
    for m in raw.get("methods", []) if isinstance(raw.get("methods"), list) else []:
        if m not in METHODS:
            problems.append(f"methods: unknown method {m!r} (choose from {', '.join(METHODS)})")
    if isinstance(raw.get("forest"), dict):
        _check_block(raw["forest"], _FOREST, "forest.", problems)
    models = raw.get("model")
    if isinstance(models, list):
        if not models:
            problems.append("model: at least one [[model]] block is required")
        for i, block in enumerate(models):
            where = f"model[{i}]."
            if not isinstance(block, dict):
                problems.append(f"model[{i}]: expected a table")
                continue
            _check_block(block, _MODEL, where, problems)
            if "name" not in block:
                problems.append(f"{where}name: missing required key")
            elif block["name"] not in BUILTIN:
                problems.append(f"{where}name: unregistered model {block['name']!r}")
        tm = raw.get("truth_model", 0)
        if _type_ok(tm, int) and not 0 <= tm < max(len(models), 1):
            problems.append("truth_model: index out of range")
        mp = raw.get("model_prior")
        if isinstance(mp, list) and len(mp) != len(models):
            problems.append("model_prior: needs one probability per model")
    return problems


def _model_from_block(block: dict, i: int) -> ModelSpec:
    spec = get_model(block["name"], **block.get("options", {}))
    if "prior" in block:
        prior = prior_from_dict(block["prior"])
        spec = replace(spec, prior=prior, space=_space_for(prior, spec.space.names))
    return spec


def from_dict(raw: dict, overrides: dict | None = None) -> RunConfig:
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    problems = validate(raw)
    models = []
    if not problems:
        for i, block in enumerate(raw["model"]):
            try:
                spec = _model_from_block(block, i)
            except (TypeError, ValueError, KeyError) as exc:
                problems.append(f"model[{i}]: {exc}")
                continue
            if "truth" in block and len(block["truth"]) != spec.d:
                problems.append(f"model[{i}].truth: expected {spec.d} values, got {len(block['truth'])}")
            models.append(spec)
    if problems:
        raise ConfigError(problems)
    forest = ForestConfig(seed=int(raw["seed"]), **raw.get("forest", {}))
    inf = InferenceConfig(forest, raw.get("marginal"), raw.get("nplus"), raw.get("rescale_u", False),
                          raw.get("threads", 1))
    tm = raw.get("truth_model", 0)
    truth = raw["model"][tm].get("truth")
    return RunConfig(
        raw=raw, models=models, seed=int(raw["seed"]), N=raw["N"], n_sim=raw["n_sim"],
        n=raw.get("n", 100), replicas=raw.get("replicas", 10),
        methods=tuple(raw.get("methods", ["copulaABCdrf"])), q=float(raw.get("q", 0.01)),
        inference=inf, share_table=raw.get("share_table", True), out=raw.get("out", "out"),
        threads=raw.get("threads", 1), truth=None if truth is None else np.asarray(truth, float),
        truth_model=tm,
        model_prior=None if "model_prior" not in raw else np.asarray(raw["model_prior"], float),
        observed=None if "observed" not in raw else np.atleast_2d(np.asarray(raw["observed"], float)),
    )


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("copulaabc.presets").iterdir()
                  if p.name.endswith(".toml"))


def read_toml(path) -> dict:
    """Parse a TOML file; ``preset:NAME`` loads a shipped preset."""
    text = str(path)
    if text.startswith("preset:"):
        name = text[len("preset:"):]
        f = resources.files("copulaabc.presets") / f"{name}.toml"
        if not f.is_file():
            raise ConfigError([f"unknown preset {name!r} (available: {', '.join(preset_names())})"])
        return tomllib.loads(f.read_text())
    try:
        return tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None


def load(path, overrides: dict | None = None) -> RunConfig:
    return from_dict(read_toml(path), overrides)
