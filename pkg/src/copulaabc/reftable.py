"""Reference table: prior draws, simulated summaries, persistence.

Row ``j`` is generated from its own random stream ``child_rng(seed, j)``, so
a table is identical whatever the number of workers.  Rows whose summaries
cannot be computed (divergent MPLE, undefined assortativity, ...) are dropped
and counted, never resampled.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import as_generator, child_rng
from .models.registry import ModelSpec

MAGIC = b"CABCRT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<6sHI")


# --- jittering of discrete parameters -----------------------------------------------------

@dataclass(frozen=True)
class JitterRecord:
    dim: int
    u: float


def jitter(theta_star: int, rng, dim: int = 0) -> tuple[float, JitterRecord]:
    """Map an integer to ``theta_star - u`` with ``u ~ U(0, 1)``."""
    if theta_star != math.floor(theta_star):
        raise ValueError("jitter expects an integer value")
    rng = as_generator(rng)
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return float(theta_star) - u, JitterRecord(dim, u)


def unjitter(theta) -> np.ndarray | int:
    """Inverse of ``jitter``: ``floor(theta + 1)``."""
    t = np.floor(np.asarray(theta, dtype=float) + 1.0)
    return int(t) if t.ndim == 0 else t.astype(np.int64)


# --- table ---------------------------------------------------------------------------------

@dataclass(eq=False)
class ReferenceTable:
    """``N`` rows of (model index, parameter vector, summary vector).

    Model indices are 0-based.  When models of different dimension are mixed,
    ``theta`` is padded with zeros to the largest dimension.  ``jitter`` holds
    the uniform offsets subtracted from discrete coordinates (0 elsewhere).
    """

    model: np.ndarray
    theta: np.ndarray
    summaries: np.ndarray
    jitter: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.model = np.ascontiguousarray(self.model, dtype=np.int64)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        self.summaries = np.ascontiguousarray(self.summaries, dtype=np.float64)
        self.jitter = np.ascontiguousarray(self.jitter, dtype=np.float64)
        n = len(self.model)
        if n < 1:
            raise ValueError("reference table must have at least one row")
        if not (self.theta.shape[0] == self.summaries.shape[0] == self.jitter.shape[0] == n):
            raise ValueError("row counts disagree")
        if self.theta.shape != self.jitter.shape:
            raise ValueError("jitter array must match theta")

    @property
    def N(self) -> int:
        return len(self.model)

    @property
    def p(self) -> int:
        return self.summaries.shape[1]

    @property
    def summary_names(self) -> list[str]:
        return list(self.meta.get("summary_names", [f"s{k}" for k in range(self.p)]))

    @property
    def param_names(self) -> list[str]:
        return list(self.meta.get("param_names", [f"theta{k + 1}" for k in range(self.theta.shape[1])]))

    def rows_for_model(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.model == m)

    def subset(self, idx) -> "ReferenceTable":
        idx = np.asarray(idx)
        return ReferenceTable(self.model[idx], self.theta[idx], self.summaries[idx],
                              self.jitter[idx], dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, ReferenceTable):
            return NotImplemented
        return (self.meta == other.meta
                and all(a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                        for a, b in zip(self._arrays(), other._arrays())))

    def _arrays(self):
        return self.model, self.theta, self.summaries, self.jitter


def _simulate_row(models, model_prior, n_sim, seed, j, d_max):
    rng = child_rng(seed, j)
    m = 0 if len(models) == 1 else int(rng.choice(len(models), p=model_prior))
    spec = models[m]
    theta = spec.prior.sample(rng)
    try:
        s = spec.simulate_summaries(theta, n_sim, rng)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return m, None, None, None, type(exc).__name__
    padded = np.zeros(d_max)
    padded[:spec.d] = theta
    u = np.zeros(d_max)
    for k in spec.space.discrete_dims:
        padded[k], rec = jitter(round(theta[k]), rng, k)
        u[k] = rec.u
    return m, padded, s, u, None


def _simulate_chunk(models, model_prior, n_sim, seed, rows, d_max):
    return [_simulate_row(models, model_prior, n_sim, seed, j, d_max) for j in rows]


def build(models: list[ModelSpec] | ModelSpec, N: int, n_sim: int, seed: int,
          model_prior=None, workers: int = 1) -> ReferenceTable:
    """Simulate ``N`` rows and keep those with finite summaries.

    ``workers > 1`` splits rows across processes; output does not depend on it.
    """
    if isinstance(models, ModelSpec):
        models = [models]
    models = list(models)
    if N < 1 or n_sim < 1:
        raise ValueError("N and n_sim must be >= 1")
    M = len(models)
    if model_prior is None:
        model_prior = np.full(M, 1.0 / M)
    model_prior = np.asarray(model_prior, dtype=float)
    if model_prior.shape != (M,) or np.any(model_prior < 0) or abs(model_prior.sum() - 1) > 1e-9:
        raise ValueError("model prior must be M nonnegative probabilities summing to 1")
    names = models[0].summaries
    if any(m.summaries != names for m in models):
        raise ValueError("all candidate models must share the same summary statistics")
    d_max = max(m.d for m in models)

    if workers > 1 and N > 1:
        from joblib import Parallel, delayed
        chunks = np.array_split(np.arange(N), min(N, 4 * workers))
        parts = Parallel(n_jobs=workers)(
            delayed(_simulate_chunk)(models, model_prior, n_sim, seed, c, d_max) for c in chunks)
        results = [r for part in parts for r in part]
    else:
        results = _simulate_chunk(models, model_prior, n_sim, seed, range(N), d_max)

    kept = [r for r in results if r[1] is not None]
    reasons = Counter(r[4] for r in results if r[1] is None)
    if not kept:
        raise ValueError(f"all {N} rows were dropped ({dict(reasons)})")
    meta = {
        "models": [m.to_dict() for m in models],
        "model_prior": model_prior.tolist(),
        "summary_names": list(names),
        "param_names": list(max(models, key=lambda m: m.d).space.names) if M == 1 else
                       [f"theta{k + 1}" for k in range(d_max)],
        "n_sim": int(n_sim),
        "seed": int(seed),
        "n_attempted": int(N),
        "n_dropped": int(N - len(kept)),
        "drop_reasons": dict(sorted(reasons.items())),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return ReferenceTable(
        np.array([r[0] for r in kept]),
        np.vstack([r[1] for r in kept]),
        np.vstack([r[2] for r in kept]),
        np.vstack([r[3] for r in kept]),
        meta,
    )


# --- persistence ----------------------------------------------------------------------------

_FIELDS = (("model", "<i8"), ("theta", "<f8"), ("summaries", "<f8"), ("jitter", "<f8"))


def save(table: ReferenceTable, path) -> None:
    """Versioned binary container: fixed prefix, JSON header, little-endian arrays."""
    header = {
        "meta": table.meta,
        "fields": [{"name": name, "dtype": dt, "shape": list(getattr(table, name).shape)}
                   for name, dt in _FIELDS],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        for name, dt in _FIELDS:
            f.write(np.ascontiguousarray(getattr(table, name), dtype=dt).tobytes())


def load(path) -> ReferenceTable:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ValueError(f"{path}: truncated at byte offset {len(raw)} (file prefix needs {_PREFIX.size} bytes)")
    magic, version, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a reference-table file (bad magic at byte offset 0)")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})")
    pos = _PREFIX.size
    if len(raw) < pos + hlen:
        raise ValueError(f"{path}: truncated at byte offset {len(raw)} inside the header "
                         f"(header ends at {pos + hlen})")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: malformed header at byte offset {pos}: {exc}") from exc
    pos += hlen
    arrays = {}
    for fld in header["fields"]:
        dt = np.dtype(fld["dtype"])
        shape = tuple(fld["shape"])
        nbytes = dt.itemsize * int(np.prod(shape))
        if len(raw) < pos + nbytes:
            raise ValueError(f"{path}: truncated at byte offset {len(raw)} in field "
                             f"{fld['name']!r} (needs bytes {pos}..{pos + nbytes})")
        arrays[fld["name"]] = np.frombuffer(raw, dtype=dt, count=int(np.prod(shape)),
                                            offset=pos).reshape(shape).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} unexpected trailing bytes at byte offset {pos}")
    return ReferenceTable(arrays["model"], arrays["theta"], arrays["summaries"], arrays["jitter"],
                          header["meta"])


def export_csv(table: ReferenceTable, path) -> None:
    """Plain-text copy with 17 significant digits (round-trips doubles)."""
    cols = ["model"] + table.param_names + table.summary_names
    with open(path, "w") as f:
        if "config_hash" in table.meta:
            f.write(f"# config_hash={table.meta['config_hash']}\n")
        f.write(",".join(cols) + "\n")
        for m, t, s in zip(table.model, table.theta, table.summaries):
            f.write(",".join([str(int(m))] + [format(v, ".17g") for v in np.concatenate([t, s])]) + "\n")
