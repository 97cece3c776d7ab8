"""Distributional random forest: training, test-point weights, importance."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .._rng import child_seed
from ._tree import build_tree, find_leaf, forest_weights

FOREST_MAGIC = b"CABCRF"
FOREST_VERSION = 1
_PREFIX = struct.Struct("<6sHI")


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``mtry=None`` means ``ceil(sqrt(p))``.  The Gaussian-kernel bandwidth is the
    median pairwise response distance within each tree's subsample, and the
    kernel is approximated by ``n_features`` random Fourier features per tree.
    """

    n_trees: int = 2000
    sample_fraction: float = 0.5
    min_leaf: int = 5
    mtry: int | None = None
    n_features: int = 50
    max_candidates: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.min_leaf < 1 or self.n_features < 1 or self.max_candidates < 1:
            raise ValueError("min_leaf, n_features and max_candidates must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def mtry_for(self, p: int) -> int:
        return min(p, self.mtry if self.mtry is not None else math.ceil(math.sqrt(p)))


@dataclass(eq=False)
class Forest:
    """Flat storage for ``B`` trees.

    Tree ``b`` owns nodes ``node_off[b]:node_off[b+1]`` (child indices are
    local to the tree) and in-bag rows ``leaf_rows[row_off[b]:row_off[b+1]]``;
    a leaf's rows are the slice ``[start, end)`` of its tree's block.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    node_off: np.ndarray
    leaf_rows: np.ndarray
    row_off: np.ndarray
    importance_raw: np.ndarray
    n_train: int
    config: ForestConfig

    @property
    def n_trees(self) -> int:
        return len(self.node_off) - 1

    @property
    def p(self) -> int:
        return len(self.importance_raw)

    def weights(self, s) -> np.ndarray:
        """Weight vector over training rows for one test point."""
        return self.weights_many(np.atleast_2d(s))[0]

    def weights_many(self, S) -> np.ndarray:
        S = np.ascontiguousarray(np.atleast_2d(S), dtype=np.float64)
        if S.shape[1] != self.p:
            raise ValueError(f"test points need {self.p} covariates")
        if not np.all(np.isfinite(S)):
            raise ValueError("test point has non-finite covariates")
        return forest_weights(self.feature, self.threshold, self.left, self.right, self.start,
                              self.end, self.node_off, self.leaf_rows, self.row_off, S, self.n_train)

    def leaf_rows_of(self, b: int, s) -> np.ndarray:
        """In-bag rows sharing a leaf with ``s`` in tree ``b``."""
        s = np.asarray(s, dtype=float)
        leaf = find_leaf(self.feature, self.threshold, self.left, self.right, self.node_off[b], s)
        block = self.leaf_rows[self.row_off[b]:self.row_off[b + 1]]
        return block[self.start[leaf]:self.end[leaf]]

    def importance(self) -> np.ndarray:
        """Split-frequency importance weighted by node size, normalized to sum to 1."""
        tot = self.importance_raw.sum()
        if tot <= 0:
            return np.full(self.p, 1.0 / self.p)
        return self.importance_raw / tot

    def tree(self, b: int) -> dict:
        sl = slice(self.node_off[b], self.node_off[b + 1])
        return {
            "feature": self.feature[sl], "threshold": self.threshold[sl],
            "left": self.left[sl], "right": self.right[sl],
            "start": self.start[sl], "end": self.end[sl],
            "rows": self.leaf_rows[self.row_off[b]:self.row_off[b + 1]],
        }


def _as_response(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def one_hot(labels, M: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    M = int(labels.max()) + 1 if M is None else M
    out = np.zeros((len(labels), M))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _grow(X, Y, n_sub, mtry, cfg, trees):
    return [build_tree(X, Y, n_sub, mtry, cfg.min_leaf, cfg.n_features, cfg.max_candidates,
                       np.uint64(child_seed(cfg.seed, b))) for b in trees]


def train(X, y, cfg: ForestConfig = ForestConfig(), workers: int = 1) -> Forest:
    """Fit a forest of MMD-split trees regressing ``y`` (vector or matrix) on ``X``.

    Tree ``b`` is seeded from ``(cfg.seed, b)`` alone, so the result does not
    depend on ``workers`` (trees are built in threads; the kernel releases the GIL).
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.shape[0] == 1 and np.ndim(y) == 1 and len(y) != 1:
        X = X.T
    Y = np.ascontiguousarray(_as_response(y))
    N, p = X.shape
    if Y.shape[0] != N:
        raise ValueError("X and y have different numbers of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("training data must be finite")
    if N < 2 * cfg.min_leaf:
        raise ValueError(f"need at least {2 * cfg.min_leaf} rows for min_leaf={cfg.min_leaf}")
    n_sub = max(1, int(math.floor(cfg.sample_fraction * N)))
    mtry = cfg.mtry_for(p)
    trees = range(cfg.n_trees)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        chunks = [list(c) for c in np.array_split(np.arange(cfg.n_trees), workers) if len(c)]
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda c: _grow(X, Y, n_sub, mtry, cfg, c), chunks))
        built = [t for part in parts for t in part]
    else:
        built = _grow(X, Y, n_sub, mtry, cfg, trees)
    return _assemble(built, N, cfg)


def _assemble(built, N, cfg) -> Forest:
    sizes = np.array([len(t[0]) for t in built])
    rsizes = np.array([len(t[6]) for t in built])
    node_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    row_off = np.concatenate([[0], np.cumsum(rsizes)]).astype(np.int64)
    cat = [np.concatenate([t[k] for t in built]) for k in range(7)]
    imp = np.sum([t[7] for t in built], axis=0)
    return Forest(cat[0], cat[1], cat[2], cat[3], cat[4], cat[5], node_off, cat[6], row_off,
                  imp, int(N), cfg)


def drf_weights(forest: Forest, s_test) -> np.ndarray:
    return forest.weights(s_test)


# --- persistence -------------------------------------------------------------------------------

_ARRAYS = ("feature", "threshold", "left", "right", "start", "end", "node_off", "leaf_rows",
           "row_off", "importance_raw")


def save_forest(forest: Forest, path) -> None:
    header = {"n_train": forest.n_train, "config": asdict(forest.config),
              "arrays": [{"name": a, "dtype": getattr(forest, a).dtype.newbyteorder("<").str,
                          "shape": list(getattr(forest, a).shape)} for a in _ARRAYS]}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(FOREST_MAGIC, FOREST_VERSION, len(hb)))
        f.write(hb)
        for a in _ARRAYS:
            arr = getattr(forest, a)
            f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_forest(path) -> Forest:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ValueError(f"{path}: truncated at byte offset {len(raw)}")
    magic, version, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != FOREST_MAGIC or version != FOREST_VERSION:
        raise ValueError(f"{path}: not a version-{FOREST_VERSION} forest file")
    pos = _PREFIX.size
    header = json.loads(raw[pos:pos + hlen])
    pos += hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"]))
        if len(raw) < pos + count * dt.itemsize:
            raise ValueError(f"{path}: truncated at byte offset {len(raw)} in array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(raw, dt, count, pos).astype(dt.newbyteorder("="))
        pos += count * dt.itemsize
    return Forest(**arrays, n_train=header["n_train"], config=ForestConfig(**header["config"]))
