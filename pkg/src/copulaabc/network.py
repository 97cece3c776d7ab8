"""Binary network storage with CSR neighbour lists, plus edge-list file IO."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Network:
    """A simple binary graph on nodes ``0..n-1``.

    Edges are stored canonically: sorted ``(u, v)`` rows, with ``u < v`` when
    undirected.  Neighbour lists are CSR arrays built once at construction, so
    iterating over a node's neighbours costs O(deg).
    """

    n: int
    edges: np.ndarray
    directed: bool = False
    _out_ptr: np.ndarray = field(init=False, repr=False)
    _out_idx: np.ndarray = field(init=False, repr=False)
    _in_ptr: np.ndarray = field(init=False, repr=False)
    _in_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("network needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ValueError("edge endpoint outside 0..n-1")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
        if not self.directed:
            e = np.sort(e, axis=1)
        if e.size:
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("duplicate edges")
        e.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", e)
        if self.directed:
            out_ptr, out_idx = _csr(n, e[:, 0], e[:, 1])
            in_ptr, in_idx = _csr(n, e[:, 1], e[:, 0])
        else:
            src = np.concatenate([e[:, 0], e[:, 1]])
            dst = np.concatenate([e[:, 1], e[:, 0]])
            out_ptr, out_idx = _csr(n, src, dst)
            in_ptr, in_idx = out_ptr, out_idx
        object.__setattr__(self, "_out_ptr", out_ptr)
        object.__setattr__(self, "_out_idx", out_idx)
        object.__setattr__(self, "_in_ptr", in_ptr)
        object.__setattr__(self, "_in_idx", in_idx)

    # --- construction helpers -------------------------------------------------

    @classmethod
    def from_adjacency(cls, adj, directed: bool = False) -> "Network":
        a = np.asarray(adj).astype(bool)
        if not directed:
            a = np.triu(a | a.T, 1)
        else:
            a = a.copy()
            np.fill_diagonal(a, False)
        return cls(a.shape[0], np.argwhere(a), directed)

    @classmethod
    def empty(cls, n: int, directed: bool = False) -> "Network":
        return cls(n, np.zeros((0, 2), dtype=np.int64), directed)

    # --- queries --------------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        """Out-neighbours (all neighbours when undirected), sorted."""
        return self._out_idx[self._out_ptr[i]:self._out_ptr[i + 1]]

    def predecessors(self, i: int) -> np.ndarray:
        return self._in_idx[self._in_ptr[i]:self._in_ptr[i + 1]]

    def out_degree(self) -> np.ndarray:
        return np.diff(self._out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self._in_ptr)

    def degree(self) -> np.ndarray:
        if self.directed:
            return self.out_degree() + self.in_degree()
        return self.out_degree()

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        if self.n_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = True
            if not self.directed:
                a[self.edges[:, 1], self.edges[:, 0]] = True
        return a

    def csr(self):
        """``(indptr, indices)`` of the out-neighbour lists."""
        return self._out_ptr, self._out_idx

    def to_undirected(self) -> "Network":
        if not self.directed:
            return self
        e = np.unique(np.sort(self.edges, axis=1), axis=0)
        return Network(self.n, e, directed=False)

    def relabel(self, perm) -> "Network":
        """Network with node ``i`` renamed ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Network(self.n, perm[self.edges], self.directed)

    def with_edge(self, i: int, j: int, present: bool) -> "Network":
        """Copy with dyad (i, j) forced on or off."""
        e = self.edges
        key = (min(i, j), max(i, j)) if not self.directed else (i, j)
        mask = ~((e[:, 0] == key[0]) & (e[:, 1] == key[1]))
        e = e[mask]
        if present:
            e = np.vstack([e, np.array([key], dtype=np.int64)])
        return Network(self.n, e, self.directed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (self.n == other.n and self.directed == other.directed
                and np.array_equal(self.edges, other.edges))

    def __hash__(self):
        return hash((self.n, self.directed, self.edges.tobytes()))


def _csr(n, src, dst):
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), dst.astype(np.int64)


def from_neighbor_sets(adj: list[set[int]], directed: bool = False) -> Network:
    """Freeze a growing adjacency (list of neighbour sets) into a Network."""
    edges = [(u, v) for u, nbrs in enumerate(adj) for v in nbrs if directed or u < v]
    return Network(len(adj), np.array(edges, dtype=np.int64).reshape(-1, 2), directed)


# --- edge-list files -------------------------------------------------------------

def write_edgelist(net: Network, path) -> None:
    """One ``u v`` pair per line, 0-based; a leading ``# n <count>`` line keeps isolated nodes."""
    lines = [f"# n {net.n}"]
    lines += [f"{u} {v}" for u, v in net.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path, directed: bool = False, n: int | None = None) -> Network:
    edges = []
    n_header = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "n":
                n_header = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-integer node id in {raw!r}") from exc
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = n_header if n_header is not None else (int(e.max()) + 1 if e.size else 1)
    if not directed and e.size:
        e = np.unique(np.sort(e, axis=1), axis=0)
    return Network(n, e, directed)
