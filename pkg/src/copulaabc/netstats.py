"""Network summary statistics, ERGM change statistics and offset MPLE.

The statistics here are the size-comparable (UNC) summaries fed to the ABC
reference table.  ``mple`` fits the dyadic logistic pseudo-likelihood with a
fixed edge-count offset ``log(1/n)``, which makes the coefficients comparable
between networks of different sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, minimize_scalar
from scipy.sparse.csgraph import shortest_path

from .network import Network

GW_DECAY_DEFAULT = math.log(1.5)
MPLE_MAX_ABS = 25.0
MPLE_MAX_STEPS = 50

TERM_KINDS = ("edges", "kstar2", "triangles", "gwdegree", "meandeg")


class MPLEDivergenceError(ValueError):
    """The pseudo-likelihood has no finite maximiser (separation or a singular design)."""


# --- term specification ---------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    kind: str
    decay: float | None = None

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise ValueError(f"unknown ERGM term {self.kind!r}; choose from {TERM_KINDS}")
        if self.kind == "gwdegree":
            if self.decay is None:
                object.__setattr__(self, "decay", GW_DECAY_DEFAULT)
            if not self.decay > 0:
                raise ValueError("gwdegree decay must be positive")

    @property
    def label(self) -> str:
        return f"gwdegree({self.decay:g})" if self.kind == "gwdegree" else self.kind


@dataclass(frozen=True)
class ErgmStatSpec:
    terms: tuple[Term, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("ERGM statistic list must be nonempty")

    @classmethod
    def of(cls, *kinds) -> "ErgmStatSpec":
        """``ErgmStatSpec.of("kstar2", "triangles")`` or with ``Term`` objects."""
        return cls(tuple(k if isinstance(k, Term) else Term(k) for k in kinds))

    def __len__(self):
        return len(self.terms)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]


class ChangeStats(NamedTuple):
    stats: np.ndarray   # g(x+) - g(x-) per term
    edges: float        # edge-count offset component, always 1


# --- degree and density summaries ---------------------------------------------------

def degree_summaries(net: Network) -> tuple[float, float, float, float]:
    """Population mean and variance of the in- and out-degree sequences."""
    din = net.in_degree().astype(float)
    dout = net.out_degree().astype(float)
    return float(din.mean()), float(din.var()), float(dout.mean()), float(dout.var())


def density_from_counts(n: int, n_edges: int, directed: bool = False) -> float:
    pairs = n * (n - 1) if directed else n * (n - 1) / 2
    return n_edges / pairs


def density(net: Network) -> float:
    if net.n < 2:
        raise ValueError("density needs n >= 2")
    return density_from_counts(net.n, net.n_edges, net.directed)


def reciprocity(net: Network) -> float:
    """Fraction of directed edges whose reverse is present (1 for undirected graphs)."""
    if not net.directed:
        return 1.0
    if net.n_edges == 0:
        return 0.0
    fwd = {(int(u), int(v)) for u, v in net.edges}
    mutual = sum((v, u) in fwd for u, v in fwd)
    return mutual / len(fwd)


def _sparse_adj(net: Network) -> sp.csr_matrix:
    ptr, idx = net.csr()
    return sp.csr_matrix((np.ones(len(idx)), idx, ptr), shape=(net.n, net.n))


def _path_lengths(net: Network) -> np.ndarray:
    d = shortest_path(_sparse_adj(net), directed=net.directed, unweighted=True)
    np.fill_diagonal(d, np.inf)
    return d


def mean_path(net: Network) -> float:
    """Mean shortest-path length over ordered reachable pairs.

    This is the quantity used as the "diameter" summary in the ABC presets.
    """
    d = _path_lengths(net)
    finite = d[np.isfinite(d)]
    if finite.size == 0:
        raise ValueError("no reachable node pairs")
    return float(finite.mean())


diameter = mean_path


def max_eccentricity(net: Network) -> float:
    """Conventional diameter: the longest finite shortest path."""
    d = _path_lengths(net)
    finite = d[np.isfinite(d)]
    if finite.size == 0:
        raise ValueError("no reachable node pairs")
    return float(finite.max())


# --- subgraph counts and clustering -----------------------------------------------------

def _require_undirected(net: Network, what: str):
    if net.directed:
        raise ValueError(f"{what} is defined for undirected networks only")


def _node_triangles(net: Network) -> np.ndarray:
    a = _sparse_adj(net)
    return np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0


def count_kstar2(net: Network) -> int:
    _require_undirected(net, "kstar2")
    d = net.degree().astype(np.int64)
    return int((d * (d - 1) // 2).sum())


def count_triangles(net: Network) -> int:
    _require_undirected(net, "triangle count")
    return int(round(_node_triangles(net).sum() / 3.0))


def gw_degree(net: Network, decay: float = GW_DECAY_DEFAULT) -> float:
    """Geometrically weighted degree ``e^a * sum_v (1 - (1 - e^-a)^deg(v))``."""
    _require_undirected(net, "gwdegree")
    r = 1.0 - math.exp(-decay)
    d = net.degree().astype(float)
    return float(math.exp(decay) * np.sum(1.0 - r ** d))


def clustering_global(net: Network) -> float:
    _require_undirected(net, "clustering")
    k2 = count_kstar2(net)
    return 0.0 if k2 == 0 else 3.0 * count_triangles(net) / k2


def clustering_avg_local(net: Network) -> float:
    """Mean local transitivity; nodes of degree < 2 contribute 0."""
    _require_undirected(net, "clustering")
    d = net.degree().astype(float)
    t = _node_triangles(net)
    pairs = d * (d - 1) / 2.0
    local = np.divide(t, pairs, out=np.zeros_like(t), where=pairs > 0)
    return float(local.mean())


def assortativity_degree(net: Network) -> float:
    """Pearson correlation of endpoint degrees; NaN when it is undefined."""
    if net.n_edges == 0:
        return float("nan")
    e = net.edges
    if net.directed:
        x = net.out_degree()[e[:, 0]].astype(float)
        y = net.in_degree()[e[:, 1]].astype(float)
    else:
        d = net.degree().astype(float)
        x = np.concatenate([d[e[:, 0]], d[e[:, 1]]])
        y = np.concatenate([d[e[:, 1]], d[e[:, 0]]])
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return float("nan")
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


# --- ERGM statistics ------------------------------------------------------------------------

def global_stats(net: Network, spec: ErgmStatSpec) -> np.ndarray:
    out = np.empty(len(spec))
    for k, term in enumerate(spec.terms):
        if term.kind == "edges":
            out[k] = net.n_edges
        elif term.kind == "meandeg":
            out[k] = (1 if net.directed else 2) * net.n_edges / net.n
        elif term.kind == "kstar2":
            out[k] = count_kstar2(net)
        elif term.kind == "triangles":
            out[k] = count_triangles(net)
        else:
            out[k] = gw_degree(net, term.decay)
    return out


def change_stats(net: Network, dyad: tuple[int, int], spec: ErgmStatSpec) -> ChangeStats:
    """``g(x with dyad on) - g(x with dyad off)``, computed from the two neighbourhoods."""
    i, j = int(dyad[0]), int(dyad[1])
    if i == j:
        raise ValueError("dyad endpoints must differ")
    out = np.empty(len(spec))
    if net.directed:
        for k, term in enumerate(spec.terms):
            if term.kind == "edges":
                out[k] = 1.0
            elif term.kind == "meandeg":
                out[k] = 1.0 / net.n
            else:
                raise ValueError(f"{term.kind} change statistics need an undirected network")
        return ChangeStats(out, 1.0)
    ni, nj = net.neighbors(i), net.neighbors(j)
    di = len(ni) - int(j in set(ni.tolist()))
    dj = len(nj) - int(i in set(nj.tolist()))
    for k, term in enumerate(spec.terms):
        if term.kind == "edges":
            out[k] = 1.0
        elif term.kind == "meandeg":
            out[k] = 2.0 / net.n
        elif term.kind == "kstar2":
            out[k] = di + dj
        elif term.kind == "triangles":
            out[k] = len(np.intersect1d(ni, nj, assume_unique=True))
        else:
            r = 1.0 - math.exp(-term.decay)
            out[k] = r ** di + r ** dj
    return ChangeStats(out, 1.0)


def dyad_design(net: Network, spec: ErgmStatSpec):
    """Change-statistic design over all dyads.

    Returns ``(X, y)`` with one row per dyad (``i < j`` when undirected, all
    ordered pairs when directed) and ``y`` the observed tie indicator.
    """
    n = net.n
    a = net.adjacency_matrix()
    if net.directed:
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    else:
        ii, jj = np.triu_indices(n, 1)
    y = a[ii, jj].astype(float)
    cols = []
    if not net.directed:
        af = a.astype(float)
        deg = af.sum(axis=1)
        di = deg[ii] - y
        dj = deg[jj] - y
    for term in spec.terms:
        if term.kind == "edges":
            cols.append(np.ones(len(ii)))
        elif term.kind == "meandeg":
            cols.append(np.full(len(ii), (1.0 if net.directed else 2.0) / n))
        elif net.directed:
            raise ValueError(f"{term.kind} change statistics need an undirected network")
        elif term.kind == "kstar2":
            cols.append(di + dj)
        elif term.kind == "triangles":
            common = af @ af
            cols.append(common[ii, jj])
        else:
            r = 1.0 - math.exp(-term.decay)
            cols.append(r ** di + r ** dj)
    return np.column_stack(cols), y


# --- maximum pseudo-likelihood -----------------------------------------------------

def _log1pexp(z):
    return np.logaddexp(0.0, z)


def pseudo_loglik(beta, X, y, offset) -> float:
    eta = X @ np.asarray(beta, dtype=float) + offset
    return float(np.sum(y * eta - _log1pexp(eta)))


def pseudo_grad_hess(beta, X, y, offset):
    eta = X @ beta + offset
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))
    grad = X.T @ (y - p)
    hess = -(X * (p * (1.0 - p))[:, None]).T @ X
    return grad, hess


def newton_logistic(X, y, offset, max_abs=MPLE_MAX_ABS, max_steps=MPLE_MAX_STEPS, gtol=1e-10):
    """Damped Newton ascent on the logistic log-likelihood with fixed offset."""
    beta = np.zeros(X.shape[1])
    ll = pseudo_loglik(beta, X, y, offset)
    for _ in range(max_steps):
        grad, hess = pseudo_grad_hess(beta, X, y, offset)
        if np.max(np.abs(grad)) < gtol:
            return _check_interior(beta, X, y, offset)
        neg_h = -hess
        try:
            eig_min = np.linalg.eigvalsh(neg_h).min()
        except np.linalg.LinAlgError as exc:
            raise MPLEDivergenceError("pseudo-likelihood Hessian is not finite") from exc
        if not eig_min > 1e-12 * max(1.0, np.abs(neg_h).max()):
            raise MPLEDivergenceError("singular pseudo-likelihood Hessian")
        step = np.linalg.solve(neg_h, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_c = pseudo_loglik(cand, X, y, offset)
            if ll_c >= ll - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        beta, ll = cand, ll_c
        if np.max(np.abs(beta)) > max_abs:
            raise MPLEDivergenceError("MPLE diverges (perfect or quasi separation)")
    grad, _ = pseudo_grad_hess(beta, X, y, offset)
    if np.max(np.abs(grad)) < 1e-8:
        return _check_interior(beta, X, y, offset)
    raise MPLEDivergenceError("Newton iterations did not converge")


def _check_interior(beta, X, y, offset):
    """Reject a flat-gradient stop that is really a drift towards infinity."""
    eta = X @ beta + offset
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))
    if np.any(np.abs(y - p) < 1e-8) and is_separated(X, y):
        raise MPLEDivergenceError("MPLE diverges (quasi-complete separation)")
    return beta


def is_separated(X, y, tol: float = 1e-9) -> bool:
    """True when some direction ``d`` has ``(2y-1) * X d >= 0`` on every row, strictly on one.

    Along such a direction the logistic likelihood never decreases, so no finite
    maximiser exists (complete or quasi-complete separation).  Solved as a
    bounded linear program.
    """
    s = (2.0 * np.asarray(y, float) - 1.0)[:, None] * np.asarray(X, float)
    scale = np.maximum(np.abs(s).max(axis=0), 1e-300)
    s = s / scale
    res = linprog(-s.sum(axis=0), A_ub=-s, b_ub=np.zeros(len(s)), bounds=[(-1, 1)] * s.shape[1],
                  method="highs")
    return bool(res.status == 0 and -res.fun > tol)


def mple(net: Network, spec: ErgmStatSpec, offset_coef: float | None = None) -> np.ndarray:
    """Offset MPLE of the term coefficients.

    ``offset_coef`` multiplies the edge-count change (always 1); it defaults to
    ``log(1/n)`` and is held fixed, not estimated.  Raises
    ``MPLEDivergenceError`` when no finite maximiser exists.
    """
    if offset_coef is None:
        offset_coef = math.log(1.0 / net.n)
    X, y = dyad_design(net, spec)
    if len(y) == 0:
        raise MPLEDivergenceError("network has no dyads")
    return newton_logistic(X, y, np.full(len(y), offset_coef))


def mple_hessian(net: Network, spec: ErgmStatSpec, beta, offset_coef: float = 0.0) -> np.ndarray:
    X, y = dyad_design(net, spec)
    _, hess = pseudo_grad_hess(np.asarray(beta, float), X, y, np.full(len(y), offset_coef))
    return hess


def mple_gwdegree_profile(net: Network, offset_coef: float | None = None,
                          decay_bounds: tuple[float, float] = (0.05, 5.0)) -> tuple[float, float]:
    """Offset MPLE of the gwdegree coefficient with its decay profiled out.

    Returns ``(coefficient, decay)``.  The decay maximises the profile
    pseudo-likelihood over ``decay_bounds`` (bounded Brent search on a
    smooth one-dimensional objective).
    """
    _require_undirected(net, "gwdegree MPLE")
    if offset_coef is None:
        offset_coef = math.log(1.0 / net.n)
    a = net.adjacency_matrix()
    ii, jj = np.triu_indices(net.n, 1)
    y = a[ii, jj].astype(float)
    deg = a.sum(axis=1).astype(float)
    di, dj = deg[ii] - y, deg[jj] - y
    off = np.full(len(y), offset_coef)
    fits = {}

    def negprof(decay):
        r = 1.0 - math.exp(-decay)
        X = (r ** di + r ** dj)[:, None]
        try:
            b = newton_logistic(X, y, off)
        except MPLEDivergenceError:
            return np.inf
        fits[decay] = b[0]
        return -pseudo_loglik(b, X, y, off)

    res = minimize_scalar(negprof, bounds=decay_bounds, method="bounded", options={"xatol": 1e-5})
    if not np.isfinite(res.fun) or res.x not in fits:
        raise MPLEDivergenceError("gwdegree MPLE diverges for every decay")
    return float(fits[res.x]), float(res.x)


def offset_mple(net: Network, kind: str, decay: float | None = None) -> float:
    """Single-term offset MPLE, the per-statistic summary used in reference tables."""
    return float(mple(net, ErgmStatSpec((Term(kind, decay),)))[0])


def mple_grid_oracle(X, y, offset, lo=-5.0, hi=5.0, coarse=1e-2, refine=(1e-3, 1e-5)):
    """Brute-force maximiser of the 2-term pseudo-likelihood on nested grids.

    Returns ``(beta, on_boundary)``.  Used only as an independent check of
    ``newton_logistic``.
    """
    def evaluate(g1, g2):
        b1, b2 = np.meshgrid(g1, g2, indexing="ij")
        eta = b1[..., None] * X[:, 0] + b2[..., None] * X[:, 1] + offset
        ll = np.sum(y * eta - _log1pexp(eta), axis=-1)
        k = np.unravel_index(np.argmax(ll), ll.shape)
        return np.array([g1[k[0]], g2[k[1]]])

    g = np.arange(lo, hi + coarse / 2, coarse)
    best = evaluate(g, g)
    step = coarse
    for fine in refine:
        half = 5 * step
        g1 = np.arange(max(lo, best[0] - half), min(hi, best[0] + half) + fine / 2, fine)
        g2 = np.arange(max(lo, best[1] - half), min(hi, best[1] + half) + fine / 2, fine)
        best = evaluate(g1, g2)
        step = fine
    on_boundary = bool(np.any(np.abs(best - lo) < 2 * coarse) or np.any(np.abs(best - hi) < 2 * coarse))
    return best, on_boundary


def parse_joint_mple(name: str) -> tuple[ErgmStatSpec, int] | None:
    """``"mple:kstar2+triangles:1"`` -> (spec of both terms, component 1).

    A term may carry a decay as ``gwdegree@0.405``.
    """
    if not name.startswith("mple:"):
        return None
    try:
        _, terms, k = name.split(":")
        parsed = []
        for t in terms.split("+"):
            kind, _, decay = t.partition("@")
            parsed.append(Term(kind, float(decay) if decay else None))
        spec, k = ErgmStatSpec(tuple(parsed)), int(k)
    except ValueError as exc:
        raise ValueError(f"malformed joint MPLE summary name {name!r}") from exc
    if not 0 <= k < len(spec):
        raise ValueError(f"component index out of range in {name!r}")
    return spec, k


def check_summary_names(names: Sequence[str]) -> None:
    for name in names:
        if name not in SUMMARY_FUNCTIONS and parse_joint_mple(name) is None:
            raise ValueError(f"unknown network summary {name!r}")


def stats_by_name(net: Network, names: Sequence[str]) -> np.ndarray:
    """Evaluate named summaries.

    Plain names index ``SUMMARY_FUNCTIONS``.  ``mple:<t1>+<t2>:<k>`` is the
    k-th coefficient of one joint offset MPLE over the listed terms, computed
    on the undirected projection; repeated specs are fitted once.
    """
    fits = {}
    out = np.empty(len(names))
    for i, name in enumerate(names):
        joint = parse_joint_mple(name)
        if joint is None:
            out[i] = SUMMARY_FUNCTIONS[name](net)
            continue
        spec, k = joint
        if spec not in fits:
            fits[spec] = mple(net.to_undirected(), spec)
        out[i] = fits[spec][k]
    return out


def _und(fn):
    return lambda net: fn(net.to_undirected())


def _gw_profile_coef(net):
    return mple_gwdegree_profile(net.to_undirected())[0]


def _gw_profile_decay(net):
    return mple_gwdegree_profile(net.to_undirected())[1]


def _mean_degree(net):
    return degree_summaries(net.to_undirected())[0]


def _var_degree(net):
    return degree_summaries(net.to_undirected())[1]


def _var_indegree(net):
    return degree_summaries(net)[1]


def _isolated_fraction(net):
    return float(np.mean(net.to_undirected().degree() == 0))


SUMMARY_FUNCTIONS = {
    "density": _und(density),
    "clustering_global": _und(clustering_global),
    "clustering_avg_local": _und(clustering_avg_local),
    "assortativity": _und(assortativity_degree),
    "mean_path": _und(mean_path),
    "max_eccentricity": _und(max_eccentricity),
    "mean_degree": _mean_degree,
    "var_degree": _var_degree,
    "var_indegree": _var_indegree,
    "isolated_fraction": _isolated_fraction,
    "mple_kstar2": _und(lambda net: offset_mple(net, "kstar2")),
    "mple_triangles": _und(lambda net: offset_mple(net, "triangles")),
    "mple_meandeg": _und(lambda net: offset_mple(net, "meandeg")),
    "mple_gwdegree": _und(lambda net: offset_mple(net, "gwdegree")),
    "mple_gwdegree_profile": _gw_profile_coef,
    "gwdegree_decay": _gw_profile_decay,
}
