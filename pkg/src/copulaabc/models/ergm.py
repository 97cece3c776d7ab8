"""Edge-toggle Metropolis sampler for binary undirected ERGMs and the g-prior."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .._rng import as_generator, draw_seed, new_state, sm_randint, sm_uniform
from ..netstats import ErgmStatSpec, MPLEDivergenceError, mple, mple_hessian
from ..network import Network
from .priors import MVNormalPrior

_CODES = {"edges": 0, "kstar2": 1, "triangles": 2, "gwdegree": 3, "meandeg": 4}


def encode_spec(spec: ErgmStatSpec):
    codes = np.array([_CODES[t.kind] for t in spec.terms], dtype=np.int64)
    decays = np.array([t.decay if t.decay is not None else 0.0 for t in spec.terms])
    return codes, decays


@nb.njit(cache=True)
def _delta_dot(adj, deg, i, j, codes, decays, theta, n):
    """theta . (g(x with ij on) - g(x with ij off))."""
    e = adj[i, j]
    di = deg[i] - e
    dj = deg[j] - e
    total = 0.0
    for k in range(codes.shape[0]):
        c = codes[k]
        if c == 0:
            d = 1.0
        elif c == 1:
            d = di + dj
        elif c == 2:
            common = 0
            for u in range(n):
                if adj[i, u] and adj[j, u]:
                    common += 1
            d = common
        elif c == 3:
            r = 1.0 - math.exp(-decays[k])
            d = r ** di + r ** dj
        else:
            d = 2.0 / n
        total += theta[k] * d
    return total


@nb.njit(cache=True)
def _ergm_run(adj, deg, codes, decays, theta, n_steps, state):
    n = adj.shape[0]
    accepted = 0
    for _ in range(n_steps):
        i = sm_randint(state, n)
        j = sm_randint(state, n - 1)
        if j >= i:
            j += 1
        s = _delta_dot(adj, deg, i, j, codes, decays, theta, n)
        log_ratio = -s if adj[i, j] else s
        if log_ratio >= 0.0 or sm_uniform(state) < math.exp(log_ratio):
            if adj[i, j]:
                adj[i, j] = 0
                adj[j, i] = 0
                deg[i] -= 1
                deg[j] -= 1
            else:
                adj[i, j] = 1
                adj[j, i] = 1
                deg[i] += 1
                deg[j] += 1
            accepted += 1
    return accepted


def _prepare(theta, spec, n):
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != len(spec):
        raise ValueError("theta length does not match the statistic list")
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite ERGM parameter gives non-finite toggle ratios")
    if n < 3:
        raise ValueError("ERGM simulation needs n >= 3")
    codes, decays = encode_spec(spec)
    return theta, codes, decays


def simulate_ergm(theta, spec: ErgmStatSpec, n: int, burn: int | None = None, rng=None,
                  start: Network | None = None) -> Network:
    """One draw after ``burn`` proposed dyad toggles (default ``20 n^2``).

    The chain starts from ``start`` or the empty graph.  Each proposal picks a
    uniform dyad and flips it with probability ``min(1, exp(+-theta . delta))``.
    """
    theta, codes, decays = _prepare(theta, spec, n)
    burn = 20 * n * n if burn is None else int(burn)
    if burn < 1:
        raise ValueError("burn must be >= 1")
    adj = start.adjacency_matrix().astype(np.uint8) if start is not None else np.zeros((n, n), np.uint8)
    deg = adj.sum(axis=1).astype(np.int64)
    state = new_state(draw_seed(as_generator(rng)))
    _ergm_run(adj, deg, codes, decays, theta, burn, state)
    return Network.from_adjacency(adj)


def ergm_edge_trace(theta, spec: ErgmStatSpec, n: int, burn: int, n_samples: int,
                    interval: int, rng=None) -> np.ndarray:
    """Edge counts of ``n_samples`` snapshots taken every ``interval`` toggles after burn-in."""
    theta, codes, decays = _prepare(theta, spec, n)
    adj = np.zeros((n, n), np.uint8)
    deg = np.zeros(n, np.int64)
    state = new_state(draw_seed(as_generator(rng)))
    _ergm_run(adj, deg, codes, decays, theta, int(burn), state)
    out = np.empty(n_samples, dtype=np.int64)
    for s in range(n_samples):
        _ergm_run(adj, deg, codes, decays, theta, int(interval), state)
        out[s] = deg.sum() // 2
    return out


def toggle_log_ratio(net: Network, dyad, theta, spec: ErgmStatSpec) -> float:
    """Log Metropolis ratio for flipping ``dyad`` in ``net`` (as used by the sampler)."""
    theta, codes, decays = _prepare(theta, spec, net.n)
    adj = net.adjacency_matrix().astype(np.uint8)
    deg = adj.sum(axis=1).astype(np.int64)
    i, j = int(dyad[0]), int(dyad[1])
    s = _delta_dot(adj, deg, i, j, codes, decays, theta, net.n)
    return float(-s if adj[i, j] else s)


def build_g_prior(net: Network, spec: ErgmStatSpec, g: float) -> MVNormalPrior:
    """Zero-mean normal prior with covariance ``g * (-H)^-1`` at the (offset-free) MPLE."""
    if not g > 0:
        raise ValueError("g must be positive")
    beta = mple(net, spec, offset_coef=0.0)
    neg_h = -mple_hessian(net, spec, beta, offset_coef=0.0)
    eig = np.linalg.eigvalsh(neg_h)
    if not eig.min() > 0:
        raise MPLEDivergenceError("pseudo-likelihood Hessian is not negative definite")
    cov = g * np.linalg.inv(neg_h)
    return MVNormalPrior(np.zeros(len(spec)), 0.5 * (cov + cov.T))
