"""Growth simulators for mechanistic network models.

All kernels are numba-compiled and draw from a splitmix64 stream seeded by a
single integer, so a grown network is a pure function of its parameters and
seed.  Adjacency is kept as a dense ``uint8`` matrix while growing; the sizes
used for ABC simulation (tens to a few hundred nodes) make this the cheapest
representation.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .._rng import as_generator, draw_seed, new_state, sm_uniform, sm_randint
from ..network import Network

NLPA_ZERO_DEGREE_WEIGHT = 1e-12


@nb.njit(cache=True)
def _binomial(n, p, state):
    m = 0
    for _ in range(n):
        if sm_uniform(state) < p:
            m += 1
    return m


@nb.njit(cache=True)
def _truncated_binomial(n, p, state):
    """Binomial(n, p) conditioned on being >= 1, by inversion of the normalized pmf."""
    if p <= 0.0:
        return 1
    if p >= 1.0:
        return n
    logp, log1mp = math.log(p), math.log1p(-p)
    pmf = np.empty(n)
    for k in range(1, n + 1):
        pmf[k - 1] = math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                              + k * logp + (n - k) * log1mp)
    total = pmf.sum()
    if total <= 0.0:
        return 1
    u = sm_uniform(state) * total
    acc = 0.0
    for k in range(n):
        acc += pmf[k]
        if u < acc:
            return k + 1
    return n


@nb.njit(cache=True)
def _weighted_pick(w, active, n_active, state):
    """Index drawn proportional to ``w`` among ``active[:n_active]``; returns the slot."""
    total = 0.0
    for s in range(n_active):
        total += w[active[s]]
    u = sm_uniform(state) * total
    acc = 0.0
    for s in range(n_active):
        acc += w[active[s]]
        if u < acc:
            return s
    return n_active - 1


@nb.njit(cache=True)
def _price_kernel(k0, p, n, n0, state):
    adj = np.zeros((n, n), dtype=np.uint8)
    indeg = np.zeros(n, dtype=np.float64)
    w = np.empty(n)
    active = np.empty(n, dtype=np.int64)
    for j in range(1, n):
        m = min(_binomial(n0, p, state), j)
        if m == 0:
            continue
        for i in range(j):
            w[i] = k0 + indeg[i]
            active[i] = i
        total = 0.0
        for i in range(j):
            total += w[i]
        if not total > 0.0:
            return adj, False
        n_active = j
        for _ in range(m):
            s = _weighted_pick(w, active, n_active, state)
            tgt = active[s]
            adj[j, tgt] = 1
            active[s] = active[n_active - 1]
            n_active -= 1
        for i in range(j):
            if adj[j, i]:
                indeg[i] += 1.0
    return adj, True


def grow_price(k0: float, p: float, n: int, n0: int, rng) -> Network:
    """Directed citation network; new node ``j`` cites ``min(Bin(n0, p), j)`` earlier nodes.

    Targets are drawn without replacement with probability proportional to
    ``k0 + indegree``.  Edges always point from the newer to the older node.
    """
    if n < 2 or n0 < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("grow_price needs n >= 2, n0 >= 1 and 0 <= p <= 1")
    state = new_state(draw_seed(as_generator(rng)))
    adj, ok = _price_kernel(float(k0), float(p), int(n), int(n0), state)
    if not ok:
        raise ValueError("attachment weights k0 + indegree are not positive; distribution undefined")
    return Network.from_adjacency(adj, directed=True)


@nb.njit(cache=True)
def _nlpa_kernel(alpha, p, n, n0, state):
    adj = np.zeros((n, n), dtype=np.uint8)
    deg = np.zeros(n, dtype=np.int64)
    w = np.empty(n)
    active = np.empty(n, dtype=np.int64)
    for j in range(1, n):
        m = min(_truncated_binomial(n0, p, state), j)
        for i in range(j):
            w[i] = deg[i] ** alpha if deg[i] > 0 else 1e-12
            active[i] = i
        n_active = j
        for _ in range(m):
            s = _weighted_pick(w, active, n_active, state)
            tgt = active[s]
            adj[j, tgt] = 1
            adj[tgt, j] = 1
            active[s] = active[n_active - 1]
            n_active -= 1
        for i in range(j):
            if adj[j, i]:
                deg[i] += 1
                deg[j] += 1
    return adj


def grow_nlpa(alpha: float, p: float, n: int, n0: int, rng) -> Network:
    """Undirected nonlinear preferential attachment.

    Each new node links to ``m >= 1`` distinct existing nodes, ``m`` drawn from
    Binomial(n0, p) truncated to positive counts and capped by the number of
    existing nodes; targets are chosen with probability proportional to
    ``degree ** alpha`` (degree-zero nodes get weight 1e-12).
    """
    if n < 2 or n0 < 1 or not alpha > 0 or not 0.0 <= p <= 1.0:
        raise ValueError("grow_nlpa needs n >= 2, n0 >= 1, alpha > 0 and 0 <= p <= 1")
    state = new_state(draw_seed(as_generator(rng)))
    return Network.from_adjacency(_nlpa_kernel(float(alpha), float(p), int(n), int(n0), state))


# --- duplication-divergence ------------------------------------------------------------

@nb.njit(cache=True)
def _dmc_step(adj, v, q_mod, q_con, state):
    """Add node ``v`` to ``adj`` (nodes ``0..v-1`` exist).  Returns the anchor."""
    a = sm_randint(state, v)
    for u in range(v):
        if u == a or not adj[a, u]:
            continue
        adj[v, u] = 1
        adj[u, v] = 1
        if sm_uniform(state) < q_mod:
            if sm_uniform(state) < 0.5:
                adj[a, u] = 0
                adj[u, a] = 0
            else:
                adj[v, u] = 0
                adj[u, v] = 0
    if sm_uniform(state) < q_con:
        adj[a, v] = 1
        adj[v, a] = 1
    return a


@nb.njit(cache=True)
def _dmr_step(adj, v, q_del, q_new, state):
    """Add node ``v``; returns (anchor, number of random-attachment successes)."""
    a = sm_randint(state, v)
    for u in range(v):
        if u != a and adj[a, u]:
            if sm_uniform(state) >= q_del:
                adj[v, u] = 1
                adj[u, v] = 1
    prob = min(1.0, q_new / v)
    hits = 0
    for u in range(v):
        if sm_uniform(state) < prob:
            hits += 1
            adj[v, u] = 1
            adj[u, v] = 1
    return a, hits


@nb.njit(cache=True)
def _dmc_kernel(q_mod, q_con, n, state):
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[0, 1] = 1
    adj[1, 0] = 1
    for v in range(2, n):
        _dmc_step(adj, v, q_mod, q_con, state)
    return adj


@nb.njit(cache=True)
def _dmr_kernel(q_del, q_new, n, state):
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[0, 1] = 1
    adj[1, 0] = 1
    for v in range(2, n):
        _dmr_step(adj, v, q_del, q_new, state)
    return adj


def _check_prob(*ps):
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")


def grow_dmc(q_mod: float, q_con: float, n: int, rng) -> Network:
    """Duplication-mutation-complementation growth from a single edge.

    The new node copies the edges of a uniformly chosen anchor.  For every
    copied neighbour, with probability ``q_mod`` one of the two parallel edges
    (anchor or new node side, fair coin) is deleted.  Finally the anchor and
    new node are joined with probability ``q_con``.
    """
    if n < 2:
        raise ValueError("grow_dmc needs n >= 2")
    _check_prob(q_mod, q_con)
    state = new_state(draw_seed(as_generator(rng)))
    return Network.from_adjacency(_dmc_kernel(float(q_mod), float(q_con), int(n), state))


def grow_dmr(q_del: float, q_new: float, n: int, rng) -> Network:
    """Duplication-mutation-random growth from a single edge.

    Copied edges are deleted independently with probability ``q_del``; then
    each existing node links to the new one with probability
    ``min(1, q_new / n_existing)``.
    """
    if n < 2 or q_new < 0:
        raise ValueError("grow_dmr needs n >= 2 and q_new >= 0")
    _check_prob(q_del)
    state = new_state(draw_seed(as_generator(rng)))
    return Network.from_adjacency(_dmr_kernel(float(q_del), float(q_new), int(n), state))


def duplication_step(net: Network, kind: str, q1: float, q2: float, seed: int):
    """Grow ``net`` by one node with a single DMC or DMR step.

    Returns ``(new_net, anchor, random_hits)``; ``random_hits`` counts the DMR
    random-attachment successes and is 0 for DMC.
    """
    adj = np.zeros((net.n + 1, net.n + 1), dtype=np.uint8)
    adj[:net.n, :net.n] = net.adjacency_matrix()
    state = new_state(seed)
    if kind == "dmc":
        a, hits = _dmc_step(adj, net.n, float(q1), float(q2), state), 0
    elif kind == "dmr":
        a, hits = _dmr_step(adj, net.n, float(q1), float(q2), state)
    else:
        raise ValueError("kind must be 'dmc' or 'dmr'")
    return Network.from_adjacency(adj), int(a), int(hits)
