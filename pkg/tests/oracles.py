"""Slow, direct reimplementations used as test oracles.

Nothing here imports the package's own numerics beyond plain data containers.
"""

from collections import deque
from itertools import combinations

import numpy as np


def adj_sets(net):
    a = [set() for _ in range(net.n)]
    for u, v in net.edges:
        a[u].add(v)
        if not net.directed:
            a[v].add(u)
    return a


def triangles(net):
    a = adj_sets(net)
    return sum(1 for i, j, k in combinations(range(net.n), 3) if j in a[i] and k in a[i] and k in a[j])


def kstar2(net):
    return sum(len(s) * (len(s) - 1) // 2 for s in adj_sets(net))


def connected_triples(net):
    """(closed, total) counts over all centred triples."""
    a = adj_sets(net)
    closed = total = 0
    for c in range(net.n):
        for i, j in combinations(sorted(a[c]), 2):
            total += 1
            closed += j in a[i]
    return closed, total


def bfs_mean_path(net):
    a = adj_sets(net)
    tot = cnt = 0
    for s in range(net.n):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in a[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        for t, d in dist.items():
            if t != s:
                tot += d
                cnt += 1
    return tot / cnt if cnt else float("nan")


def pearson_assortativity(net):
    deg = np.array([len(s) for s in adj_sets(net)], dtype=float)
    xs, ys = [], []
    for u, v in net.edges:
        xs += [deg[u], deg[v]]
        ys += [deg[v], deg[u]]
    return float(np.corrcoef(xs, ys)[0, 1])


def gw_degree_direct(net, decay):
    r = 1 - np.exp(-decay)
    deg = [len(s) for s in adj_sets(net)]
    return float(np.exp(decay) * sum(1 - r ** k for k in deg))


def exact_mmd2(a, b, h):
    a = np.atleast_2d(np.asarray(a, float).reshape(len(a), -1))
    b = np.atleast_2d(np.asarray(b, float).reshape(len(b), -1))

    def k(x, y):
        tot = 0.0
        for xi in x:
            for yj in y:
                tot += np.exp(-np.sum((xi - yj) ** 2) / (2 * h * h))
        return tot / (len(x) * len(y))

    return k(a, a) + k(b, b) - 2 * k(a, b)


def forest_weights_walk(forest, x):
    """Per-tree leaf walk written against the flat arrays, one tree at a time."""
    w = np.zeros(forest.n_train)
    for b in range(forest.n_trees):
        t = forest.tree(b)
        node = 0
        while t["feature"][node] >= 0:
            node = t["left"][node] if x[t["feature"][node]] <= t["threshold"][node] else t["right"][node]
        rows = t["rows"][t["start"][node]:t["end"][node]]
        for r in rows:
            w[r] += 1.0 / (len(rows) * forest.n_trees)
    return w


def scan_quantile(w, y, u):
    order = sorted(range(len(y)), key=lambda i: y[i])
    acc = 0.0
    for i in order:
        acc += w[i]
        if acc >= u - 1e-12:
            return y[i]
    return y[order[-1]]


def sj_reference(x, lo_factor=0.05, hi_factor=3.0):
    """Sheather-Jones solve-the-equation bandwidth with exact O(n^2) functionals."""
    from scipy.optimize import brentq
    from scipy.stats import norm

    x = np.asarray(x, float)
    n = len(x)
    d = x[:, None] - x[None, :]

    def phi_r(r, g):
        z = d / g
        p = norm.pdf(z)
        he = {4: z ** 4 - 6 * z ** 2 + 3, 6: z ** 6 - 15 * z ** 4 + 45 * z ** 2 - 15}[r]
        return np.sum(he * p) / (n * n * g ** (r + 1))

    sd = min(np.std(x, ddof=1), (np.percentile(x, 75) - np.percentile(x, 25)) / 1.349)
    a = 0.920 * sd * n ** (-1 / 7)
    b = 0.912 * sd * n ** (-1 / 9)
    tdb = -phi_r(6, b)
    sda = phi_r(4, a)
    rk = 1 / (2 * np.sqrt(np.pi))

    def eq(h):
        g = 1.357 * (sda / tdb) ** (1 / 7) * h ** (5 / 7)
        return (rk / (n * phi_r(4, g))) ** 0.2 - h

    return brentq(eq, lo_factor * sd, hi_factor * sd)
