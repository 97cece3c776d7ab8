"""Numba kernels: growing one MMD-split tree and walking trees for weights."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .._rng import sm_normal, sm_randint, sm_uniform

SCORE_TOL = 1e-12
MAX_PAIRS = 1000


@nb.njit(cache=True, nogil=True)
def median_bandwidth(Y, rows, state):
    """Median Euclidean distance over up to MAX_PAIRS random distinct pairs of ``Y[rows]``."""
    n = rows.shape[0]
    q = Y.shape[1]
    if n < 2:
        return 1.0
    total_pairs = n * (n - 1) // 2
    m = min(MAX_PAIRS, total_pairs)
    d = np.empty(m)
    if total_pairs <= MAX_PAIRS:
        c = 0
        for a in range(n):
            for b in range(a + 1, n):
                s = 0.0
                for k in range(q):
                    t = Y[rows[a], k] - Y[rows[b], k]
                    s += t * t
                d[c] = math.sqrt(s)
                c += 1
    else:
        for c in range(m):
            a = sm_randint(state, n)
            b = sm_randint(state, n - 1)
            if b >= a:
                b += 1
            s = 0.0
            for k in range(q):
                t = Y[rows[a], k] - Y[rows[b], k]
                s += t * t
            d[c] = math.sqrt(s)
    med = np.median(d)
    if med > 0.0:
        return med
    # heavily tied responses (e.g. one-hot labels): fall back to the mean nonzero distance
    s, c = 0.0, 0
    for k in range(m):
        if d[k] > 0.0:
            s += d[k]
            c += 1
    return s / c if c > 0 else 1.0


@nb.njit(cache=True, nogil=True)
def random_features(Y, rows, omega, bias):
    """sqrt(2/L) cos(Y omega + bias) for the listed rows."""
    n = rows.shape[0]
    q, L = omega.shape
    phi = np.empty((n, L))
    scale = math.sqrt(2.0 / L)
    for r in range(n):
        for l in range(L):
            z = bias[l]
            for k in range(q):
                z += Y[rows[r], k] * omega[k, l]
            phi[r, l] = scale * math.cos(z)
    return phi


@nb.njit(cache=True, nogil=True, fastmath=True)
def _split_score(left_sum, total, k, n, L):
    s = 0.0
    inv_l = 1.0 / k
    inv_r = 1.0 / (n - k)
    for l in range(L):
        diff = left_sum[l] * inv_l - (total[l] - left_sum[l]) * inv_r
        s += diff * diff
    return (k * (n - k)) / (n * n) * s


@nb.njit(cache=True, nogil=True, fastmath=True)
def build_tree(X, Y, n_sub, mtry, min_leaf, L, max_cand, seed):
    """Grow one tree on a subsample drawn without replacement.

    Returns node arrays ``(feature, threshold, left, right, start, end)``,
    ``leaf_rows`` (global row ids; a leaf owns ``leaf_rows[start:end]``) and
    the per-covariate importance contributions of this tree.

    Every covariate keeps its own ordering of the subsample; a node is a
    contiguous segment ``[start, end)`` of each ordering, and splitting
    stable-partitions all orderings, so no sorting happens below the root.
    """
    N, p = X.shape
    q = Y.shape[1]
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    perm = np.arange(N)
    for i in range(n_sub):
        k = i + sm_randint(state, N - i)
        tmp = perm[i]
        perm[i] = perm[k]
        perm[k] = tmp
    rows = perm[:n_sub].copy()

    sigma = median_bandwidth(Y, rows, state)
    omega = np.empty((q, L))
    for k in range(q):
        for l in range(L):
            omega[k, l] = sm_normal(state) / sigma
    bias = np.empty(L)
    for l in range(L):
        bias[l] = 2.0 * math.pi * sm_uniform(state)
    phi = random_features(Y, rows, omega, bias)

    xs = np.empty((p, n_sub))
    for f in range(p):
        for a in range(n_sub):
            xs[f, a] = X[rows[a], f]
    ordering = np.empty((p, n_sub), dtype=np.int64)
    for f in range(p):
        ordering[f] = np.argsort(xs[f], kind="mergesort")

    max_nodes = 2 * n_sub + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    start = np.zeros(max_nodes, dtype=np.int32)
    end = np.zeros(max_nodes, dtype=np.int32)
    imp = np.zeros(p)

    goes_left = np.zeros(n_sub, dtype=np.bool_)
    scratch = np.empty(n_sub, dtype=np.int64)
    cols = np.arange(p)
    chosen = np.empty(mtry, dtype=np.int64)
    cand = np.empty(n_sub, dtype=np.int64)
    left_sum = np.empty(L)
    total = np.empty(L)

    stack = np.empty(max_nodes, dtype=np.int32)
    n_nodes = 1
    start[0] = 0
    end[0] = n_sub
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s0 = start[node]
        n = end[node] - s0
        if n < 2 * min_leaf:
            continue
        seg = ordering[0, s0:s0 + n]
        # zero response spread -> leaf
        spread = False
        r0 = rows[seg[0]]
        for a in range(1, n):
            ra = rows[seg[a]]
            for k in range(q):
                if Y[ra, k] != Y[r0, k]:
                    spread = True
                    break
            if spread:
                break
        if not spread:
            continue

        for l in range(L):
            total[l] = 0.0
        for a in range(n):
            pa = seg[a]
            for l in range(L):
                total[l] += phi[pa, l]

        # mtry distinct covariates, scanned in increasing index order
        for i in range(mtry):
            k = i + sm_randint(state, p - i)
            tmp = cols[i]
            cols[i] = cols[k]
            cols[k] = tmp
        for i in range(mtry):
            chosen[i] = cols[i]
        chosen.sort()

        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        for ci in range(mtry):
            f = chosen[ci]
            order = ordering[f, s0:s0 + n]
            xf = xs[f]
            n_c = 0
            for k in range(min_leaf, n - min_leaf + 1):
                if xf[order[k - 1]] < xf[order[k]]:
                    cand[n_c] = k
                    n_c += 1
            if n_c == 0:
                continue
            n_eval = min(n_c, max_cand)
            for l in range(L):
                left_sum[l] = 0.0
            pos = 0
            for e in range(n_eval):
                if n_eval == n_c:
                    k = cand[e]
                elif n_eval > 1:
                    k = cand[int(round(e * (n_c - 1) / (n_eval - 1)))]
                else:
                    k = cand[n_c // 2]
                while pos < k:
                    pr = order[pos]
                    for l in range(L):
                        left_sum[l] += phi[pr, l]
                    pos += 1
                sc = _split_score(left_sum, total, k, n, L)
                if sc > best_score:
                    lo = xf[order[k - 1]]
                    hi = xf[order[k]]
                    thr = lo + 0.5 * (hi - lo)
                    if thr >= hi:
                        thr = lo
                    best_score = sc
                    best_f = f
                    best_thr = thr
        if best_f < 0 or best_score <= SCORE_TOL:
            continue

        nl = 0
        xb = xs[best_f]
        for a in range(n):
            pa = seg[a]
            gl = xb[pa] <= best_thr
            goes_left[pa] = gl
            if gl:
                nl += 1
        for f in range(p):
            o = ordering[f]
            a_l = s0
            nr = 0
            for a in range(s0, s0 + n):
                pa = o[a]
                if goes_left[pa]:
                    o[a_l] = pa
                    a_l += 1
                else:
                    scratch[nr] = pa
                    nr += 1
            for a in range(nr):
                o[a_l + a] = scratch[a]

        feature[node] = best_f
        threshold[node] = best_thr
        imp[best_f] += n / n_sub
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s0
        end[lc] = s0 + nl
        start[rc] = s0 + nl
        end[rc] = s0 + n
        stack[top] = rc
        top += 1
        stack[top] = lc
        top += 1

    leaf_rows = np.empty(n_sub, dtype=np.int32)
    for a in range(n_sub):
        leaf_rows[a] = rows[ordering[0, a]]
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), start[:n_nodes].copy(), end[:n_nodes].copy(), leaf_rows, imp)


@nb.njit(cache=True, nogil=True)
def find_leaf(feature, threshold, left, right, node0, x):
    node = node0
    while feature[node] >= 0:
        if x[feature[node]] <= threshold[node]:
            node = node0 + left[node]
        else:
            node = node0 + right[node]
    return node


@nb.njit(cache=True, nogil=True)
def forest_weights(feature, threshold, left, right, start, end, node_off, leaf_rows, row_off,
                   X_test, N):
    """Dense ``(m, N)`` weight matrix for ``m`` test points."""
    B = node_off.shape[0] - 1
    m = X_test.shape[0]
    W = np.zeros((m, N))
    for i in range(m):
        x = X_test[i]
        for b in range(B):
            leaf = find_leaf(feature, threshold, left, right, node_off[b], x)
            s = row_off[b] + start[leaf]
            e = row_off[b] + end[leaf]
            share = 1.0 / (B * (e - s))
            for a in range(s, e):
                W[i, leaf_rows[a]] += share
    return W
