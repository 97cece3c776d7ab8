"""Summaries of a weighted empirical distribution."""

from __future__ import annotations

import numpy as np


def _check(w, y):
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if w.shape != y.shape:
        raise ValueError("weights and values must have the same shape")
    return w, y


def cdf(w, y, t):
    """``sum_j w_j 1(y_j <= t)``; ``t`` may be an array."""
    w, y = _check(w, y)
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cw = np.concatenate([[0.0], np.cumsum(w[order])])
    return cw[np.searchsorted(ys, t, side="right")]


def quantile(w, y, u):
    """Generalized inverse ``inf{t : cdf(t) >= u}``; ``u`` may be an array."""
    w, y = _check(w, y)
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    k = np.searchsorted(cw, np.asarray(u, dtype=float), side="left")
    return ys[np.minimum(k, len(ys) - 1)]


def wmean(w, y) -> float:
    w, y = _check(w, y)
    return float(np.sum(w * y))


def wvar(w, y) -> float:
    """Plug-in variance ``sum_j w_j (y_j - mean)^2``."""
    w, y = _check(w, y)
    m = np.sum(w * y)
    return float(np.sum(w * (y - m) ** 2))


def class_probs(w, labels, M: int | None = None) -> np.ndarray:
    """``P(m) = sum_j w_j 1(label_j = m)`` for 0-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    M = int(labels.max()) + 1 if M is None else M
    return np.bincount(labels, weights=np.asarray(w, dtype=float), minlength=M)[:M]


def effective_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(1.0 / np.sum(w * w))
