"""Marginal density estimates from weighted samples.

Two estimators: a histogram whose bars span consecutive order statistics
(height = weight of the right endpoint / bar width), and a weighted Gaussian
KDE with a Sheather-Jones solve-the-equation bandwidth and optional
reflection at support bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.optimize import brentq

from .drf.weighted import quantile as wquantile

log = logging.getLogger(__name__)

SQRT2PI = math.sqrt(2.0 * math.pi)


def _normalized(y, w):
    y = np.asarray(y, dtype=float).ravel()
    w = np.full(y.size, 1.0 / y.size) if w is None else np.asarray(w, dtype=float).ravel()
    if w.shape != y.shape:
        raise ValueError("values and weights must have the same length")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative with positive total")
    keep = w > 0
    return y[keep], w[keep] / w.sum()


# --- histogram ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HistogramDensity:
    """Piecewise-constant density: ``heights[l]`` on ``(edges[l], edges[l+1]]``."""

    edges: np.ndarray
    heights: np.ndarray

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.edges, t, side="left") - 1
        inside = (k >= 0) & (k < len(self.heights))
        out = np.zeros(t.shape)
        out[inside] = self.heights[k[inside]]
        return out

    def logpdf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(t))

    def mass(self) -> float:
        return float(np.sum(self.heights * np.diff(self.edges)))

    @property
    def support(self):
        return float(self.edges[0]), float(self.edges[-1])


def histogram_density(y, w=None, merge_first: bool = True) -> HistogramDensity:
    """Histogram over consecutive distinct order statistics.

    Duplicate values are merged (weights summed).  Bar ``l`` covers
    ``(y_(l-1), y_(l)]`` with height ``w_(l) / (y_(l) - y_(l-1))``.  The lowest
    atom has no bar of its own; with ``merge_first`` its weight is added to
    the first bar so the total mass is 1, otherwise it is dropped and the
    mass is ``1 - w_(1)``.
    """
    y, w = _normalized(y, w)
    order = np.argsort(y, kind="stable")
    ys, ws = y[order], w[order]
    atoms, start = np.unique(ys, return_index=True)
    if atoms.size < 2:
        raise ValueError("histogram density needs at least two distinct values")
    mass = np.add.reduceat(ws, start)
    bar_mass = mass[1:].copy()
    if merge_first:
        bar_mass[0] += mass[0]
    heights = bar_mass / np.diff(atoms)
    return HistogramDensity(atoms, heights)


# --- Sheather-Jones bandwidth -------------------------------------------------------------

def weighted_sd(y, w) -> float:
    """Weighted standard deviation with the reliability-weights correction ``1 / (1 - sum w^2)``."""
    m = np.sum(w * y)
    v = np.sum(w * (y - m) ** 2)
    s2 = np.sum(w * w)
    return float(math.sqrt(v / (1.0 - s2))) if s2 < 1 else 0.0


def _binned_pair_weights(y, w, nb=1000):
    """Weighted pair mass by bin-index distance (pairs ``i < j``), and the bin width."""
    lo, hi = y.min(), y.max()
    dd = (hi - lo) * 1.01 / nb
    idx = np.minimum(np.floor((y - lo) / dd).astype(np.int64), nb - 1)
    W = np.bincount(idx, weights=w, minlength=nb)
    W2 = np.bincount(idx, weights=w * w, minlength=nb)
    corr = np.correlate(W, W, mode="full")[nb - 1:]
    cnt = corr.copy()
    cnt[0] = 0.5 * (corr[0] - W2.sum())
    return cnt, dd


@nb.njit(cache=True)
def _phi4(cnt, dd, h, diag, n_eff):
    s = 0.0
    for i in range(cnt.shape[0]):
        delta = (i * dd / h) ** 2
        if delta >= 1000.0:
            break
        s += math.exp(-delta / 2.0) * (delta * delta - 6.0 * delta + 3.0) * cnt[i]
    s = 2.0 * s + 3.0 * diag
    return s * n_eff / (n_eff - 1.0) / (h ** 5 * math.sqrt(2.0 * math.pi))


@nb.njit(cache=True)
def _phi6(cnt, dd, h, diag, n_eff):
    s = 0.0
    for i in range(cnt.shape[0]):
        delta = (i * dd / h) ** 2
        if delta >= 1000.0:
            break
        s += math.exp(-delta / 2.0) * (delta ** 3 - 15.0 * delta ** 2 + 45.0 * delta - 15.0) * cnt[i]
    s = 2.0 * s - 15.0 * diag
    return s * n_eff / (n_eff - 1.0) / (h ** 7 * math.sqrt(2.0 * math.pi))


def silverman_bandwidth(y, w=None) -> float:
    y, w = _normalized(y, w)
    n_eff = 1.0 / np.sum(w * w)
    q1, q3 = wquantile(w, y, [0.25, 0.75])
    scale = min(weighted_sd(y, w), (q3 - q1) / 1.34)
    if not scale > 0:
        scale = weighted_sd(y, w) or (y.max() - y.min()) or 1.0
    return float(0.9 * scale * n_eff ** -0.2)


def sj_bandwidth(y, w=None, nbins: int = 1000) -> float:
    """Solve-the-equation Sheather-Jones bandwidth for a weighted sample.

    Pairwise sums run over binned weighted pair masses; ``n`` in the pilot
    bandwidth formulas is the effective size ``1 / sum w^2``.  With equal
    weights this is the usual binned solve-the-equation rule.  Falls back to
    Silverman's rule (with a logged warning) when the functional estimates
    are unusable or no root is bracketed.
    """
    y, w = _normalized(y, w)
    if np.unique(y).size < 3:
        raise ValueError("Sheather-Jones bandwidth needs at least 3 distinct values")
    n = 1.0 / np.sum(w * w)
    diag = float(np.sum(w * w))
    cnt, dd = _binned_pair_weights(y, w, nbins)
    q1, q3 = wquantile(w, y, [0.25, 0.75])
    scale = min(weighted_sd(y, w), (q3 - q1) / 1.349)
    if not scale > 0:
        scale = weighted_sd(y, w)
    if not (scale > 0 and n > 1):
        log.warning("degenerate sample for Sheather-Jones; using Silverman's rule")
        return silverman_bandwidth(y, w)
    a = 1.24 * scale * n ** (-1 / 7)
    b = 1.23 * scale * n ** (-1 / 9)
    c1 = 1.0 / (2.0 * math.sqrt(math.pi) * n)
    td = -_phi6(cnt, dd, b, diag, n)
    sd_a = _phi4(cnt, dd, a, diag, n)
    if not (np.isfinite(td) and td > 0 and np.isfinite(sd_a) and sd_a > 0):
        log.warning("Sheather-Jones functionals not positive; using Silverman's rule")
        return silverman_bandwidth(y, w)
    alph2 = 1.357 * (sd_a / td) ** (1 / 7)

    def f(h):
        val = _phi4(cnt, dd, alph2 * h ** (5 / 7), diag, n)
        return (c1 / val) ** 0.2 - h if val > 0 else -h

    hmax = 1.144 * scale * n ** (-1 / 5)
    lower, upper = 0.1 * hmax, hmax
    for _ in range(99):
        if f(lower) * f(upper) <= 0:
            break
        lower /= 1.2
        upper *= 1.2
    else:
        log.warning("no Sheather-Jones root in bracket; using Silverman's rule")
        return silverman_bandwidth(y, w)
    return float(brentq(f, lower, upper, xtol=1e-12 * upper, rtol=1e-12))


# --- weighted KDE -----------------------------------------------------------------------------

@nb.njit(cache=True, parallel=False)
def _kde_eval(t, atoms, w, h):
    out = np.zeros(t.shape[0])
    inv = 1.0 / h
    c = inv / math.sqrt(2.0 * math.pi)
    for i in range(t.shape[0]):
        s = 0.0
        for j in range(atoms.shape[0]):
            z = (t[i] - atoms[j]) * inv
            if z * z < 80.0:
                s += w[j] * math.exp(-0.5 * z * z)
        out[i] = s * c
    return out


@dataclass(frozen=True, eq=False)
class KDEDensity:
    """Weighted Gaussian KDE; reflected copies of the atoms keep mass inside ``bounds``."""

    atoms: np.ndarray
    weights: np.ndarray
    h: float
    bounds: tuple[float, float] = (-np.inf, np.inf)
    grid_size: int = 4096
    exact_limit: int = 20_000_000

    def _atoms_reflected(self):
        a, b = self.bounds
        xs, ws = [self.atoms], [self.weights]
        if np.isfinite(a):
            xs.append(2 * a - self.atoms)
            ws.append(self.weights)
        if np.isfinite(b):
            xs.append(2 * b - self.atoms)
            ws.append(self.weights)
        return np.concatenate(xs), np.concatenate(ws)

    def pdf_exact(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x, w = self._atoms_reflected()
        out = _kde_eval(t.ravel(), x, w, self.h).reshape(t.shape)
        a, b = self.bounds
        out[(t < a) | (t > b)] = 0.0
        return out

    def pdf(self, t):
        """Exact sum for small problems, otherwise linear interpolation on a fine grid."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if t_arr.size * self.atoms.size * 3 <= self.exact_limit:
            out = self.pdf_exact(t_arr)
        else:
            a, b = self.bounds
            lo = max(a, self.atoms.min() - 9 * self.h)
            hi = min(b, self.atoms.max() + 9 * self.h)
            grid = np.linspace(lo, hi, self.grid_size)
            vals = self.pdf_exact(grid)
            out = np.interp(t_arr, grid, vals, left=0.0, right=0.0)
            out[(t_arr < a) | (t_arr > b)] = 0.0
        return out if np.ndim(t) else out[0]

    def logpdf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(t))


def weighted_kde(y, w=None, h: float | None = None, bounds=None) -> KDEDensity:
    """Gaussian KDE with normalized frequency weights; ``h`` defaults to ``sj_bandwidth``."""
    y, w = _normalized(y, w)
    if h is None:
        h = sj_bandwidth(y, w) if np.unique(y).size >= 3 else silverman_bandwidth(y, w)
    if not (h > 0 and np.isfinite(h)):
        raise ValueError("bandwidth must be positive and finite")
    if bounds is None:
        bounds = (-np.inf, np.inf)
    bounds = (float(bounds[0]), float(bounds[1]))
    if not bounds[0] < bounds[1]:
        raise ValueError("bounds must satisfy lower < upper")
    return KDEDensity(y, w, float(h), bounds)


def marginal_density(y, w, kind: str = "hist", bounds=None):
    if kind == "hist":
        return histogram_density(y, w)
    if kind == "kde":
        return weighted_kde(y, w, bounds=bounds)
    raise ValueError("marginal density kind must be 'hist' or 'kde'")
