"""Random-Fourier-feature MMD used as the forest split criterion, plus an exact reference."""

from __future__ import annotations

import numpy as np

from .._rng import as_generator


def rff_params(q: int, L: int, bandwidth: float, rng):
    """Frequencies ``omega ~ N(0, I / bandwidth^2)`` (q x L) and phases ``U(0, 2 pi)``."""
    rng = as_generator(rng)
    return rng.standard_normal((q, L)) / bandwidth, rng.uniform(0.0, 2 * np.pi, L)


def rff_map(y, omega, bias) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    return np.sqrt(2.0 / omega.shape[1]) * np.cos(y @ omega + bias)


def _canonical(y):
    y = np.asarray(y, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    return y[np.lexsort(y.T[::-1])]


def mmd2_rff(y_left, y_right, omega, bias) -> float:
    """Biased squared MMD in feature space.

    Rows are put in canonical order first so that identical multisets give
    bitwise identical feature means (and hence exactly zero).
    """
    fl = rff_map(_canonical(y_left), omega, bias).mean(axis=0)
    fr = rff_map(_canonical(y_right), omega, bias).mean(axis=0)
    return float(np.sum((fl - fr) ** 2))


def mmd_split_score(y_left, y_right, omega, bias) -> float:
    """``n_l n_r / (n_l + n_r)^2`` times the squared random-feature MMD."""
    nl, nr = len(y_left), len(y_right)
    if nl == 0 or nr == 0:
        raise ValueError("both sides of a split must be nonempty")
    return nl * nr / (nl + nr) ** 2 * mmd2_rff(y_left, y_right, omega, bias)


def gaussian_gram(a, b, bandwidth) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * bandwidth ** 2))


def mmd2_exact(y_left, y_right, bandwidth: float) -> float:
    """Biased squared MMD under ``exp(-|x - y|^2 / (2 h^2))`` by direct double sums."""
    kll = gaussian_gram(y_left, y_left, bandwidth).mean()
    krr = gaussian_gram(y_right, y_right, bandwidth).mean()
    klr = gaussian_gram(y_left, y_right, bandwidth).mean()
    return float(kll + krr - 2.0 * klr)
