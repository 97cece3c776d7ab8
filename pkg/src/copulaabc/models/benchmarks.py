"""Simulators and summaries for the iid benchmark models."""

from __future__ import annotations

import re

import numpy as np

from .._rng import as_generator

MIXTURE_SD = (1.0, 0.1)


def simulate_poisson_mixture(theta, n_sim: int, rng) -> np.ndarray:
    """Columns: Poisson(lambda) counts and 0.5 N(mu, 1) + 0.5 N(mu, 0.01) draws."""
    lam, mu = float(theta[0]), float(theta[1])
    rng = as_generator(rng)
    x1 = rng.poisson(lam, n_sim).astype(float)
    z = rng.random(n_sim) < 0.5
    x2 = mu + np.where(z, MIXTURE_SD[0], MIXTURE_SD[1]) * rng.standard_normal(n_sim)
    return np.column_stack([x1, x2])


def bivariate_gaussian_params(theta):
    """Mean and covariance from (mu1, mu2, t3, t4, t5) with s_i = t_i^2, rho = tanh(t5)."""
    t = np.asarray(theta, dtype=float)
    s1, s2, rho = t[2] ** 2, t[3] ** 2, np.tanh(t[4])
    cov = np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])
    return t[:2].copy(), cov


def simulate_bivariate_gaussian(theta, n_sim: int, rng) -> np.ndarray:
    mean, cov = bivariate_gaussian_params(theta)
    rng = as_generator(rng)
    # explicit 2x2 factor keeps degenerate (s_i = 0) covariances usable
    s1, s2, rho = np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1]), np.tanh(float(theta[4]))
    z = rng.standard_normal((n_sim, 2))
    x1 = mean[0] + s1 * z[:, 0]
    x2 = mean[1] + s2 * (rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1])
    return np.column_stack([x1, x2])


def bivariate_gaussian_loglik(theta, x) -> float:
    mean, cov = bivariate_gaussian_params(theta)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    if not det > 0:
        return -np.inf
    r = np.asarray(x, dtype=float) - mean
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[0, 1], cov[0, 0]]]) / det
    q = np.einsum("ij,jk,ik->i", r, inv, r)
    return float(-0.5 * np.sum(q) - len(r) * (np.log(2 * np.pi) + 0.5 * np.log(det)))


def simulate_gaussian_location(theta, n_sim: int, rng) -> np.ndarray:
    """Rows of N_d(theta, I)."""
    t = np.asarray(theta, dtype=float)
    rng = as_generator(rng)
    return t + rng.standard_normal((n_sim, t.size))


_SUMMARY = re.compile(r"^(mean|var|cov)\[(\d+)(?:,(\d+))?\]$")


def check_iid_summary_names(names, p: int | None = None) -> None:
    for name in names:
        m = _SUMMARY.match(name)
        if m is None or (m.group(1) == "cov") != (m.group(3) is not None):
            raise ValueError(f"unknown iid summary {name!r}; use mean[k], var[k] or cov[k,l]")
        if p is not None and max(int(m.group(2)), int(m.group(3) or 0)) >= p:
            raise ValueError(f"summary {name!r} refers to a missing column")


def iid_summaries(x, names) -> np.ndarray:
    """Column means, MLE variances (divisor n) and MLE covariances by name."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mean = x.mean(axis=0)
    out = np.empty(len(names))
    for i, name in enumerate(names):
        m = _SUMMARY.match(name)
        if m is None:
            raise ValueError(f"unknown iid summary {name!r}")
        k = int(m.group(2))
        if m.group(1) == "mean":
            out[i] = mean[k]
        elif m.group(1) == "var":
            out[i] = np.mean((x[:, k] - mean[k]) ** 2)
        else:
            l = int(m.group(3))
            out[i] = np.mean((x[:, k] - mean[k]) * (x[:, l] - mean[l]))
    return out
