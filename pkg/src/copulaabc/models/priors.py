"""Parameter spaces and prior distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .._rng import as_generator


@dataclass(frozen=True)
class ParamSpace:
    """Names, kinds and support bounds of a d-dimensional parameter."""

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    kinds: tuple[str, ...] = ()

    def __post_init__(self):
        d = len(self.names)
        if d < 1:
            raise ValueError("parameter space needs at least one dimension")
        kinds = self.kinds or ("continuous",) * d
        object.__setattr__(self, "kinds", tuple(kinds))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if not (len(self.lower) == len(self.upper) == len(self.kinds) == d):
            raise ValueError("names, bounds and kinds must have equal length")
        for k, (lo, hi, kind) in enumerate(zip(self.lower, self.upper, self.kinds)):
            if not lo < hi:
                raise ValueError(f"dimension {k}: lower bound must be below upper bound")
            if kind not in ("continuous", "discrete"):
                raise ValueError(f"dimension {k}: kind must be continuous or discrete")
            if kind == "discrete":
                for b in (lo, hi):
                    if math.isfinite(b) and b != round(b):
                        raise ValueError(f"dimension {k}: discrete bounds must be integers")

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def discrete_dims(self) -> list[int]:
        return [k for k, kind in enumerate(self.kinds) if kind == "discrete"]

    def contains(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(t >= np.array(self.lower)) and np.all(t <= np.array(self.upper)))


class Prior:
    """Base class.  Subclasses implement ``dim``, ``sample_n`` and ``log_density``."""

    dim: int

    def sample(self, rng) -> np.ndarray:
        return self.sample_n(rng, 1)[0]

    def sample_n(self, rng, n: int) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, theta) -> float:
        raise NotImplementedError

    def log_density_many(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.array([self.log_density(t) for t in thetas])

    def _check(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float).ravel()
        if t.shape[0] != self.dim:
            raise ValueError(f"expected a {self.dim}-vector, got length {t.shape[0]}")
        return t

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)


@dataclass(frozen=True)
class UniformPrior(Prior):
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("uniform bounds must be nonempty and of equal length")
        if not all(np.isfinite(lo + hi)) or not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("uniform bounds must be finite with lower < upper")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def sample_n(self, rng, n):
        rng = as_generator(rng)
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * rng.random((n, self.dim))

    def log_density(self, theta):
        t = self._check(theta)
        lo, hi = np.array(self.lower), np.array(self.upper)
        if np.any(t < lo) or np.any(t > hi):
            return -np.inf
        return float(-np.sum(np.log(hi - lo)))

    def log_density_many(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        lo, hi = np.array(self.lower), np.array(self.upper)
        inside = np.all((t >= lo) & (t <= hi), axis=1)
        return np.where(inside, -np.sum(np.log(hi - lo)), -np.inf)

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)


@dataclass(frozen=True)
class GammaPrior(Prior):
    """Independent gamma(shape, rate) coordinates."""

    shape: tuple[float, ...]
    rate: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.shape))
        b = tuple(float(v) for v in np.atleast_1d(self.rate))
        object.__setattr__(self, "shape", a)
        object.__setattr__(self, "rate", b)
        if len(a) != len(b) or not a or min(a) <= 0 or min(b) <= 0:
            raise ValueError("gamma shape and rate must be positive and of equal length")

    @property
    def dim(self) -> int:
        return len(self.shape)

    def sample_n(self, rng, n):
        rng = as_generator(rng)
        a, b = np.array(self.shape), np.array(self.rate)
        return rng.gamma(a, 1.0 / b, size=(n, self.dim))

    def log_density(self, theta):
        t = self._check(theta)
        if np.any(t <= 0):
            return -np.inf
        a, b = np.array(self.shape), np.array(self.rate)
        return float(np.sum(a * np.log(b) - special.gammaln(a) + (a - 1) * np.log(t) - b * t))

    def bounds(self):
        return np.zeros(self.dim), np.full(self.dim, np.inf)


@dataclass(frozen=True, eq=False)
class MVNormalPrior(Prior):
    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(c, c.T, rtol=1e-10, atol=0):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample_n(self, rng, n):
        rng = as_generator(rng)
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def log_density(self, theta):
        t = self._check(theta)
        z = np.linalg.solve(self._chol, t - self.mean)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        return float(-0.5 * (self.dim * math.log(2 * math.pi) + logdet + z @ z))

    def __eq__(self, other):
        return (isinstance(other, MVNormalPrior) and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.cov, other.cov))

    __hash__ = None


@dataclass(frozen=True)
class TwistedGaussianPrior(Prior):
    """Banana-shaped prior on R^d.

    theta1 ~ N(0, 100), theta2 | theta1 ~ N(b*theta1^2 - 100b, 1) and the
    remaining coordinates iid N(0, 1/2).  ``log_density`` returns the
    unnormalized exponent.
    """

    d: int
    b: float = 0.1

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("twisted Gaussian prior needs d >= 2")

    @property
    def dim(self) -> int:
        return self.d

    def sample_n(self, rng, n):
        rng = as_generator(rng)
        out = np.empty((n, self.d))
        out[:, 0] = 10.0 * rng.standard_normal(n)
        out[:, 1] = self.b * out[:, 0] ** 2 - 100.0 * self.b + rng.standard_normal(n)
        out[:, 2:] = math.sqrt(0.5) * rng.standard_normal((n, self.d - 2))
        return out

    def log_density(self, theta):
        t = self._check(theta)
        return float(self.log_density_many(t[None, :])[0])

    def log_density_many(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        twist = t[:, 1] - self.b * t[:, 0] ** 2 + 100.0 * self.b
        return -t[:, 0] ** 2 / 200.0 - twist ** 2 / 2.0 - np.sum(t[:, 2:] ** 2, axis=1)


@dataclass(frozen=True)
class ProductPrior(Prior):
    """Independent blocks concatenated in order."""

    parts: tuple[Prior, ...]

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    def _split(self, t):
        out, k = [], 0
        for p in self.parts:
            out.append(t[..., k:k + p.dim])
            k += p.dim
        return out

    def sample_n(self, rng, n):
        rng = as_generator(rng)
        return np.hstack([p.sample_n(rng, n) for p in self.parts])

    def log_density(self, theta):
        t = self._check(theta)
        return float(sum(p.log_density(b) for p, b in zip(self.parts, self._split(t))))

    def log_density_many(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        return sum(p.log_density_many(b) for p, b in zip(self.parts, self._split(t)))

    def bounds(self):
        lo, hi = zip(*(p.bounds() for p in self.parts))
        return np.concatenate(lo), np.concatenate(hi)


def sample_prior(prior: Prior, rng) -> np.ndarray:
    return prior.sample(rng)


def prior_log_density(prior: Prior, theta) -> float:
    return prior.log_density(theta)
