"""Seed derivation shared by simulators and the forest builder.

Every stochastic routine takes either a ``numpy.random.Generator`` or an
integer seed.  Child streams are derived from ``(seed, *keys)`` through
``numpy.random.SeedSequence`` so results never depend on worker count.
Numba kernels use a splitmix64 stream seeded from a single 64-bit integer.
"""

from __future__ import annotations

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, key0, key1, ...)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & MASK64, *(int(k) for k in keys)]))


def child_seed(seed: int, *keys: int) -> int:
    """A 64-bit integer seed derived from ``(seed, keys)``; used to seed numba streams."""
    ss = np.random.SeedSequence([int(seed) & MASK64, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1, dtype=np.int64))


# splitmix64 state lives in a length-1 uint64 array so kernels can advance it in place.

@nb.njit(cache=True)
def sm_next(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def sm_uniform(state):
    """Uniform on [0, 1) with 53 random bits."""
    return float(sm_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def sm_randint(state, n):
    """Uniform integer in [0, n)."""
    return int(sm_uniform(state) * n)


@nb.njit(cache=True)
def sm_normal(state):
    u1 = sm_uniform(state)
    while u1 <= 0.0:
        u1 = sm_uniform(state)
    u2 = sm_uniform(state)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def new_state(seed: int) -> np.ndarray:
    return np.array([np.uint64(int(seed) & MASK64)], dtype=np.uint64)
