"""Keyed counter-based hashing used for every random quantity in the package.

Each random number is a pure function of ``(seed, stream kind, object key,
counter)``.  Nothing is drawn sequentially, so any Poisson stream can be
queried in any order, from any worker, and translated in space or time
without re-sampling.

The mixer is the SplitMix64 finalizer; inputs are absorbed one 64-bit word
at a time.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
# keeps lattice coordinates (|c| < 2**40) non-negative before the uint64 cast
_COORD_BIAS = 1 << 40
_INV53 = 1.0 / 9007199254740992.0

KIND_SITE = 1
KIND_EDGE = 2
KIND_THIN = 3
KIND_ENV = 4


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def absorb(h, v):
    """Fold the signed integer ``v`` into hash state ``h``."""
    return mix64(h + _GOLD + np.uint64(v + _COORD_BIAS))


@njit(cache=True)
def to_unit(h):
    """Map a hash to a double in [0, 1) using its top 53 bits."""
    return np.float64(h >> _S11) * _INV53


@njit(cache=True)
def stream_base(seed, kind):
    return absorb(mix64(np.uint64(seed) + _GOLD), kind)


@njit(cache=True)
def poisson_count(u, mean):
    """Poisson(mean) variate by inversion of the uniform ``u``."""
    if mean <= 0.0:
        return 0
    p = np.exp(-mean)
    c = p
    n = 0
    while u >= c:
        n += 1
        p *= mean / n
        if p < 1e-18 * c:
            break
        c += p
    return n


def seed_word(seed: int) -> np.uint64:
    """Reduce an arbitrary Python integer seed to 64 bits."""
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def base_hash(seed: int, kind: int) -> np.uint64:
    return np.uint64(stream_base(seed_word(seed), kind))
