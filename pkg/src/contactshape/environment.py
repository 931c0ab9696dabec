"""Random environments: edge infection rates on the nearest-neighbour lattice."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Tuple

import numpy as np

from . import _kernels as K
from ._rng import KIND_ENV, base_hash
from .errors import ConfigurationError

Site = Tuple[int, ...]
Edge = Tuple[Site, int]  # (lexicographically smaller endpoint, axis)


@dataclass(frozen=True)
class LatticeSpec:
    """The window B_L = [-L, L]^d of Z^d with its nearest-neighbour edges."""

    d: int
    window_radius: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {self.d}")
        if int(self.window_radius) < 1:
            raise ConfigurationError(f"window radius must be >= 1, got {self.window_radius}")

    @property
    def L(self) -> int:
        return self.window_radius

    @property
    def width(self) -> int:
        return 2 * self.window_radius + 1

    @property
    def n_sites(self) -> int:
        return self.width ** self.d

    def contains(self, z: Sequence[int]) -> bool:
        return len(z) == self.d and all(abs(int(c)) <= self.L for c in z)

    def on_boundary(self, z: Sequence[int]) -> bool:
        return any(abs(int(c)) == self.L for c in z)

    def index(self, z: Sequence[int]) -> int:
        if not self.contains(z):
            raise ValueError(f"site {tuple(z)} outside window of radius {self.L}")
        i = 0
        for a in reversed(range(self.d)):
            i = i * self.width + (int(z[a]) + self.L)
        return i

    def site(self, i: int) -> Site:
        out = []
        for _ in range(self.d):
            out.append(int(i % self.width) - self.L)
            i //= self.width
        return tuple(out)

    def coords(self) -> np.ndarray:
        """(n_sites, d) array of site coordinates in index order."""
        idx = np.arange(self.n_sites)
        cols = [(idx // self.width ** a) % self.width - self.L for a in range(self.d)]
        return np.stack(cols, axis=1).astype(np.int64)

    def edges(self) -> list[Edge]:
        out = []
        for i in range(self.n_sites):
            z = self.site(i)
            for a in range(self.d):
                if z[a] < self.L:
                    out.append((z, a))
        return out


def canonical_edge(*args) -> Edge:
    """Normalise ``(z, z2)``, ``((z, z2))`` or ``(z, axis)`` to ``(min endpoint, axis)``."""
    if len(args) == 1:
        args = tuple(args[0])
    a, b = args
    a = tuple(int(c) for c in a)
    if isinstance(b, (int, np.integer)):
        return a, int(b)
    b = tuple(int(c) for c in b)
    diff = [y - x for x, y in zip(a, b)]
    if sum(abs(v) for v in diff) != 1:
        raise ValueError(f"{a} and {b} are not nearest neighbours")
    axis = next(k for k, v in enumerate(diff) if v != 0)
    return (a, axis) if diff[axis] == 1 else (b, axis)


@dataclass(frozen=True)
class RateDistribution:
    """Bounded single-edge rate law: point mass, uniform, or two-point."""

    kind: str
    lo: float
    hi: float
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "two_point"):
            raise ConfigurationError(f"unknown rate distribution {self.kind!r}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ConfigurationError("rate distribution must be bounded")
        if self.lo < 0 or self.hi < self.lo:
            raise ConfigurationError(f"invalid support [{self.lo}, {self.hi}]")
        if self.kind == "constant" and self.lo != self.hi:
            raise ConfigurationError("point mass needs lo == hi")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"two-point weight {self.p} outside [0, 1]")

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        if self.kind == "two_point":
            return self.lo + self.p * (self.hi - self.lo)
        return self.lo


def point_mass(value: float) -> RateDistribution:
    return RateDistribution("constant", float(value), float(value))


def uniform(lo: float, hi: float) -> RateDistribution:
    return RateDistribution("uniform", float(lo), float(hi))


def two_point(lo: float, hi: float, p: float) -> RateDistribution:
    """Rate ``hi`` with probability ``p``, ``lo`` otherwise."""
    return RateDistribution("two_point", float(lo), float(hi), float(p))


_KIND_CODES = {"constant": K.ENV_CONSTANT, "uniform": K.ENV_UNIFORM, "two_point": K.ENV_TWO_POINT}


@dataclass(frozen=True)
class EnvironmentField:
    """Edge rates lambda_e as a pure function of (seed, edge); immutable.

    ``shift`` realises the action (x.lambda)_e = lambda_{x+e}.
    """

    spec: LatticeSpec
    dist: RateDistribution
    seed: int = 0
    lambda_min: float = 0.0
    lambda_max: float = 0.0
    shift: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.shift:
            object.__setattr__(self, "shift", (0,) * self.spec.d)
        if len(self.shift) != self.spec.d:
            raise ConfigurationError("shift dimension mismatch")
        if self.lambda_min > self.lambda_max:
            raise ConfigurationError("lambda_min > lambda_max")
        if self.dist.lo < self.lambda_min or self.dist.hi > self.lambda_max:
            raise ConfigurationError(
                f"rate support [{self.dist.lo}, {self.dist.hi}] not inside "
                f"[{self.lambda_min}, {self.lambda_max}]"
            )

    @property
    def kind(self) -> str:
        return self.dist.kind

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.dist.kind]

    @property
    def hash_base(self) -> np.uint64:
        return base_hash(self.seed, KIND_ENV)

    def rate(self, *edge) -> float:
        z, axis = canonical_edge(*edge)
        return float(self.rates([z], [axis])[0])

    def rates(self, sites: Iterable[Sequence[int]], axes: Iterable[int]) -> np.ndarray:
        coords = np.asarray(list(sites), dtype=np.int64).reshape(-1, self.spec.d)
        coords = coords + np.asarray(self.shift, dtype=np.int64)
        axes = np.asarray(list(axes), dtype=np.int64)
        return K.env_rates(
            self.kind_code, self.dist.lo, self.dist.lo, self.dist.hi, self.dist.p,
            self.hash_base, coords, axes,
        )

    def translate(self, x: Sequence[int]) -> "EnvironmentField":
        return translate_env(self, x)


def make_deterministic_env(spec: LatticeSpec, lam: float, lambda_min: float | None = None,
                           lambda_max: float | None = None) -> EnvironmentField:
    lo = lam if lambda_min is None else lambda_min
    hi = lam if lambda_max is None else lambda_max
    if not lo <= lam <= hi:
        raise ConfigurationError(f"rate {lam} outside [{lo}, {hi}]")
    return EnvironmentField(spec, point_mass(lam), 0, float(lo), float(hi))


def make_iid_env(spec: LatticeSpec, dist: RateDistribution, seed: int,
                 lambda_min: float | None = None, lambda_max: float | None = None) -> EnvironmentField:
    lo = dist.lo if lambda_min is None else lambda_min
    hi = dist.hi if lambda_max is None else lambda_max
    return EnvironmentField(spec, dist, int(seed), float(lo), float(hi))


def translate_env(env: EnvironmentField, x: Sequence[int]) -> EnvironmentField:
    if len(x) != env.spec.d:
        raise ValueError("translation vector has wrong dimension")
    shift = tuple(int(a) + int(b) for a, b in zip(env.shift, x))
    return EnvironmentField(env.spec, env.dist, env.seed, env.lambda_min, env.lambda_max, shift)
