"""Harris graphical construction: keyed Poisson streams of deaths and arrows.

Every site carries a rate-1 stream of deaths.  Every edge carries a base
stream at the ceiling rate (``env.lambda_max`` by default); the environment
stream keeps each base event independently with probability
``lambda_e / ceiling``.  Thinning the same base stream at a constant rate
gives the Richardson arrows, so domination holds pathwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from ._rng import KIND_EDGE, KIND_SITE, KIND_THIN, base_hash
from .environment import EnvironmentField, LatticeSpec, canonical_edge
from .errors import ConfigurationError



@dataclass(frozen=True)
class FixtureEvents:
    """Scripted event lists, keyed by site tuple or canonical edge."""

    sites: Dict[Tuple[int, ...], np.ndarray]
    edges: Dict[Tuple[Tuple[int, ...], int], np.ndarray]

    @classmethod
    def from_dict(cls, sites=None, edges=None) -> "FixtureEvents":
        s = {tuple(int(c) for c in z): np.sort(np.asarray(ts, float)) for z, ts in (sites or {}).items()}
        e = {}
        for key, ts in (edges or {}).items():
            e[canonical_edge(key)] = np.sort(np.asarray(ts, float))
        return cls(s, e)


def load_fixture(path) -> FixtureEvents:
    """Read a JSON-lines fixture: {"kind": "site"|"edge", "key": ..., "times": [...]}.

    A site key is a coordinate list; an edge key is a pair of neighbouring sites.
    """
    sites, edges = {}, {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        times = [float(t) for t in rec["times"]]
        if any(t < 0 for t in times):
            raise ConfigurationError(f"{path}:{lineno}: negative event time")
        key = rec["key"]
        if rec["kind"] == "site":
            key = [key] if isinstance(key, int) else key
            sites.setdefault(tuple(int(c) for c in key), []).extend(times)
        elif rec["kind"] == "edge":
            a, b = ([k] if isinstance(k, int) else k for k in key)
            edges.setdefault(canonical_edge(a, b), []).extend(times)
        else:
            raise ConfigurationError(f"{path}:{lineno}: unknown kind {rec['kind']!r}")
    return FixtureEvents.from_dict(sites, edges)


@dataclass(frozen=True)
class GraphicalField:
    """Lazily queryable Poisson field; a pure function of its seeds.

    Event lists are regenerated on demand from the keyed hash rather than
    cached, so the object is immutable and cheap to ship to workers.
    """

    env: EnvironmentField
    field_seed: int
    slab_length: float = 1.0
    fixture: Optional[FixtureEvents] = None
    ceiling: Optional[float] = None

    def __post_init__(self):
        if not self.slab_length > 0:
            raise ConfigurationError("slab_length must be positive")
        if self.ceiling is None:
            object.__setattr__(self, "ceiling", float(self.env.lambda_max))
        if self.ceiling < self.env.dist.hi:
            raise ConfigurationError("arrow ceiling below the largest edge rate")

    @property
    def d(self) -> int:
        return self.env.spec.d

    @property
    def base(self) -> "GraphicalField":
        return self

    @property
    def space_offset(self) -> Tuple[int, ...]:
        return (0,) * self.d

    @property
    def time_offset(self) -> float:
        return 0.0

    # global-coordinate queries -------------------------------------------

    def site_times(self, z: Sequence[int], t0: float, t1: float) -> np.ndarray:
        z = tuple(int(c) for c in z)
        if self.fixture is not None:
            ts = self.fixture.sites.get(z, np.empty(0))
            return ts[(ts >= t0) & (ts < t1)]
        h = np.uint64(K.key_hash(base_hash(self.field_seed, KIND_SITE), np.asarray(z, np.int64), -1))
        return K.stream_events(h, np.uint64(0), False, float(t0), float(t1),
                               self.slab_length, self.slab_length, 1.0, 1.0, False)

    def edge_times(self, edge, t0: float, t1: float, rate: Optional[float] = None,
                   lambda_min: float = 0.0, thin_seed: Optional[int] = None) -> np.ndarray:
        """Arrow times on ``edge``; ``rate`` overrides the environment rate.

        With ``thin_seed`` set, the weak sub-stream at rate ``lambda_min`` is returned.
        """
        z, axis = canonical_edge(edge)
        lam_e = self.env.rate(z, axis) if rate is None else float(rate)
        weak = thin_seed is not None
        thr2 = 1.0
        h_thin = np.uint64(0)
        if weak:
            thr2 = lambda_min / lam_e if lam_e > 0 else 0.0
            h_thin = np.uint64(K.key_hash(base_hash(thin_seed, KIND_THIN), np.asarray(z, np.int64), axis))
        if self.fixture is not None:
            ts = self.fixture.edges.get((z, axis), np.empty(0))
            if weak:
                keep = np.array([K._fx_kept(h_thin, j, thr2, True) for j in range(len(ts))], bool)
                ts = ts[keep] if len(ts) else ts
            return ts[(ts >= t0) & (ts < t1)]
        thr1 = lam_e / self.ceiling if self.ceiling > 0 else 1.0
        h = np.uint64(K.key_hash(base_hash(self.field_seed, KIND_EDGE), np.asarray(z, np.int64), axis))
        return K.stream_events(h, h_thin, True, float(t0), float(t1), self.slab_length,
                               self.ceiling * self.slab_length, thr1, thr2, weak)


@dataclass(frozen=True)
class FieldView:
    """The field seen from space-time point (space_offset, time_offset)."""

    base: GraphicalField
    space_offset: Tuple[int, ...] = field(default=())
    time_offset: float = 0.0

    def __post_init__(self):
        if not self.space_offset:
            object.__setattr__(self, "space_offset", (0,) * self.base.d)
        if self.time_offset < 0:
            raise ValueError("time offset must be non-negative")

    @property
    def env(self) -> EnvironmentField:
        return self.base.env

    @property
    def d(self) -> int:
        return self.base.d


def field_new(env: EnvironmentField, field_seed: int, slab_length: float = 1.0,
              fixture: Optional[FixtureEvents] = None, ceiling: Optional[float] = None) -> GraphicalField:
    return GraphicalField(env, int(field_seed), float(slab_length), fixture, ceiling)


def make_view(f, x: Sequence[int], t: float) -> FieldView:
    if t < 0:
        raise ValueError("view time must be non-negative")
    if len(x) != f.d:
        raise ValueError("view offset has wrong dimension")
    off = tuple(int(a) + int(b) for a, b in zip(f.space_offset, x))
    return FieldView(f.base, off, f.time_offset + float(t))


def _check_interval(t0, t1):
    if t0 < 0 or t1 < 0:
        raise ValueError("event queries need non-negative times")
    if t1 < t0:
        raise ValueError("interval end before start")


def events_on_site(f, z: Sequence[int], t0: float, t1: float) -> np.ndarray:
    """Death times at site ``z`` in [t0, t1), in the coordinates of ``f``."""
    _check_interval(t0, t1)
    if t1 == t0:
        return np.empty(0)
    g = tuple(int(a) + int(b) for a, b in zip(z, f.space_offset))
    s = f.time_offset
    return f.base.site_times(g, s + t0, s + t1) - s


def events_on_edge(f, e, t0: float, t1: float) -> np.ndarray:
    """Arrow times on edge ``e`` in [t0, t1), in the coordinates of ``f``."""
    _check_interval(t0, t1)
    if t1 == t0:
        return np.empty(0)
    z, axis = canonical_edge(e)
    g = tuple(int(a) + int(b) for a, b in zip(z, f.space_offset))
    s = f.time_offset
    return f.base.edge_times((g, axis), s + t0, s + t1) - s


# ----------------------------------------------------------------------------
# kernel argument packing

MODE_CONTACT = "contact"
MODE_RICHARDSON = "richardson"


@dataclass(frozen=True)
class KernelArgs:
    ip: np.ndarray
    fp: np.ndarray
    up: np.ndarray
    offset: np.ndarray
    env_shift: np.ndarray
    toff: float
    fx_ptr: np.ndarray
    fx_t: np.ndarray

    def with_toff(self, toff: float) -> "KernelArgs":
        return KernelArgs(self.ip, self.fp, self.up, self.offset, self.env_shift, float(toff),
                          self.fx_ptr, self.fx_t)


def _fixture_csr(fx: FixtureEvents, window: LatticeSpec, offset) -> Tuple[np.ndarray, np.ndarray]:
    d, L = window.d, window.L
    n = window.n_sites
    lists = [np.empty(0)] * (n * (1 + d))
    off = np.asarray(offset, np.int64)
    for z, ts in fx.sites.items():
        loc = tuple(np.asarray(z) - off)
        if window.contains(loc):
            lists[window.index(loc)] = ts
    for (z, axis), ts in fx.edges.items():
        loc = tuple(np.asarray(z) - off)
        if window.contains(loc) and loc[axis] < L:
            lists[n + window.index(loc) * d + axis] = ts
    ptr = np.zeros(len(lists) + 1, np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    times = np.concatenate(lists) if ptr[-1] else np.empty(0)
    return ptr, times.astype(float)


def kernel_args(f, window: LatticeSpec, mode: str = MODE_CONTACT, lam: Optional[float] = None,
                lambda_min: float = 0.0, thin_seed: Optional[int] = None) -> KernelArgs:
    """Pack a field (or view) and window for the compiled kernels."""
    base = f.base
    env = base.env
    if window.d != env.spec.d:
        raise ConfigurationError("window dimension differs from environment dimension")
    richardson = mode == MODE_RICHARDSON
    if richardson and lam is None:
        raise ConfigurationError("Richardson dynamics need a rate")
    if richardson and lam > base.ceiling:
        raise ConfigurationError(f"Richardson rate {lam} above the arrow ceiling {base.ceiling}")
    weak = thin_seed is not None
    fixture_mode = base.fixture is not None
    ip = np.array([window.d, window.L, env.kind_code, 0 if richardson else 1,
                   1 if fixture_mode else 0, 1 if weak else 0], np.int64)
    fp = np.array([base.slab_length, base.ceiling, env.dist.lo, env.dist.lo, env.dist.hi, env.dist.p,
                   float(lambda_min), float(lam) if richardson else -1.0])
    up = np.array([base_hash(base.field_seed, KIND_SITE), base_hash(base.field_seed, KIND_EDGE),
                   env.hash_base, base_hash(thin_seed if weak else 0, KIND_THIN)], np.uint64)
    offset = np.asarray(f.space_offset, np.int64)
    if fixture_mode:
        fx_ptr, fx_t = _fixture_csr(base.fixture, window, offset)
    else:
        fx_ptr, fx_t = np.zeros(1, np.int64), np.empty(0)
    return KernelArgs(ip, fp, up, offset, np.asarray(env.shift, np.int64), float(f.time_offset),
                      fx_ptr, fx_t)
