"""Contact process and Richardson model driven by a graphical field."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .environment import LatticeSpec
from .field import MODE_CONTACT, MODE_RICHARDSON, KernelArgs, kernel_args, make_view

Site = Tuple[int, ...]


@dataclass(frozen=True)
class Configuration:
    """A finite set of infected sites."""

    infected: FrozenSet[Site]

    @classmethod
    def of(cls, sites: Iterable[Sequence[int]]) -> "Configuration":
        return cls(frozenset(tuple(int(c) for c in s) for s in sites))

    def __len__(self):
        return len(self.infected)

    def __contains__(self, z):
        return tuple(z) in self.infected

    def __iter__(self):
        return iter(sorted(self.infected))

    def __le__(self, other):
        return self.infected <= other.infected


def _as_config(initial) -> Configuration:
    if isinstance(initial, Configuration):
        return initial
    return Configuration.of(initial)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State-change log of one run; times are strictly after ``t_start``.

    Sites are stored as window indices (see ``LatticeSpec.index``).
    """

    window: LatticeSpec
    initial: Configuration
    t_start: float
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    ops: np.ndarray  # +1 infection, -1 recovery
    tau: Optional[float]  # None when alive at the horizon
    truncated: bool
    final_count: int
    model: str = MODE_CONTACT

    @property
    def censored(self) -> bool:
        return self.tau is None

    @property
    def alive(self) -> bool:
        return self.tau is None

    @property
    def events(self):
        return [(float(t), self.window.site(int(s)), "+" if o > 0 else "-")
                for t, s, o in zip(self.times, self.sites, self.ops)]

    @cached_property
    def init_mask(self) -> np.ndarray:
        m = np.zeros(self.window.n_sites, np.bool_)
        for z in self.initial.infected:
            m[self.window.index(z)] = True
        return m

    @cached_property
    def grouped(self):
        """Per-site CSR view (ptr, times, ops) of the log, each slice time-ordered."""
        ptr, order = K.group_by_site(self.sites, self.window.n_sites)
        return ptr, self.times[order], self.ops[order]

    def mask_at(self, t: float) -> np.ndarray:
        ptr, times, ops = self.grouped
        return K.states_at(ptr, times, ops, self.init_mask, float(t))

    def hit_times(self) -> np.ndarray:
        """First infection time of every window site (NaN if never hit)."""
        ptr, times, ops = self.grouped
        return K.first_hits(ptr, times, ops, self.init_mask, self.t_start)


def _sites_of(window: LatticeSpec, mask: np.ndarray) -> Configuration:
    return Configuration(frozenset(window.site(int(i)) for i in np.flatnonzero(mask)))


def _init_indices(window: LatticeSpec, initial: Configuration) -> np.ndarray:
    for z in initial.infected:
        if not window.contains(z):
            raise ValueError(f"initial site {z} outside the window")
    return np.array(sorted(window.index(z) for z in initial.infected), np.int64)


def _run(args: KernelArgs, window, initial, t_start, horizon, model) -> Trajectory:
    initial = _as_config(initial)
    if not horizon > t_start:
        raise ValueError("horizon must exceed the start time")
    if t_start < 0:
        raise ValueError("start time must be non-negative")
    init = _init_indices(window, initial)
    lt, ls, lo, _, tau, trunc, cnt = K.forward(
        args.ip, args.fp, args.up, args.offset, args.env_shift, args.toff,
        float(t_start), float(horizon), init, True, args.fx_ptr, args.fx_t)
    return Trajectory(window, initial, float(t_start), float(horizon), lt, ls, lo,
                      None if math.isnan(tau) else float(tau), bool(trunc), int(cnt), model)


def run_contact(f, initial, t_start: float, horizon: float, window: Optional[LatticeSpec] = None,
                thin: Optional[Tuple[float, int]] = None) -> Trajectory:
    """Contact process from ``initial`` at ``t_start`` up to ``horizon``.

    ``thin = (lambda_min, thin_seed)`` runs on the weak thinned arrows instead.
    """
    window = window or f.env.spec
    if thin is None:
        args = kernel_args(f, window, MODE_CONTACT)
    else:
        args = kernel_args(f, window, MODE_CONTACT, lambda_min=thin[0], thin_seed=thin[1])
    return _run(args, window, initial, t_start, horizon, MODE_CONTACT)


def run_richardson(f, lam: float, initial, t_start: float, horizon: float,
                   window: Optional[LatticeSpec] = None) -> Trajectory:
    """Growth-only dynamics on the base arrows thinned to rate ``lam``; deaths ignored."""
    window = window or f.env.spec
    args = kernel_args(f, window, MODE_RICHARDSON, lam=lam)
    return _run(args, window, initial, t_start, horizon, MODE_RICHARDSON)


def infected_at(traj: Trajectory, t: float) -> Configuration:
    if t < traj.t_start or t > traj.horizon:
        raise ValueError(f"time {t} outside [{traj.t_start}, {traj.horizon}]")
    return _sites_of(traj.window, traj.mask_at(t))


def hitting_time(traj: Trajectory, x: Sequence[int]) -> Optional[float]:
    x = tuple(int(c) for c in x)
    if x in traj.initial:
        return traj.t_start
    if not traj.window.contains(x):
        return None
    i = traj.window.index(x)
    hit = np.flatnonzero((traj.sites == i) & (traj.ops > 0))
    return float(traj.times[hit[0]]) if len(hit) else None


def cumulative_hit_set(traj: Trajectory, t: float) -> FrozenSet[Site]:
    if t < traj.t_start or t > traj.horizon:
        raise ValueError(f"time {t} outside [{traj.t_start}, {traj.horizon}]")
    k = np.searchsorted(traj.times, t, side="right")
    idx = np.unique(traj.sites[:k][traj.ops[:k] > 0])
    return frozenset(traj.initial.infected) | frozenset(traj.window.site(int(i)) for i in idx)


def run_coupled_pair(f, window: Optional[LatticeSpec] = None, horizon: float = 1.0):
    """Processes from {0} and from the whole window on one field."""
    window = window or f.env.spec
    zero = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    full_init = Configuration(frozenset(window.site(i) for i in range(window.n_sites)))
    full = run_contact(f, full_init, 0.0, horizon, window)
    return zero, full


def agreement_times(traj_zero: Trajectory, traj_full: Trajectory) -> np.ndarray:
    """Per site, the earliest time from which both runs agree up to the horizon (inf if never)."""
    a = traj_zero.grouped
    b = traj_full.grouped
    return K.agreement_start(a[0], a[1], a[2], traj_zero.init_mask,
                             b[0], b[1], b[2], traj_full.init_mask, traj_zero.t_start)


@dataclass(frozen=True)
class CoupledZone:
    K_t: FrozenSet[Site]
    K_prime_t: FrozenSet[Site]
    censored: bool


def coupled_zone(traj_zero: Trajectory, traj_full: Trajectory, t: float,
                 horizon: Optional[float] = None) -> CoupledZone:
    """K_t and the horizon-censored K'_t of the coupled pair."""
    horizon = traj_zero.horizon if horizon is None else horizon
    if t > horizon or horizon > traj_zero.horizon:
        raise ValueError("need t <= horizon <= trajectory horizon")
    w = traj_zero.window
    kt = traj_zero.mask_at(t) == traj_full.mask_at(t)
    if horizon < traj_zero.horizon:
        # agreement must be checked on [t, horizon] only
        start = _agreement_until(traj_zero, traj_full, horizon)
    else:
        start = agreement_times(traj_zero, traj_full)
    kp = start <= t
    both_dead = traj_zero.tau is not None and traj_full.tau is not None
    return CoupledZone(_sites_of(w, kt).infected, _sites_of(w, kp).infected, not both_dead)


def _clip(traj: Trajectory, horizon: float) -> Trajectory:
    k = np.searchsorted(traj.times, horizon, side="right")
    tau = traj.tau if traj.tau is not None and traj.tau <= horizon else None
    return Trajectory(traj.window, traj.initial, traj.t_start, horizon, traj.times[:k],
                      traj.sites[:k], traj.ops[:k], tau, traj.truncated, traj.final_count, traj.model)


def _agreement_until(traj_zero, traj_full, horizon):
    return agreement_times(_clip(traj_zero, horizon), _clip(traj_full, horizon))


def semigroup_check(f, A, t: float, s: float, horizon: Optional[float] = None,
                    window: Optional[LatticeSpec] = None) -> bool:
    """Whether the run over [0, t+s] equals a run over [0, s] from its time-t state on the shifted view."""
    if t < 0 or s < 0:
        raise ValueError("t and s must be non-negative")
    if horizon is not None and t + s > horizon:
        raise ValueError("t + s exceeds the horizon")
    window = window or f.env.spec
    A = _as_config(A)
    if t + s == 0:
        return True
    whole = run_contact(f, A, 0.0, t + s, window)
    end = infected_at(whole, t + s)
    mid = infected_at(whole, t) if t > 0 else A
    if s == 0:
        return True
    second = run_contact(make_view(f, (0,) * window.d, t), mid, 0.0, s, window)
    return infected_at(second, s) == end


# ----------------------------------------------------------------------------
# export


def write_events_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for t, z, op in traj.events:
            fh.write(json.dumps({"t": float(format(t, ".17g")), "site": list(z), "op": op}) + "\n")


SUMMARY_FIELDS = ["seed", "tau", "censored", "truncated", "final_count"]


def summary_row(seed: int, traj: Trajectory) -> dict:
    return {
        "seed": seed,
        "tau": "" if traj.tau is None else format(traj.tau, ".17g"),
        "censored": int(traj.censored),
        "truncated": int(traj.truncated),
        "final_count": traj.final_count,
    }


def write_summary_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        w.writerows(rows)


# ----------------------------------------------------------------------------
# window sizing


def hull_radius(traj: Trajectory, t: Optional[float] = None) -> int:
    """Sup-norm radius of the cumulative hit set at time t."""
    t = traj.horizon if t is None else t
    k = np.searchsorted(traj.times, t, side="right")
    idx = np.unique(np.concatenate([np.flatnonzero(traj.init_mask), traj.sites[:k][traj.ops[:k] > 0]]))
    if len(idx) == 0:
        return 0
    W, L = traj.window.width, traj.window.L
    r = 0
    for a in range(traj.window.d):
        r = max(r, int(np.abs((idx // W ** a) % W - L).max()))
    return r


def pilot_speed(field_factory, seeds: Sequence[int], T: float, window: LatticeSpec,
                quantile: float = 0.99) -> float:
    """Growth speed M with H_T inside B_{MT} for the given quantile of pilot runs."""
    radii = []
    for s in seeds:
        f = field_factory(s)
        tr = run_contact(f, [(0,) * window.d], 0.0, T, window)
        radii.append(hull_radius(tr))
    return float(np.quantile(radii, quantile)) / T


def window_radius_for(speed: float, horizon: float, margin: int = 5) -> int:
    return int(math.ceil(speed * horizon)) + margin
