"""Essential hitting times: the u_k / v_k ladder, K(x), sigma(x) and the defect r(x, y).

Infinite times are replaced by horizon surrogates.  A restart at (x, u) counts
as surviving when the process started from {x} at time u is still alive at
the horizon, and ``u <= horizon - T_surv`` is required for the verdict to be
trusted; later restarts leave the record censored.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .dynamics import Trajectory, run_contact
from .environment import LatticeSpec
from .errors import PreconditionError
from .field import MODE_CONTACT, kernel_args, make_view

SURVIVAL = "resolved-survival"
DEATH = "resolved-death"
CENSORED = "censored-horizon"
_STATUS = {K.STATUS_SURVIVAL: SURVIVAL, K.STATUS_DEATH: DEATH, K.STATUS_CENSORED: CENSORED}


@dataclass(frozen=True)
class EssentialHittingRecord:
    x: Tuple[int, ...]
    u: Tuple[float, ...]  # u[0] = 0, then u_1 .. u_K (and a pending u when censored)
    v: Tuple[float, ...]  # v[0] = 0; v_K = inf on survival
    K: int
    sigma: Optional[float]
    t_first: Optional[float]
    status: str

    @property
    def resolved(self) -> bool:
        return self.status != CENSORED

    @property
    def survived(self) -> bool:
        return self.status == SURVIVAL


def _check_params(horizon, T_surv):
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not 0 < T_surv <= horizon:
        raise ValueError("need 0 < T_surv <= horizon")


def _ladder(f, origin: Trajectory, x, window: LatticeSpec, horizon: float, T_surv: float):
    x = tuple(int(c) for c in x)
    if not window.contains(x):
        raise ValueError(f"target {x} outside the window")
    args = kernel_args(f, window, MODE_CONTACT)
    ptr, times, ops = origin.grouped
    init = origin.init_mask
    xi = window.index(x)
    origin_dead = origin.tau is not None
    u_list, v_list = [0.0], [0.0]
    u = 0.0 if init[xi] else K._next_infection(ptr, times, ops, init, xi, 0.0)
    t_first = None if math.isnan(u) else float(u)
    one = np.array([xi], np.int64)
    while True:
        if math.isnan(u):
            k = len(u_list) - 1
            if origin_dead:
                return EssentialHittingRecord(x, tuple(u_list), tuple(v_list), k, u_list[-1], t_first, DEATH)
            return EssentialHittingRecord(x, tuple(u_list), tuple(v_list), k, None, t_first, CENSORED)
        u_list.append(float(u))
        k = len(u_list) - 1
        if u > horizon - T_surv:
            return EssentialHittingRecord(x, tuple(u_list), tuple(v_list), k, None, t_first, CENSORED)
        tau = K.forward(args.ip, args.fp, args.up, args.offset, args.env_shift, args.toff,
                        float(u), float(horizon), one, False, args.fx_ptr, args.fx_t)[4]
        if math.isnan(tau):
            v_list.append(math.inf)
            return EssentialHittingRecord(x, tuple(u_list), tuple(v_list), k, float(u), t_first, SURVIVAL)
        v_list.append(float(tau))
        u = K._next_infection(ptr, times, ops, init, xi, float(tau))


def essential_hitting(f, x: Sequence[int], window: Optional[LatticeSpec] = None,
                      horizon: float = 100.0, T_surv: Optional[float] = None,
                      origin: Optional[Trajectory] = None) -> EssentialHittingRecord:
    """Ladder for one target on field (or view) ``f``; the origin run may be supplied."""
    window = window or f.env.spec
    T_surv = horizon / 2 if T_surv is None else T_surv
    _check_params(horizon, T_surv)
    if origin is None:
        origin = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    return _ladder(f, origin, x, window, horizon, T_surv)


def shifted_essential_hitting(f, anchor, y: Sequence[int], window: Optional[LatticeSpec] = None,
                              horizon: float = 100.0, T_surv: Optional[float] = None) -> EssentialHittingRecord:
    """sigma(y) composed with the shift to (x, sigma(x)); ``anchor`` is a record or (x, sigma_x)."""
    if isinstance(anchor, EssentialHittingRecord):
        if not anchor.survived:
            raise PreconditionError("anchor record is not a resolved survival")
        x, sx = anchor.x, anchor.sigma
    else:
        x, sx = anchor
        if sx is None or not math.isfinite(sx):
            raise PreconditionError("anchor time must be finite")
    return essential_hitting(make_view(f, x, sx), y, window, horizon, T_surv)


def sigma_minus_t(record: EssentialHittingRecord) -> float:
    if not record.resolved or record.sigma is None or record.t_first is None:
        raise PreconditionError("record is not resolved with a finite first hit")
    return record.sigma - record.t_first


# ----------------------------------------------------------------------------
# defect


@dataclass(frozen=True)
class DefectSample:
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    sigma_x: Optional[float]
    sigma_y_shifted: Optional[float]
    sigma_xy: Optional[float]
    r: Optional[float]
    censored: bool


def subadditivity_defect(f, x: Sequence[int], y: Sequence[int], window: Optional[LatticeSpec] = None,
                         horizon: float = 100.0, T_surv: Optional[float] = None,
                         origin: Optional[Trajectory] = None) -> DefectSample:
    """r(x, y) = (sigma(x+y) - sigma(x) - sigma(y) o shift_x)^+ on one realization."""
    window = window or f.env.spec
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    xy = tuple(a + b for a, b in zip(x, y))
    if origin is None:
        origin = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    rx = essential_hitting(f, x, window, horizon, T_surv, origin=origin)
    if not rx.survived:
        return DefectSample(x, y, rx.sigma, None, None, None, True)
    rxy = essential_hitting(f, xy, window, horizon, T_surv, origin=origin)
    ry = shifted_essential_hitting(f, rx, y, window, horizon, T_surv)
    if not (rxy.survived and ry.survived):
        return DefectSample(x, y, rx.sigma, ry.sigma, rxy.sigma, None, True)
    r = max(0.0, rxy.sigma - (rx.sigma + ry.sigma))
    return DefectSample(x, y, rx.sigma, ry.sigma, rxy.sigma, r, False)


# ----------------------------------------------------------------------------
# all targets at once, via the backward sweep


@dataclass(frozen=True)
class LadderBatch:
    """Ladder summaries for many targets on one realization (window indices)."""

    targets: np.ndarray
    K: np.ndarray
    sigma: np.ndarray
    t_first: np.ndarray
    status: np.ndarray  # kernel status codes
    origin: Trajectory

    def status_names(self):
        return [_STATUS[int(s)] for s in self.status]


def essential_batch(f, window: Optional[LatticeSpec] = None, horizon: float = 100.0,
                    T_surv: Optional[float] = None, targets=None, t_cap: float = math.inf,
                    origin: Optional[Trajectory] = None) -> LadderBatch:
    """Ladders for ``targets`` (default: all window sites) sharing one backward sweep.

    Ladders whose restart time passes ``t_cap`` stop early as censored, which
    is enough to decide ``sigma <= t_cap``.
    """
    window = window or f.env.spec
    T_surv = horizon / 2 if T_surv is None else T_surv
    _check_params(horizon, T_surv)
    if origin is None:
        origin = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    if targets is None:
        targets = np.arange(window.n_sites, dtype=np.int64)
    else:
        targets = np.asarray(targets, np.int64)
    a = kernel_args(f, window, MODE_CONTACT)
    full = np.arange(window.n_sites, dtype=np.int64)
    dt, ds, dop, _, _ = K.dual(a.ip, a.fp, a.up, a.offset, a.env_shift, a.toff, 0.0, float(horizon),
                                full, a.fx_ptr, a.fx_t)
    d_ptr, order = K.group_by_site(ds, window.n_sites)
    d_init = np.ones(window.n_sites, np.bool_)
    o_ptr, o_t, o_op = origin.grouped
    Kc, sigma, tfirst, status, _ = K.ladders(
        a.ip, a.fp, a.up, a.offset, a.env_shift, a.toff, 0.0, float(horizon), float(T_surv), targets,
        o_ptr, o_t, o_op, origin.init_mask, origin.tau is not None,
        d_ptr, dt[order], dop[order], d_init, a.fx_ptr, a.fx_t, float(t_cap))
    return LadderBatch(targets, Kc, sigma, tfirst, status, origin)


# ----------------------------------------------------------------------------
# export

RECORD_FIELDS = ["seed", "x", "K", "sigma", "t_first", "status"]
DEFECT_FIELDS = ["seed", "x", "y", "sigma_x", "sigma_y_shifted", "sigma_xy", "r", "censored"]


def _fmt(v):
    return "" if v is None else format(float(v), ".17g")


def _site(z):
    return " ".join(str(c) for c in z)


def record_row(seed: int, rec: EssentialHittingRecord) -> dict:
    return {"seed": seed, "x": _site(rec.x), "K": rec.K, "sigma": _fmt(rec.sigma),
            "t_first": _fmt(rec.t_first), "status": rec.status}


def defect_row(seed: int, s: DefectSample) -> dict:
    return {"seed": seed, "x": _site(s.x), "y": _site(s.y), "sigma_x": _fmt(s.sigma_x),
            "sigma_y_shifted": _fmt(s.sigma_y_shifted), "sigma_xy": _fmt(s.sigma_xy),
            "r": _fmt(s.r), "censored": int(s.censored)}


def write_rows(rows, fields, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
