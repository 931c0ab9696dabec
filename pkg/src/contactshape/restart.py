"""Restart coupling of the environment process with a constant lambda_min process."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .dynamics import run_contact
from .environment import LatticeSpec, canonical_edge
from .errors import ConfigurationError
from .field import MODE_CONTACT, GraphicalField, kernel_args

DIED = "died"
SURVIVED = "survived"
CENSORED = "censored"


@dataclass(frozen=True)
class ThinnedPair:
    """Strong field plus a weak arrow sub-stream of rate lambda_min on shared deaths.

    Each strong arrow on edge e is kept with probability lambda_min / lambda_e,
    decided by a hash keyed on (thin_seed, edge, slab, event index).
    """

    strong_field: GraphicalField
    lambda_min: float
    thin_seed: int

    @property
    def env(self):
        return self.strong_field.env

    def strong_events_on_edge(self, e, t0: float, t1: float) -> np.ndarray:
        return self.strong_field.edge_times(e, t0, t1)

    def weak_events_on_edge(self, e, t0: float, t1: float) -> np.ndarray:
        return self.strong_field.edge_times(canonical_edge(e), t0, t1, lambda_min=self.lambda_min,
                                            thin_seed=self.thin_seed)

    def deaths(self, z, t0: float, t1: float) -> np.ndarray:
        return self.strong_field.site_times(z, t0, t1)


def thinned_coupling(field: GraphicalField, lambda_min: float, thin_seed: int) -> ThinnedPair:
    if lambda_min < 0:
        raise ConfigurationError("lambda_min must be non-negative")
    if field.fixture is None and lambda_min > field.env.dist.lo:
        raise ConfigurationError(
            f"lambda_min {lambda_min} exceeds the smallest possible edge rate {field.env.dist.lo}")
    return ThinnedPair(field, float(lambda_min), int(thin_seed))


@dataclass(frozen=True)
class RestartRecord:
    u: Tuple[float, ...]
    z: Tuple[Tuple[int, ...], ...]
    K: int
    u_K: Optional[float]
    outcome: str
    tau: Optional[float]  # strong lifetime, None if alive at the horizon

    @property
    def censored(self) -> bool:
        return self.outcome == CENSORED


def _lexmin(window: LatticeSpec, mask: np.ndarray):
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return None
    return min(window.site(int(i)) for i in idx)


def run_restart(pair: ThinnedPair, window: Optional[LatticeSpec] = None, horizon: float = 100.0,
                T_surv: Optional[float] = None) -> RestartRecord:
    """Restart ladder: weak copies from the lexicographic minimum of the strong process."""
    window = window or pair.env.spec
    T_surv = horizon / 2 if T_surv is None else T_surv
    if not 0 < T_surv <= horizon:
        raise ValueError("need 0 < T_surv <= horizon")
    f = pair.strong_field
    strong = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    weak = kernel_args(f, window, MODE_CONTACT, lambda_min=pair.lambda_min, thin_seed=pair.thin_seed)
    us, zs = [0.0], [(0,) * window.d]
    u = 0.0
    while True:
        k = len(us) - 1
        mask = strong.mask_at(u)
        if not mask.any():
            # the strong process died exactly at u
            return RestartRecord(tuple(us), tuple(zs[:-1]), k, u, DIED, strong.tau)
        z = _lexmin(window, mask)
        zs[-1] = z
        if u > horizon - T_surv:
            return RestartRecord(tuple(us), tuple(zs), k, None, CENSORED, strong.tau)
        tau = K.forward(weak.ip, weak.fp, weak.up, weak.offset, weak.env_shift, weak.toff, float(u),
                        float(horizon), np.array([window.index(z)], np.int64), False,
                        weak.fx_ptr, weak.fx_t)[4]
        if math.isnan(tau):
            return RestartRecord(tuple(us), tuple(zs), k, u, SURVIVED, strong.tau)
        u = float(tau)
        us.append(u)
        zs.append(None)


RESTART_FIELDS = ["seed", "K", "u_K", "outcome", "censored"]


def restart_row(seed: int, rec: RestartRecord) -> dict:
    return {"seed": seed, "K": rec.K, "u_K": "" if rec.u_K is None else format(rec.u_K, ".17g"),
            "outcome": rec.outcome, "censored": int(rec.censored)}


def write_restart_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESTART_FIELDS)
        w.writeheader()
        w.writerows(rows)
