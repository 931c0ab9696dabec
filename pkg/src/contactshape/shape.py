"""Time constant mu, limit ball A_mu, normalized shapes and tail fits."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull

from . import _kernels as K
from .dynamics import Trajectory, agreement_times, run_contact
from .environment import LatticeSpec
from .errors import EstimationError, PreconditionError
from .essential import LadderBatch, essential_batch

Z95 = 1.959963984540054


# ----------------------------------------------------------------------------
# survival probability


@dataclass(frozen=True)
class SurvivalEstimate:
    rho_hat: float
    ci: Tuple[float, float]
    survived: int
    replicas: int


def wilson(k: int, n: int, z: float = Z95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def survival_probability(field_factory: Callable, seeds: Sequence[int], T_surv: float,
                         window: Optional[LatticeSpec] = None) -> SurvivalEstimate:
    """Fraction of runs from {0} still alive at T_surv, with a Wilson interval."""
    seeds = list(seeds)
    if len(seeds) < 100:
        raise PreconditionError("survival estimation needs at least 100 replicas")
    k = 0
    for s in seeds:
        f = field_factory(s)
        w = window or f.env.spec
        k += run_contact(f, [(0,) * w.d], 0.0, T_surv, w).alive
    return SurvivalEstimate(k / len(seeds), wilson(k, len(seeds)), k, len(seeds))


# ----------------------------------------------------------------------------
# time constant


@dataclass(frozen=True)
class MuEstimate:
    direction: Tuple[int, ...]
    n_grid: Tuple[int, ...]
    means: np.ndarray  # mean of sigma(n x) / n per n
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    mu_hat: float
    mu_se: float
    replicas: int  # resolved replicas used at every n
    samples: np.ndarray = field(repr=False)  # (replicas, len(n_grid)) of sigma(n x) / n

    @property
    def ci(self) -> Tuple[float, float]:
        return self.mu_hat - Z95 * self.mu_se, self.mu_hat + Z95 * self.mu_se


def _extrapolate(ns: np.ndarray, means: np.ndarray, se: np.ndarray) -> float:
    """Weighted least squares of mean_n = mu + b / n; returns mu."""
    if len(ns) == 1:
        return float(means[0])
    w = 1.0 / np.maximum(se, 1e-12) ** 2
    X = np.stack([np.ones_like(ns, dtype=float), 1.0 / ns], axis=1)
    A = X.T @ (X * w[:, None])
    b = X.T @ (w * means)
    return float(np.linalg.solve(A, b)[0])


def mu_from_samples(direction, n_grid, samples: np.ndarray, n_boot: int = 200, seed: int = 0) -> MuEstimate:
    """Aggregate per-replica sigma(n x)/n rows (common random numbers across n)."""
    samples = np.asarray(samples, float)
    m = samples.shape[0]
    if m < 10:
        raise EstimationError(f"only {m} resolved replicas")
    ns = np.asarray(n_grid, float)
    means = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(m)
    mu = _extrapolate(ns, means, se)
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        s = samples[rng.integers(0, m, m)]
        boot[b] = _extrapolate(ns, s.mean(axis=0), np.maximum(s.std(axis=0, ddof=1), 1e-12) / math.sqrt(m))
    return MuEstimate(tuple(int(c) for c in direction), tuple(int(n) for n in n_grid), means,
                      means - Z95 * se, means + Z95 * se, mu, float(boot.std(ddof=1)), m, samples)


def sigma_row_status(f, direction, n_grid, window: LatticeSpec, horizon: float, T_surv: float):
    """(row, status) with status one of ok, died, truncated, censored; row is None unless ok.

    A truncated origin run is rejected, which drops the fastest replicas; callers
    should report the count, since a nonzero count biases sigma upward.
    """
    direction = np.asarray(direction, np.int64)
    if not direction.any():
        return np.zeros(len(n_grid)), "ok"
    origin = run_contact(f, [(0,) * window.d], 0.0, horizon, window)
    if not origin.alive:
        return None, "died"
    if origin.truncated:
        return None, "truncated"
    targets = [window.index(tuple(int(n) * direction)) for n in n_grid]
    b = essential_batch(f, window, horizon, T_surv, targets=targets, origin=origin)
    if np.any(b.status != K.STATUS_SURVIVAL):
        return None, "censored"
    return b.sigma / np.asarray(n_grid, float), "ok"


def sigma_row(f, direction, n_grid, window: LatticeSpec, horizon: float, T_surv: float):
    """sigma(n x)/n for every n on one field, or None if the replica is rejected."""
    return sigma_row_status(f, direction, n_grid, window, horizon, T_surv)[0]


def estimate_mu_direction(field_factory: Callable, x, n_grid, seeds: Sequence[int],
                          window: LatticeSpec, horizon: float, T_surv: float) -> MuEstimate:
    rows = []
    for s in seeds:
        r = sigma_row(field_factory(s), x, n_grid, window, horizon, T_surv)
        if r is not None:
            rows.append(r)
    if not rows:
        raise EstimationError("no resolved replicas")
    return mu_from_samples(x, n_grid, np.array(rows), seed=int(seeds[0]) if len(seeds) else 0)


# ----------------------------------------------------------------------------
# the mu-ball


def lattice_symmetries(d: int):
    """Signed permutation matrices of Z^d."""
    mats = []
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            M = np.zeros((d, d))
            for i, (p, s) in enumerate(zip(perm, signs)):
                M[i, p] = s
            mats.append(M)
    return mats


class MuNorm:
    """Gauge of the symmetrized convex hull of the points x / mu_hat(x)."""

    def __init__(self, estimates: Dict[Tuple[int, ...], float], d: int):
        if not estimates:
            raise PreconditionError("need at least one directional estimate")
        self.d = d
        self.estimates = {tuple(int(c) for c in k): float(v) for k, v in estimates.items()}
        pts = []
        for x, mu in self.estimates.items():
            if len(x) != d:
                raise ValueError(f"direction {x} does not have dimension {d}")
            if mu <= 0:
                raise EstimationError(f"non-positive mu_hat in direction {x}")
            v = np.asarray(x, float) / mu
            for M in lattice_symmetries(d):
                pts.append(M @ v)
        pts = np.unique(np.round(np.array(pts), 15), axis=0)
        if d == 1:
            self._scale = 1.0 / np.abs(pts).max()
            self._eq = None
        else:
            hull = ConvexHull(pts)
            eq = hull.equations  # n . y + off <= 0 inside, off < 0
            self._eq = eq[:, :d] / (-eq[:, d:])

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, float))
        if self.d == 1:
            return np.abs(y[:, 0]) * self._scale
        return np.max(y @ self._eq.T, axis=1)

    @property
    def width(self) -> float:
        """Norm of the unit cell diagonal."""
        return float(self(np.ones((1, self.d)))[0])


# ----------------------------------------------------------------------------
# normalized shapes

KINDS = ("H", "G", "K'G")


@dataclass(frozen=True)
class ShapeSnapshot:
    t: float
    kind: str
    sites: np.ndarray  # (n, d) integer lower corners of the cells z + [0,1]^d
    censored: bool = False
    extinct: bool = False  # the process from the origin is empty at time t

    @property
    def cells(self) -> np.ndarray:
        """Lower corners of the fattened cells, divided by t."""
        return self.sites / self.t

    def as_set(self):
        return {tuple(int(c) for c in z) for z in self.sites}


def shape_sets(window: LatticeSpec, origin: Trajectory, full: Trajectory, batch: LadderBatch,
               t: float, agree: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Boolean masks over window sites for H_t, G_t and K'_t n G_t."""
    hit = origin.hit_times()
    H = np.nan_to_num(hit, nan=np.inf) <= t
    sig = np.full(window.n_sites, np.inf)
    ok = batch.status == K.STATUS_SURVIVAL
    sig[batch.targets[ok]] = batch.sigma[ok]
    G = sig <= t
    if agree is None:
        agree = agreement_times(origin, full)
    return {"H": H, "G": G, "K'G": (agree <= t) & G}


def extract_shape(window: LatticeSpec, origin: Trajectory, full: Trajectory, batch: LadderBatch,
                  t: float, agree: Optional[np.ndarray] = None) -> Dict[str, ShapeSnapshot]:
    if origin.truncated:
        raise PreconditionError("truncated trajectory cannot be used for shape statistics")
    if t > origin.horizon:
        raise PreconditionError("t beyond the horizon")
    masks = shape_sets(window, origin, full, batch, t, agree)
    coords = window.coords()
    # the verdict "for all s >= t" is cut at the horizon unless both runs died
    cens = not (origin.tau is not None and full.tau is not None)
    dead = origin.tau is not None and origin.tau <= t
    return {k: ShapeSnapshot(float(t), k, coords[m], cens if k == "K'G" else False, dead)
            for k, m in masks.items()}


def chain_holds(snaps: Dict[str, ShapeSnapshot]) -> bool:
    h, g, kg = (snaps[k].as_set() for k in KINDS)
    return kg <= g <= h


@dataclass(frozen=True)
class InclusionResult:
    passed: bool
    inner_ok: bool
    outer_ok: bool
    missing: np.ndarray  # sites needed for the inner ball but absent
    outside: np.ndarray  # member cells leaving the outer ball


def _cell_min_norm(norm: MuNorm, z: np.ndarray) -> np.ndarray:
    # an absolute norm is minimised over z + [0,1]^d at the point nearest 0 coordinatewise
    return norm(np.clip(0.0, z, z + 1.0))


def _cell_max_norm(norm: MuNorm, z: np.ndarray) -> np.ndarray:
    d = z.shape[1]
    best = np.zeros(len(z))
    for corner in itertools.product((0.0, 1.0), repeat=d):
        best = np.maximum(best, norm(z + np.asarray(corner)))
    return best


def shape_inclusion_check(snapshot: ShapeSnapshot, norm: MuNorm, epsilon: float,
                          window: Optional[LatticeSpec] = None, inner: Optional[ShapeSnapshot] = None,
                          check_inner: bool = True, check_outer: bool = True) -> InclusionResult:
    """Test (1-eps) A <= inner/t and snapshot/t <= (1+eps) A by cell membership.

    ``inner`` defaults to ``snapshot``; ``window`` bounds the candidate cells of the inner ball.
    """
    t = snapshot.t
    outside = np.empty((0, norm.d), np.int64)
    outer_ok = True
    if check_outer and len(snapshot.sites):
        mx = _cell_max_norm(norm, snapshot.sites.astype(float))
        bad = mx > (1 + epsilon) * t
        outside = snapshot.sites[bad]
        outer_ok = not bad.any()
    missing = np.empty((0, norm.d), np.int64)
    inner_ok = True
    if check_inner:
        inner = inner or snapshot
        r = int(math.ceil((1 - epsilon) * t / min(norm(np.eye(norm.d)).min(), 1e300))) + 1
        if window is not None and r > window.L:
            raise PreconditionError("window too small for the inner ball")
        grid = np.stack(np.meshgrid(*[np.arange(-r - 1, r + 1)] * norm.d, indexing="ij"), -1).reshape(-1, norm.d)
        need = grid[_cell_min_norm(norm, grid.astype(float)) < (1 - epsilon) * t]
        have = inner.as_set()
        miss = [z for z in need if tuple(int(c) for c in z) not in have]
        missing = np.array(miss, np.int64).reshape(-1, norm.d)
        inner_ok = len(miss) == 0
    return InclusionResult(inner_ok and outer_ok, inner_ok, outer_ok, missing, outside)


def discretized_ball(norm: MuNorm, t: float) -> ShapeSnapshot:
    """Cells z + [0,1]^d meeting the ball t A_mu."""
    r = int(math.ceil(t / norm(np.eye(norm.d)).min())) + 1
    grid = np.stack(np.meshgrid(*[np.arange(-r - 1, r + 1)] * norm.d, indexing="ij"), -1).reshape(-1, norm.d)
    keep = _cell_min_norm(norm, grid.astype(float)) <= t
    return ShapeSnapshot(float(t), "ball", grid[keep])


# ----------------------------------------------------------------------------
# tail fits


@dataclass(frozen=True)
class TailFit:
    model: str
    rate_hat: float
    intercept: float
    ci: Tuple[float, float]
    fit_range: Tuple[float, float]
    n_samples: int
    n_fit: int
    samples: np.ndarray = field(repr=False)


_TRANSFORMS = {"exponential": lambda x: x, "stretched-sqrt": np.sqrt}


def _ls_tail(xs: np.ndarray, model: str, qlo: float, qhi: float):
    xs = np.sort(xs)
    n = len(xs)
    surv = 1.0 - np.arange(1, n + 1) / n  # P(X > x_i), empirical
    lo, hi = np.quantile(xs, [qlo, qhi])
    sel = (xs >= lo) & (xs <= hi) & (surv > 0)
    xsel = _TRANSFORMS[model](xs[sel])
    if sel.sum() < 3 or np.ptp(xsel) == 0:
        raise EstimationError("degenerate tail: no spread in the fit window")
    slope, icpt = np.polyfit(xsel, np.log(surv[sel]), 1)
    return -slope, icpt, int(sel.sum())


def fit_tail(samples, model: str = "exponential", quantiles=(0.5, 0.95), n_boot: int = 500,
             seed: int = 0) -> TailFit:
    """Least-squares fit of log P(X > x) = a - B g(x) over a quantile window, bootstrap CI for B.

    g(x) = x for ``exponential`` and sqrt(x) for ``stretched-sqrt``.
    """
    if model not in _TRANSFORMS:
        raise PreconditionError(f"unknown tail model {model!r}")
    xs = np.asarray(samples, float)
    if len(xs) < 200:
        raise EstimationError(f"need at least 200 samples, got {len(xs)}")
    if np.ptp(xs) == 0:
        raise EstimationError("degenerate tail: constant samples")
    rate, icpt, nfit = _ls_tail(xs, model, *quantiles)
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_boot):
        try:
            boot.append(_ls_tail(xs[rng.integers(0, len(xs), len(xs))], model, *quantiles)[0])
        except EstimationError:
            continue
    if len(boot) < n_boot // 2:
        raise EstimationError("bootstrap resamples mostly degenerate")
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return TailFit(model, float(rate), float(icpt), (float(lo), float(hi)), tuple(quantiles), len(xs), nfit,
                   np.sort(xs))


# ----------------------------------------------------------------------------
# export


def write_mu_csv(estimates: Sequence[MuEstimate], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["direction", "n", "mean", "ci_lo", "ci_hi"])
        for e in estimates:
            dname = " ".join(str(c) for c in e.direction)
            for n, m, lo, hi in zip(e.n_grid, e.means, e.ci_lo, e.ci_hi):
                w.writerow([dname, n, format(m, ".17g"), format(lo, ".17g"), format(hi, ".17g")])
            lo, hi = e.ci
            w.writerow([dname, "inf", format(e.mu_hat, ".17g"), format(lo, ".17g"), format(hi, ".17g")])


def write_shape_csv(rows, d: int, path) -> None:
    """rows: iterable of (replica seed, ShapeSnapshot)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "kind"] + [f"x{a}" for a in range(d)] + ["censored"])
        for seed, snap in rows:
            for z in snap.sites:
                w.writerow([seed, snap.kind] + [int(c) for c in z] + [int(snap.censored)])


def write_tails_csv(fits: Sequence[Tuple[str, TailFit]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "model", "rate_hat", "ci_lo", "ci_hi", "n_samples"])
        for name, fit in fits:
            w.writerow([name, fit.model, format(fit.rate_hat, ".17g"), format(fit.ci[0], ".17g"),
                        format(fit.ci[1], ".17g"), fit.n_samples])
