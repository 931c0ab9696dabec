"""Synthetic almost-subadditive processes and finite-N convergence checks.

All families are built on one iid innovation stream indexed by position;
the shift theta_n moves the index by n, so stationarity is exact.  Values
are dyadic rationals, which keeps every sum below exact in float64.

f_n o theta_m depends on innovations in positions [m, m + n]:

(a) f_n = c n
(b) f_n = X_m + ... + X_{m+n-1}, g_p o theta_m = Y_m bounded, r = 0
(c) f_n = S + xi_{m+n} - xi'_m, so r_{n,p} o theta_m = xi'_{m+n} - xi_{m+n}
(d) f_n = S - xi'_{m+n} with Pareto xi' of tail index <= 1, r_{n,p} = xi'_{m+n}
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError

FAMILIES = ("a", "b", "c", "d")
_DYADIC = 2.0 ** 20


def _dyadic(x: np.ndarray) -> np.ndarray:
    return np.floor(x * _DYADIC) / _DYADIC


@dataclass(frozen=True)
class ProcessSpec:
    family: str
    N: int = 100_000
    c: float = 1.5  # family (a)
    alpha: float = 2.0  # moment exponent declared for the defect bound
    C_p: float = 1.0  # declared bound on E (r^+)^alpha, constant in p
    pareto_index: float = 0.8  # family (d)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.N < 1:
            raise ConfigurationError("N must be positive")


@dataclass(frozen=True)
class AlmostSubadditiveProcess:
    spec: ProcessSpec
    seed: int
    X: np.ndarray = field(repr=False)  # increments, length N + 1
    Y: np.ndarray = field(repr=False)  # bounded g values
    xi: np.ndarray = field(repr=False)
    xi_p: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)  # prefix sums of X, S[k] = X_0 + .. + X_{k-1}

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def c_true(self) -> Optional[float]:
        return {"a": self.spec.c, "b": 1.0, "c": 1.0}.get(self.family)

    def f(self, n, m=0):
        """f_n o theta_m (vectorized in n and m)."""
        n = np.asarray(n)
        m = np.asarray(m)
        fam = self.family
        if fam == "a":
            return self.spec.c * np.broadcast_to(n, np.broadcast(n, m).shape)
        base = self.S[m + n] - self.S[m]
        if fam == "b":
            return base
        if fam == "c":
            return base + self.xi[m + n] - self.xi_p[m]
        return base - self.xi_p[m + n]

    def g(self, p, m=0):
        """g_p o theta_m."""
        m = np.asarray(m)
        if self.family == "b":
            return self.Y[m]
        return np.zeros(np.broadcast(np.asarray(p), m).shape)

    def r(self, n, p, m=0):
        """r_{n,p} o theta_m (the declared defect)."""
        n = np.asarray(n)
        m = np.asarray(m)
        shape = np.broadcast(n, np.asarray(p), m).shape
        if self.family == "c":
            return np.broadcast_to(self.xi_p[m + n] - self.xi[m + n], shape)
        if self.family == "d":
            return np.broadcast_to(self.xi_p[m + n], shape)
        return np.zeros(shape)

    def ratios(self) -> np.ndarray:
        """f_n / n for n = 1..N."""
        n = np.arange(1, self.N + 1)
        return self.f(n) / n


def synth_process(spec: ProcessSpec, seed: int) -> AlmostSubadditiveProcess:
    # innovations are drawn for 2N + 2 positions so shifted queries stay in range
    rng = np.random.default_rng([int(seed), FAMILIES.index(spec.family)])
    M = 2 * spec.N + 2
    X = rng.integers(0, 2 * (1 << 20) + 1, M) / _DYADIC  # uniform grid on [0, 2], mean 1
    Y = _dyadic(rng.random(M))
    if spec.family == "c":
        xi = _dyadic(rng.exponential(1.0, M))
        xi_p = _dyadic(rng.exponential(1.0, M))
    elif spec.family == "d":
        xi = np.zeros(M)
        xi_p = _dyadic(rng.pareto(spec.pareto_index, M) + 1.0)
    else:
        xi = np.zeros(M)
        xi_p = np.zeros(M)
    S = np.concatenate([[0.0], np.cumsum(X)])
    return AlmostSubadditiveProcess(spec, int(seed), X, Y, xi, xi_p, S)


@dataclass(frozen=True)
class ConvergenceReport:
    limit_hat: float
    oscillation: float
    converged: bool
    ratios: np.ndarray = field(repr=False)
    window: tuple = ()


def check_convergence(process, N: Optional[int] = None, tol: float = 1e-2) -> ConvergenceReport:
    """Mean and max-min oscillation of f_n/n over the last tenth of n <= N."""
    ratios = np.asarray(process.ratios() if hasattr(process, "ratios") else process, float)
    N = len(ratios) if N is None else int(N)
    if N < 10:
        raise ValueError("need at least 10 terms")
    ratios = ratios[:N]
    lo = int(math.floor(0.9 * N))
    tail = ratios[lo:]
    osc = float(tail.max() - tail.min())
    return ConvergenceReport(float(tail.mean()), osc, bool(osc < tol), ratios, (lo + 1, N))


@dataclass(frozen=True)
class HypothesisReport:
    violations: int
    checked: int
    moments: Dict[int, float]  # sample size -> sample mean of (r^+)^alpha
    moment_ok: bool
    series_finite: bool
    cesaro: Dict[int, float]  # k -> (f_{nk} - sum_i f_k o theta_{ik})^+ / n at the largest n
    cesaro_ok: bool

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.moment_ok and self.series_finite and self.cesaro_ok


def verify_hypotheses(process: AlmostSubadditiveProcess, sample_size: int = 10_000, seed: int = 0,
                      slack: float = 0.25, cesaro_tol: float = 0.05) -> HypothesisReport:
    rng = np.random.default_rng(seed)
    N = process.N
    n = rng.integers(1, N, sample_size)
    p = np.array([rng.integers(1, N - k + 1) for k in n])
    lhs = process.f(n + p)
    rhs = process.f(n) + process.f(p, n) + process.g(p, n) + process.r(n, p)
    violations = int(np.sum(lhs > rhs))

    # alpha-moments of r^+ on nested samples: they must stay below C_p (1 + slack)
    a = process.alpha
    moments = {}
    size = 10_000
    while size <= min(N, 10 ** 6):
        m = rng.integers(0, N, size)
        k = rng.integers(1, N // 2, size)
        rp = np.maximum(process.r(k, 1, m), 0.0)
        moments[size] = float(np.mean(rp ** a))
        size *= 10
    moment_ok = all(v <= process.spec.C_p * (1 + slack) for v in moments.values())
    series_finite = a > 1  # C_p is constant, so sum C_p / p^alpha < inf iff alpha > 1

    cesaro = {}
    for k in (1, 2, 5, 10):
        nn = N // k
        i = np.arange(nn)
        excess = process.f(nn * k) - np.sum(process.f(k, i * k))
        cesaro[k] = max(float(excess), 0.0) / nn
    cesaro_ok = all(v < cesaro_tol for v in cesaro.values())
    return HypothesisReport(violations, sample_size, moments, moment_ok, series_finite, cesaro, cesaro_ok)


# ----------------------------------------------------------------------------
# sigma adapter


@dataclass(frozen=True)
class SigmaSequence:
    """f_n = sigma(n x) for n = 1..N on one realization."""

    x: tuple
    sigma: np.ndarray

    def ratios(self) -> np.ndarray:
        return self.sigma / np.arange(1, len(self.sigma) + 1)


def sigma_sequences(batch, window, x, N: int):
    """Build the sigma adapter from an all-sites ladder batch, or None if any target is unresolved."""
    x = np.asarray(x, np.int64)
    idx = np.array([window.index(tuple(n * x)) for n in range(1, N + 1)])
    pos = {int(t): k for k, t in enumerate(batch.targets)}
    sel = np.array([pos[i] for i in idx])
    if np.any(batch.status[sel] != K.STATUS_SURVIVAL):
        return None
    return SigmaSequence(tuple(int(c) for c in x), batch.sigma[sel].copy())


def sigma_inequality_violations(samples) -> int:
    """Count DefectSamples breaking sigma(x+y) <= sigma(x) + sigma(y) o shift + r."""
    bad = 0
    for s in samples:
        if s.censored:
            continue
        if s.sigma_xy > s.sigma_x + s.sigma_y_shifted + s.r:
            bad += 1
    return bad


ERGODIC_FIELDS = ["family", "seed", "N", "limit_hat", "converged", "violations"]


def ergodic_row(process: AlmostSubadditiveProcess, conv: ConvergenceReport, hyp: HypothesisReport) -> dict:
    return {"family": process.family, "seed": process.seed, "N": process.N,
            "limit_hat": format(conv.limit_hat, ".17g"), "converged": int(conv.converged),
            "violations": hyp.violations}


def write_ergodic_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ERGODIC_FIELDS)
        w.writeheader()
        w.writerows(rows)
