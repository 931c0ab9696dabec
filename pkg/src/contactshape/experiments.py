"""Experiment pipelines: replica tasks, parallel map, aggregation and output files.

Every task is a pure function of (config, seed).  Outputs are staged in a
temporary directory and moved into place only when the whole run succeeds.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import _kernels as K
from .config import RunConfig, dump_raw
from .dynamics import (agreement_times, run_contact, run_coupled_pair, run_richardson, summary_row,
                       write_events_jsonl, write_summary_csv)
from .environment import LatticeSpec, make_deterministic_env
from .errors import ConfigurationError, EstimationError
from .essential import (DEFECT_FIELDS, RECORD_FIELDS, defect_row, essential_batch, essential_hitting,
                        record_row, subadditivity_defect, write_rows)
from .ergodic import (ProcessSpec, check_convergence, ergodic_row, sigma_inequality_violations,
                      sigma_sequences, synth_process, verify_hypotheses, write_ergodic_csv)
from .field import field_new
from .restart import restart_row, run_restart, thinned_coupling, write_restart_csv
from .shape import (KINDS, MuNorm, ShapeSnapshot, Z95, chain_holds, extract_shape, fit_tail, mu_from_samples,
                    shape_inclusion_check, sigma_row_status, wilson, write_mu_csv, write_shape_csv,
                    write_tails_csv)

log = logging.getLogger("contactshape")


class ReplicaError(RuntimeError):
    def __init__(self, seed, detail):
        super().__init__(f"replica with seed {seed} failed: {detail}")
        self.seed = seed
        self.detail = detail

    def __reduce__(self):  # survives the trip back from a worker process
        return ReplicaError, (self.seed, self.detail)


def _guarded(task, seed):
    try:
        return task(seed)
    except Exception as exc:  # re-raised with the seed attached
        raise ReplicaError(seed, f"{type(exc).__name__}: {exc}") from exc


def parallel_map(seeds: Sequence[int], task: Callable, workers: int = 1) -> list:
    """Apply ``task`` to every seed; results come back in seed order."""
    seeds = list(seeds)
    if not seeds:
        return []
    if workers <= 1 or len(seeds) == 1:
        return [_guarded(task, s) for s in seeds]
    chunk = max(1, len(seeds) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(partial(_guarded, task), seeds, chunksize=chunk))


def _origin(window: LatticeSpec):
    return [(0,) * window.d]


def _vec(v, d):
    """Read a lattice vector; a single number in d > 1 means that multiple of e_1."""
    v = tuple(int(c) for c in v)
    if len(v) == d:
        return v
    if len(v) == 1:
        return (v[0],) + (0,) * (d - 1)
    raise ConfigurationError(f"vector {v} does not have dimension {d}")


def _f(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------------------
# simulate


def _simulate_task(cfg: RunConfig, seed: int):
    f = cfg.field(seed)
    w = cfg.lattice
    init = [_vec(v, w.d) for v in cfg.vectors("simulate", "initial")]
    if cfg.get("simulate", "model") == "richardson":
        tr = run_richardson(f, f.env.lambda_max, init, 0.0, cfg.horizon, w)
    else:
        tr = run_contact(f, init, 0.0, cfg.horizon, w)
    coupling = []
    s_grid = cfg.floats("simulate", "coupling_times")
    if s_grid:
        zero, full = run_coupled_pair(f, w, cfg.horizon)
        start = agreement_times(zero, full)[w.index((0,) * w.d)]
        coupling = [(s, zero.alive, bool(start <= s)) for s in s_grid]
    return summary_row(seed, tr), (tr if seed == cfg.base_seed else None), coupling


def coupling_summary(rows, s_grid):
    """Per s: survivors, count with the origin outside K'_s, estimate and Wilson CI."""
    out = []
    for s in s_grid:
        alive = [inside for ss, surv, inside in rows if ss == s and surv]
        miss = sum(1 for inside in alive if not inside)
        lo, hi = wilson(miss, len(alive))
        out.append((s, len(alive), miss, miss / len(alive) if alive else float("nan"), lo, hi))
    return out


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    res = parallel_map(cfg.seeds, partial(_simulate_task, cfg), cfg.workers)
    write_summary_csv([r for r, _, _ in res], out / "summary.csv")
    if cfg.flag("simulate", "events"):
        write_events_jsonl(res[0][1], out / "events.jsonl")
    summary = {"replicas": len(res), "alive_at_horizon": sum(1 for r, _, _ in res if r["censored"])}
    s_grid = cfg.floats("simulate", "coupling_times")
    if s_grid:
        rows = [(seed, *c) for seed, (_, _, cc) in zip(cfg.seeds, res) for c in cc]
        _write_csv(out / "coupling.csv", ["seed", "s", "survived", "origin_in_K_prime"],
                   [[seed, _f(s), int(a), int(b)] for seed, s, a, b in rows])
        summ = coupling_summary([r[1:] for r in rows], s_grid)
        _write_csv(out / "coupling_summary.csv", ["s", "survivors", "outside", "p_hat", "ci_lo", "ci_hi"],
                   [[_f(s), n, m, _f(p), _f(lo), _f(hi)] for s, n, m, p, lo, hi in summ])
        summary["p_outside"] = {f"{s:g}": p for s, _, _, p, _, _ in summ}
    return summary


# ----------------------------------------------------------------------------
# mu


def _mu_task(cfg: RunConfig, direction, n_grid, seed: int, window=None, horizon=None):
    window = window or cfg.lattice
    f = cfg.field(seed, window)
    return sigma_row_status(f, direction, n_grid, window, horizon or cfg.horizon, cfg.t_surv)


def mu_batches(cfg: RunConfig):
    """One disjoint seed batch per configured direction (repeats give independent batches)."""
    d = cfg.lattice.d
    dirs = [_vec(v, d) for v in cfg.vectors("mu", "directions")]
    n_grid = cfg.ints("mu", "n_grid")
    far = max(abs(c) for v in dirs for c in v) * max(n_grid)
    if far > cfg.lattice.L:
        raise ConfigurationError(f"target at distance {far} outside the window radius {cfg.lattice.L}")
    out = []
    for k, x in enumerate(dirs):
        seeds = [cfg.base_seed + k * cfg.replicas + i for i in range(cfg.replicas)]
        res = parallel_map(seeds, partial(_mu_task, cfg, x, n_grid), cfg.workers)
        kept = np.array([r for r, _ in res if r is not None])
        trunc = sum(st == "truncated" for _, st in res)
        if trunc:
            log.warning("direction %s: %d truncated replicas rejected; enlarge lattice.window_radius", x, trunc)
        est = mu_from_samples(x, n_grid, kept, seed=seeds[0]) if len(kept) >= 10 else None
        out.append((k, x, est, len(seeds), len(kept), trunc))
    return out


def run_mu(cfg: RunConfig, out: Path) -> dict:
    batches = mu_batches(cfg)
    summ = []
    for k, x, est, n, m, trunc in batches:
        if est is None:
            raise EstimationError(f"direction {x}: only {m} resolved replicas of {n}")
        lo, hi = est.ci
        summ.append([" ".join(map(str, x)), k, _f(est.mu_hat), _f(est.mu_se), _f(lo), _f(hi), n, m, trunc])
    write_mu_csv([b[2] for b in batches], out / "mu.csv")
    _write_csv(out / "mu_summary.csv",
               ["direction", "batch", "mu_hat", "se", "ci_lo", "ci_hi", "replicas", "resolved", "truncated"], summ)
    return {"mu_hat": [float(b[2].mu_hat) for b in batches], "truncated": [b[5] for b in batches]}


# ----------------------------------------------------------------------------
# shape


def _shape_task(cfg: RunConfig, norm: MuNorm, seed: int):
    f = cfg.field(seed)
    w = cfg.lattice
    t_grid = cfg.floats("shape", "t_grid")
    eps = float(cfg.get("shape", "epsilon"))
    origin = run_contact(f, _origin(w), 0.0, cfg.horizon, w)
    if not origin.alive:
        return {"seed": seed, "status": "died"}
    if origin.truncated:
        return {"seed": seed, "status": "truncated"}
    full = run_contact(f, [w.site(i) for i in range(w.n_sites)], 0.0, cfg.horizon, w)
    batch = essential_batch(f, w, cfg.horizon, cfg.t_surv, t_cap=max(t_grid), origin=origin)
    agree = agreement_times(origin, full)
    per_t = []
    for t in t_grid:
        snaps = extract_shape(w, origin, full, batch, t, agree)
        inner = shape_inclusion_check(snaps["K'G"], norm, eps, w, check_outer=False)
        outer = shape_inclusion_check(snaps["H"], norm, eps, w, check_inner=False)
        per_t.append({
            "t": t, "chain": chain_holds(snaps), "inner": inner.inner_ok, "outer": outer.outer_ok,
            "n_missing": len(inner.missing), "n_outside": len(outer.outside),
            "sizes": {k: len(snaps[k].sites) for k in KINDS},
            "sites": {k: snaps[k].sites for k in KINDS}, "censored": snaps["K'G"].censored,
        })
    return {"seed": seed, "status": "ok", "per_t": per_t}


def shape_norm(cfg: RunConfig):
    d = cfg.lattice.d
    dirs = [_vec(v, d) for v in cfg.vectors("shape", "mu_directions")]
    n_grid = cfg.ints("shape", "mu_n_grid")
    nrep = int(cfg.get("shape", "mu_replicas"))
    off = int(cfg.get("shape", "mu_seed_offset"))
    h = float(cfg.get("shape", "mu_horizon") or cfg.horizon)
    r = cfg.get("shape", "mu_window_radius")
    window = LatticeSpec(d, int(r)) if r else cfg.lattice
    if not cfg.t_surv < h:
        raise ConfigurationError("shape.mu_horizon must exceed run.t_surv")
    ests = []
    for k, x in enumerate(dirs):
        seeds = [cfg.base_seed + off + k * nrep + i for i in range(nrep)]
        res = parallel_map(seeds, partial(_mu_task, cfg, x, n_grid, window=window, horizon=h), cfg.workers)
        kept = np.array([r for r, _ in res if r is not None])
        trunc = sum(st == "truncated" for _, st in res)
        if trunc:
            log.warning("norm direction %s: %d truncated replicas rejected; enlarge shape.mu_window_radius",
                        x, trunc)
        if len(kept) < 10:
            raise EstimationError(f"direction {x}: only {len(kept)} resolved replicas")
        ests.append(mu_from_samples(x, n_grid, kept, seed=seeds[0]))
    return MuNorm({e.direction: e.mu_hat for e in ests}, d), ests


def run_shape(cfg: RunConfig, out: Path) -> dict:
    norm, ests = shape_norm(cfg)
    write_mu_csv(ests, out / "mu.csv")
    res = parallel_map(cfg.seeds, partial(_shape_task, cfg, norm), cfg.workers)
    cap = int(cfg.get("shape", "max_surviving")) or len(res)
    ok = [r for r in res if r["status"] == "ok"][:cap]
    if not ok:
        raise EstimationError("no surviving untruncated replica; enlarge the window or the replica count")
    t_grid = cfg.floats("shape", "t_grid")
    rows = []
    for r in ok:
        for p in r["per_t"]:
            rows.append([r["seed"], _f(p["t"]), int(p["chain"]), int(p["inner"]), int(p["outer"]),
                         int(p["inner"] and p["outer"]), p["n_missing"], p["n_outside"],
                         p["sizes"]["H"], p["sizes"]["G"], p["sizes"]["K'G"], int(p["censored"])])
    _write_csv(out / "shape_summary.csv",
               ["seed", "t", "chain_ok", "inner_ok", "outer_ok", "pass", "n_missing", "n_outside",
                "size_H", "size_G", "size_KG", "censored"], rows)
    dump = int(cfg.get("shape", "dump_replicas"))
    for j, t in enumerate(t_grid):
        snaps = []
        for r in ok[:dump]:
            p = r["per_t"][j]
            for kind in KINDS:
                snaps.append((r["seed"], ShapeSnapshot(t, kind, p["sites"][kind],
                                                       p["censored"] and kind == "K'G")))
        write_shape_csv(snaps, cfg.lattice.d, out / f"shape_t{t:g}.csv")
    _write_csv(out / "shape_norm.csv", ["direction", "mu_hat", "se"],
               [[" ".join(map(str, e.direction)), _f(e.mu_hat), _f(e.mu_se)] for e in ests])
    counts = {k: sum(1 for r in res if r["status"] == k) for k in ("ok", "died", "truncated")}
    rates = {}
    for j, t in enumerate(t_grid):
        rates[f"{t:g}"] = float(np.mean([r["per_t"][j]["inner"] and r["per_t"][j]["outer"] for r in ok])) \
            if ok else float("nan")
    return {"counts": counts, "used": len(ok), "pass_rate": rates,
            "mu_hat": {" ".join(map(str, e.direction)): e.mu_hat for e in ests}}


# ----------------------------------------------------------------------------
# tails (lifetimes and K(x))


def _tails_task(cfg: RunConfig, seed: int):
    f = cfg.field(seed)
    w = cfg.lattice
    origin = run_contact(f, _origin(w), 0.0, cfg.horizon, w)
    x = _vec(cfg.ints("tails", "target"), w.d)
    rec = essential_hitting(f, x, w, cfg.horizon, cfg.t_surv, origin=origin)
    return summary_row(seed, origin), record_row(seed, rec), origin.tau


def k_tail_table(K_values: Sequence[int], rho_ci, n_max: int = 5):
    """Rows (n, count, p_hat, ci_lo, ci_hi, bound_hat, bound_upper) for P(K > n)."""
    K_values = np.asarray(K_values)
    N = len(K_values)
    rho_hat, (rho_lo, _) = rho_ci
    rows = []
    for n in range(n_max + 1):
        c = int(np.sum(K_values > n))
        lo, hi = wilson(c, N)
        rows.append((n, c, c / N if N else float("nan"), lo, hi, (1 - rho_hat) ** n, (1 - rho_lo) ** n))
    return rows


def run_tails(cfg: RunConfig, out: Path) -> dict:
    res = parallel_map(cfg.seeds, partial(_tails_task, cfg), cfg.workers)
    write_summary_csv([a for a, _, _ in res], out / "summary.csv")
    write_rows([b for _, b, _ in res], RECORD_FIELDS, out / "essential.csv")
    taus = np.array([t for _, _, t in res if t is not None])
    alive = sum(1 for _, _, t in res if t is None or t > cfg.t_surv)
    fits = []
    for model in ("exponential", "stretched-sqrt"):
        try:
            fits.append(("tau_given_death", fit_tail(taus, model, seed=cfg.base_seed)))
        except EstimationError:
            pass
    write_tails_csv(fits, out / "tails.csv")
    rho = (alive / len(res), wilson(alive, len(res)))
    ks = [int(b["K"]) for _, b, _ in res if b["status"] != "censored-horizon"]
    table = k_tail_table(ks, rho)
    _write_csv(out / "k_tail.csv", ["n", "count_gt", "p_hat", "ci_lo", "ci_hi", "bound_hat", "bound_upper"],
               [[n, c, _f(p), _f(lo), _f(hi), _f(b), _f(bu)] for n, c, p, lo, hi, b, bu in table])
    _write_csv(out / "survival.csv", ["replicas", "survived", "rho_hat", "ci_lo", "ci_hi", "t_surv"],
               [[len(res), alive, _f(rho[0]), _f(rho[1][0]), _f(rho[1][1]), _f(cfg.t_surv)]])
    return {"deaths": int(len(taus)), "rho_hat": rho[0],
            "fits": {f"{n}:{t.model}": [t.rate_hat, *t.ci] for n, t in fits}}


# ----------------------------------------------------------------------------
# defect


def _defect_task(cfg: RunConfig, seed: int):
    f = cfg.field(seed)
    w = cfg.lattice
    e = np.asarray(_vec(cfg.ints("defect", "direction"), w.d))
    origin = run_contact(f, _origin(w), 0.0, cfg.horizon, w)
    out = []
    for s in cfg.ints("defect", "scales"):
        x = tuple(int(c) for c in s * e)
        out.append(defect_row(seed, subadditivity_defect(f, x, x, w, cfg.horizon, cfg.t_surv, origin=origin)))
    return out


def defect_summary(rows, scales):
    res = []
    for s, x in scales:
        r = np.array([float(row["r"]) for row in rows if row["x"] == x and not int(row["censored"])])
        n = len(r)
        pos = int(np.sum(r > 0))
        lo, hi = wilson(pos, n)
        se = float(r.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        res.append((s, n, float(r.mean()) if n else float("nan"), se, pos / n if n else float("nan"), lo, hi, r))
    return res


def trend_slope(norms, means, ses):
    """Weighted LS slope of mean r against |x| with its standard error."""
    x = np.asarray(norms, float)
    y = np.asarray(means, float)
    w = 1.0 / np.asarray(ses, float) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


def run_defect(cfg: RunConfig, out: Path) -> dict:
    res = parallel_map(cfg.seeds, partial(_defect_task, cfg), cfg.workers)
    rows = [r for rr in res for r in rr]
    write_rows(rows, DEFECT_FIELDS, out / "defect.csv")
    d = cfg.lattice.d
    e = np.asarray(_vec(cfg.ints("defect", "direction"), d))
    scales = [(s, " ".join(str(int(c)) for c in s * e)) for s in cfg.ints("defect", "scales")]
    summ = defect_summary(rows, scales)
    _write_csv(out / "defect_summary.csv", ["scale", "resolved", "mean_r", "se", "p_pos", "p_lo", "p_hi"],
               [[s, n, _f(m), _f(se), _f(p), _f(lo), _f(hi)] for s, n, m, se, p, lo, hi, _ in summ])
    fits = []
    for s, n, *_, r in summ:
        pos = r[r > 0]
        if len(pos) >= 200:
            try:
                fits.append((f"r_positive_scale_{s}", fit_tail(pos, "stretched-sqrt", seed=cfg.base_seed)))
            except EstimationError:
                pass
    write_tails_csv(fits, out / "tails.csv")
    return {"resolved": {str(s): n for s, n, *_ in summ}, "mean_r": {str(s): m for s, _, m, *_ in summ}}


# ----------------------------------------------------------------------------
# restart


def _lambda_min(cfg: RunConfig) -> float:
    v = cfg.get("restart", "lambda_min") or cfg.get("env", "lambda_min")
    return float(v) if v else cfg.environment().dist.lo


def _restart_task(cfg: RunConfig, seed: int):
    f = cfg.field(seed)
    thin = (int(cfg.get("restart", "thin_seed")) << 32) + seed
    rec = run_restart(thinned_coupling(f, _lambda_min(cfg), thin), cfg.lattice, cfg.horizon, cfg.t_surv)
    return restart_row(seed, rec)


def _weak_survival_task(cfg: RunConfig, lam: float, seed: int) -> bool:
    env = make_deterministic_env(cfg.lattice, lam)
    f = field_new(env, (int(cfg.get("field", "seed")) << 32) + seed, float(cfg.get("field", "slab_length")))
    return run_contact(f, _origin(cfg.lattice), 0.0, cfg.t_surv, cfg.lattice).alive


def run_restart_exp(cfg: RunConfig, out: Path) -> dict:
    lam_min = _lambda_min(cfg)
    rows = parallel_map(cfg.seeds, partial(_restart_task, cfg), cfg.workers)
    write_restart_csv(rows, out / "restart.csv")
    nrho = int(cfg.get("restart", "rho_replicas"))
    off = int(cfg.get("restart", "rho_seed_offset"))
    seeds = [cfg.base_seed + off + i for i in range(nrho)]
    alive = sum(parallel_map(seeds, partial(_weak_survival_task, cfg, lam_min), cfg.workers))
    rho = (alive / nrho, wilson(alive, nrho))
    ks = [int(r["K"]) for r in rows if not int(r["censored"])]
    table = k_tail_table(ks, rho)
    _write_csv(out / "restart_k_tail.csv",
               ["n", "count_gt", "p_hat", "ci_lo", "ci_hi", "bound_hat", "bound_upper"],
               [[n, c, _f(p), _f(lo), _f(hi), _f(b), _f(bu)] for n, c, p, lo, hi, b, bu in table])
    _write_csv(out / "survival.csv", ["lambda", "replicas", "survived", "rho_hat", "ci_lo", "ci_hi", "t_surv"],
               [[_f(lam_min), nrho, alive, _f(rho[0]), _f(rho[1][0]), _f(rho[1][1]), _f(cfg.t_surv)]])
    return {"rho_min": rho[0], "outcomes": {k: sum(r["outcome"] == k for r in rows)
                                            for k in ("died", "survived", "censored")}}


# ----------------------------------------------------------------------------
# ergodic


def _ergodic_task(cfg: RunConfig, family: str, seed: int):
    spec = ProcessSpec(family, N=int(cfg.get("ergodic", "N")))
    p = synth_process(spec, seed)
    conv = check_convergence(p, tol=float(cfg.get("ergodic", "tol")))
    hyp = verify_hypotheses(p, int(cfg.get("ergodic", "sample_size")), seed=seed)
    row = ergodic_row(p, conv, hyp)
    extra = {"moment_ok": hyp.moment_ok, "cesaro_ok": hyp.cesaro_ok, "oscillation": conv.oscillation,
             "c_true": p.c_true}
    return row, extra


def _sigma_task(cfg: RunConfig, seed: int):
    f = cfg.field(seed)
    w = cfg.lattice
    N = int(cfg.get("ergodic", "sigma_N"))
    x = np.asarray(_vec(cfg.ints("ergodic", "sigma_direction"), w.d))
    origin = run_contact(f, _origin(w), 0.0, cfg.horizon, w)
    if not origin.alive:
        return "died"
    if origin.truncated:
        return "truncated"
    targets = [w.index(tuple(int(c) for c in n * x)) for n in range(1, N + 1)]
    batch = essential_batch(f, w, cfg.horizon, cfg.t_surv, targets=targets, origin=origin)
    seq = sigma_sequences(batch, w, x, N)
    if seq is None:
        return "censored"
    conv = check_convergence(seq)
    samples = [subadditivity_defect(f, tuple(int(c) for c in n * x), tuple(int(c) for c in p * x), w,
                                    cfg.horizon, cfg.t_surv, origin=origin)
               for n, p in ((1, 1), (2, 3), (5, 5))]
    return (conv.limit_hat, sigma_inequality_violations(samples), sum(not s.censored for s in samples),
            seq.ratios())


def run_ergodic(cfg: RunConfig, out: Path) -> dict:
    rows, extras = [], []
    for fam in cfg.get("ergodic", "families").split():
        res = parallel_map(cfg.seeds, partial(_ergodic_task, cfg, fam), cfg.workers)
        rows += [r for r, _ in res]
        extras += [dict(e, family=fam, seed=r["seed"]) for r, e in res]
    write_ergodic_csv(rows, out / "ergodic.csv")
    _write_csv(out / "ergodic_checks.csv", ["family", "seed", "c_true", "oscillation", "moment_ok", "cesaro_ok"],
               [[e["family"], e["seed"], _f(e["c_true"]), _f(e["oscillation"]), int(e["moment_ok"]),
                 int(e["cesaro_ok"])] for e in extras])
    summary = {"converged": {}}
    for r in rows:
        summary["converged"].setdefault(r["family"], []).append(int(r["converged"]))
    nsig = int(cfg.get("ergodic", "sigma_replicas"))
    if nsig > 0:
        seeds = [cfg.base_seed + 10 ** 6 + i for i in range(nsig)]
        res = parallel_map(seeds, partial(_sigma_task, cfg), cfg.workers)
        trunc = sum(r == "truncated" for r in res)
        if trunc:
            log.warning("sigma adapter: %d truncated replicas rejected; enlarge lattice.window_radius", trunc)
        res = [r for r in res if not isinstance(r, str)]
        lim = np.array([r[0] for r in res])
        viol = sum(r[1] for r in res)
        checked = sum(r[2] for r in res)
        se = float(lim.std(ddof=1) / math.sqrt(len(lim))) if len(lim) > 1 else float("nan")
        _write_csv(out / "ergodic_sigma.csv",
                   ["replicas", "resolved", "limit_hat", "se", "ci_lo", "ci_hi", "violations", "checked",
                    "truncated"],
                   [[nsig, len(lim), _f(lim.mean()), _f(se), _f(lim.mean() - Z95 * se),
                     _f(lim.mean() + Z95 * se), viol, checked, trunc]])
        # per-n profile of sigma(n x)/n: shows how far the finite-n means are from flat
        prof = np.array([r[3] for r in res])
        if len(prof):
            pse = (prof.std(axis=0, ddof=1) / math.sqrt(len(prof)) if len(prof) > 1
                   else np.full(prof.shape[1], np.nan))
            _write_csv(out / "ergodic_sigma_profile.csv", ["n", "mean", "se"],
                       [[n + 1, _f(m), _f(e)] for n, (m, e) in enumerate(zip(prof.mean(axis=0), pse))])
        summary["sigma_limit"] = float(lim.mean())
    return summary


# ----------------------------------------------------------------------------
# driver

RUNNERS = {
    "simulate": run_simulate, "mu": run_mu, "shape": run_shape, "tails": run_tails,
    "defect": run_defect, "restart": run_restart_exp, "ergodic": run_ergodic,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: RunConfig, figures: bool = False) -> dict:
    """Run the configured experiment; all files appear in ``cfg.output`` or none do."""
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out.parent))
    t0 = time.time()
    try:
        summary = RUNNERS[cfg.experiment](cfg, stage)
        files = sorted(p.name for p in stage.iterdir())
        manifest = {
            "tool": "contactshape", "version": __version__, "experiment": cfg.experiment,
            "config": cfg.raw, "seed_rule": "replica i uses seed base_seed + i",
            "files": {name: _sha256(stage / name) for name in files},
            "summary": _jsonable(summary), "wall_time_s": round(time.time() - t0, 3),
        }
        (stage / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (stage / "config.ini").write_text(dump_raw(cfg.raw))
        out.mkdir(parents=True, exist_ok=True)
        for p in stage.iterdir():
            os.replace(p, out / p.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    if figures:
        from .report import render_figures
        render_figures(out)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
