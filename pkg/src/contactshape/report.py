"""Figures rendered from an output directory.  The CSV files stay the contract;
the PNGs are a convenience view of them."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"figure.figsize": (5.0, 3.6), "font.size": 9, "axes.grid": True, "grid.alpha": 0.3,
                     "savefig.dpi": 120, "savefig.bbox": "tight"})


def _read(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v: str) -> float:
    return float(v) if v not in ("", None) else float("nan")


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_summary(out: Path):
    rows = _read(out / "summary.csv")
    tau = np.array([_num(r["tau"]) for r in rows])
    tau = tau[np.isfinite(tau)]
    if len(tau) == 0:
        return None
    fig, ax = plt.subplots()
    xs = np.sort(tau)
    ax.step(xs, 1 - np.arange(1, len(xs) + 1) / len(rows), where="post")
    ax.set_yscale("log")
    ax.set_xlabel("lifetime t")
    ax.set_ylabel("P(tau > t) (all replicas)")
    return _save(fig, out / "lifetimes.png")


def plot_mu(out: Path):
    rows = _read(out / "mu.csv")
    fig, ax = plt.subplots()
    for d in dict.fromkeys(r["direction"] for r in rows):
        pts = [r for r in rows if r["direction"] == d and r["n"] != "inf"]
        n = np.array([_num(r["n"]) for r in pts])
        m = np.array([_num(r["mean"]) for r in pts])
        lo = np.array([_num(r["ci_lo"]) for r in pts])
        hi = np.array([_num(r["ci_hi"]) for r in pts])
        line = ax.errorbar(1 / n, m, yerr=[m - lo, hi - m], fmt="o", ms=3, label=f"x = ({d})")
        for r in rows:
            if r["direction"] == d and r["n"] == "inf":
                ax.errorbar([0], [_num(r["mean"])], yerr=[[_num(r["mean"]) - _num(r["ci_lo"])],
                                                          [_num(r["ci_hi"]) - _num(r["mean"])]],
                            fmt="s", color=line[0].get_color())
    ax.set_xlabel("1 / n")
    ax.set_ylabel("mean sigma(n x) / n")
    ax.legend(fontsize=7)
    return _save(fig, out / "mu.png")


def plot_shapes(out: Path):
    made = []
    for path in sorted(out.glob("shape_t*.csv")):
        rows = _read(path)
        if not rows or "x1" not in rows[0]:
            continue
        seed = rows[0]["seed"]
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        for kind, color in (("H", "0.8"), ("G", "tab:blue"), ("K'G", "tab:orange")):
            z = np.array([[int(r["x0"]), int(r["x1"])] for r in rows if r["seed"] == seed and r["kind"] == kind])
            if len(z):
                ax.scatter(z[:, 0] + 0.5, z[:, 1] + 0.5, s=2, marker="s", color=color, label=kind)
        ax.set_aspect("equal")
        ax.set_title(f"{path.stem}, seed {seed}")
        ax.legend(fontsize=7, markerscale=3)
        made.append(_save(fig, out / f"{path.stem}.png"))
    return made


def plot_shape_rates(out: Path):
    rows = _read(out / "shape_summary.csv")
    ts = sorted({_num(r["t"]) for r in rows})
    if not ts:
        return None
    rate = [np.mean([int(r["pass"]) for r in rows if _num(r["t"]) == t]) for t in ts]
    fig, ax = plt.subplots()
    ax.plot(ts, rate, "o-")
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("t")
    ax.set_ylabel("two-sided inclusion pass rate")
    return _save(fig, out / "shape_pass_rate.png")


def plot_k_tail(out: Path, name: str):
    rows = _read(out / name)
    n = np.array([_num(r["n"]) for r in rows])
    p = np.array([_num(r["p_hat"]) for r in rows])
    lo = np.array([_num(r["ci_lo"]) for r in rows])
    hi = np.array([_num(r["ci_hi"]) for r in rows])
    fig, ax = plt.subplots()
    keep = p > 0
    ax.errorbar(n[keep], p[keep], yerr=[(p - lo)[keep], (hi - p)[keep]], fmt="o", label="P(K > n)")
    ax.plot(n, [_num(r["bound_upper"]) for r in rows], "--", label="(1 - rho)^n, CI edge")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.legend(fontsize=7)
    return _save(fig, out / name.replace(".csv", ".png"))


def plot_defect(out: Path):
    rows = _read(out / "defect_summary.csv")
    s = np.array([_num(r["scale"]) for r in rows])
    m = np.array([_num(r["mean_r"]) for r in rows])
    se = np.array([_num(r["se"]) for r in rows])
    fig, ax = plt.subplots()
    ax.errorbar(s, m, yerr=1.96 * se, fmt="o-", label="mean r")
    ax.plot(s, [_num(r["p_pos"]) for r in rows], "s--", label="P(r > 0)")
    ax.set_xlabel("|x|")
    ax.legend(fontsize=7)
    return _save(fig, out / "defect.png")


def plot_coupling(out: Path):
    rows = _read(out / "coupling_summary.csv")
    s = [_num(r["s"]) for r in rows]
    fig, ax = plt.subplots()
    ax.errorbar(s, [_num(r["p_hat"]) for r in rows],
                yerr=[[_num(r["p_hat"]) - _num(r["ci_lo"]) for r in rows],
                      [_num(r["ci_hi"]) - _num(r["p_hat"]) for r in rows]], fmt="o-")
    ax.set_xlabel("s")
    ax.set_ylabel("P(0 outside K'_s | survival)")
    return _save(fig, out / "coupling.png")


def plot_ergodic(out: Path):
    rows = _read(out / "ergodic.csv")
    fams = list(dict.fromkeys(r["family"] for r in rows))
    fig, ax = plt.subplots()
    for k, fam in enumerate(fams):
        v = [_num(r["limit_hat"]) for r in rows if r["family"] == fam]
        ax.scatter(np.full(len(v), k) + np.linspace(-0.2, 0.2, len(v)), v, s=8)
    ax.set_xticks(range(len(fams)), fams)
    ax.set_xlabel("family")
    ax.set_ylabel("mean f_n / n, last tenth")
    return _save(fig, out / "ergodic.png")


def plot_sigma_profile(out: Path):
    rows = _read(out / "ergodic_sigma_profile.csv")
    n = np.array([_num(r["n"]) for r in rows])
    m = np.array([_num(r["mean"]) for r in rows])
    se = np.array([_num(r["se"]) for r in rows])
    fig, ax = plt.subplots()
    ax.plot(n, m, "-", lw=1)
    ax.fill_between(n, m - 1.96 * se, m + 1.96 * se, alpha=0.3)
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mean sigma(n x) / n")
    return _save(fig, out / "ergodic_sigma_profile.png")


_PLOTS = [
    ("summary.csv", plot_summary), ("mu.csv", plot_mu), ("shape_summary.csv", plot_shape_rates),
    ("shape_summary.csv", plot_shapes), ("k_tail.csv", lambda o: plot_k_tail(o, "k_tail.csv")),
    ("restart_k_tail.csv", lambda o: plot_k_tail(o, "restart_k_tail.csv")),
    ("defect_summary.csv", plot_defect), ("coupling_summary.csv", plot_coupling), ("ergodic.csv", plot_ergodic),
    ("ergodic_sigma_profile.csv", plot_sigma_profile),
]


def render_figures(out) -> List[Path]:
    """Render every figure whose source CSV exists in ``out``; returns the PNG paths."""
    out = Path(out)
    if not out.is_dir():
        raise FileNotFoundError(f"no output directory {out}")
    made: List[Path] = []
    for name, fn in _PLOTS:
        if (out / name).exists():
            res = fn(out)
            if isinstance(res, list):
                made += res
            elif res is not None:
                made.append(res)
    return made
