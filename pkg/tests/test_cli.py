import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from contactshape import __version__
from contactshape.cli import main
from contactshape.config import ConfigurationError, dump_raw, load_config, raw_from_file
from contactshape.experiments import ReplicaError, parallel_map, run_experiment

SMALL = ["lattice.window_radius=30", "run.horizon=20", "run.t_surv=8"]


def _square(s):
    return s * s


def _boom(s):
    if s == 3:
        raise RuntimeError("bad replica")
    return s


def _files(out: Path):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name not in ("manifest.json", "config.ini")}


def _manifest(out: Path):
    m = json.loads((out / "manifest.json").read_text())
    m.pop("wall_time_s")
    return m


# parallel map ------------------------------------------------------------------------------------


def test_parallel_map_empty():
    assert parallel_map([], _square, 1) == []
    assert parallel_map([], _square, 4) == []


def test_parallel_map_order_and_workers():
    seeds = list(range(20))
    assert parallel_map(seeds, _square, 1) == parallel_map(seeds, _square, 3) == [s * s for s in seeds]


@pytest.mark.parametrize("workers", [1, 2])
def test_parallel_map_reports_failing_seed(workers):
    with pytest.raises(ReplicaError) as err:
        parallel_map(range(6), _boom, workers)
    assert err.value.seed == 3 and "seed 3" in str(err.value)


# config ---------------------------------------------------------------------------------------------


def test_seed_rule_and_overrides():
    cfg = load_config(None, ["run.replicas=4", "run.base_seed=10"])
    assert cfg.seeds == [10, 11, 12, 13]
    assert cfg.t_surv == cfg.horizon / 2


@pytest.mark.parametrize("bad", [
    ["run.t_surv=200", "run.horizon=100"], ["run.replicas=0"], ["run.experiment=nope"], ["nope.key=1"],
    ["run.nokey=1"], ["run.horizon"], ["env.kind=uniform"], ["env.kind=uniform", "env.lo=3", "env.hi=2"],
    ["run.replicas=x"], ["ergodic.sigma_N=5"],
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigurationError):
        load_config(None, bad)


def test_unknown_key_in_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nfoo = 1\n")
    with pytest.raises(ConfigurationError):
        load_config(str(p))


def test_raw_dump_roundtrip(tmp_path, data_dir):
    cfg = load_config(str(data_dir / "trace.ini"))
    p = tmp_path / "again.ini"
    p.write_text(dump_raw(cfg.raw))
    assert raw_from_file(str(p)) == cfg.raw


# CLI runs --------------------------------------------------------------------------------------------


def test_golden_event_log(tmp_path, data_dir):
    out = tmp_path / "trace"
    assert main(["run", str(data_dir / "trace.ini"), "--set", f"run.output={out}"]) == 0
    assert (out / "events.jsonl").read_bytes() == (data_dir / "trace_golden_events.jsonl").read_bytes()
    m = json.loads((out / "manifest.json").read_text())
    assert m["version"] == __version__ and "wall_time_s" in m and m["config"]["run"]["replicas"] == "1"
    row = (out / "summary.csv").read_text().splitlines()[1]
    assert row == "0,2,0,0,0"


def test_t_surv_above_horizon_exit_code(tmp_path):
    rc = main(["run", "/dev/null", "--set", "run.t_surv=200", "--set", "run.horizon=100",
               "--set", f"run.output={tmp_path / 'x'}"])
    assert rc == 2
    assert not (tmp_path / "x").exists()


def test_runtime_failure_writes_nothing(tmp_path):
    out = tmp_path / "mu"
    # far too few replicas resolve, so the estimate fails after replicas ran
    rc = main(["run", "/dev/null", "--set", "run.experiment=mu", "--set", "run.replicas=3",
               "--set", "mu.n_grid=1 2", "--set", f"run.output={out}"] + sum((["--set", s] for s in SMALL), []))
    assert rc == 3
    assert not out.exists()
    assert not any(p.name.startswith(".stage") for p in tmp_path.iterdir())


def test_subprocess_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "contactshape.cli", "run", "/dev/null", "--set", "run.replicas=0"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "config error" in r.stderr


EXPERIMENTS = {
    "simulate": ["run.replicas=6", "simulate.coupling_times=2 4"],
    "tails": ["run.replicas=30", "tails.target=3"],
    "defect": ["run.replicas=10", "defect.scales=2 4"],
    "restart": ["run.replicas=10", "env.kind=uniform", "env.lo=1.8", "env.hi=2.4", "restart.rho_replicas=20"],
    "ergodic": ["run.replicas=2", "ergodic.N=2000", "ergodic.sample_size=500", "ergodic.sigma_replicas=3",
                "ergodic.sigma_N=10"],
    "mu": ["run.replicas=20", "mu.n_grid=1 2 4", "run.horizon=40", "run.t_surv=10", "lattice.window_radius=60"],
}


@pytest.mark.parametrize("exp", sorted(EXPERIMENTS))
def test_deterministic_and_worker_independent(tmp_path, exp):
    sets = SMALL + [f"run.experiment={exp}"] + EXPERIMENTS[exp]
    outs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
        cfg = load_config(None, sets + [f"run.output={tmp_path / tag}", f"run.workers={workers}"])
        run_experiment(cfg)
        outs.append(tmp_path / tag)
    a, b, c = (_files(o) for o in outs)
    assert a == b == c
    ma, mb = _manifest(outs[0]), _manifest(outs[1])
    assert ma["files"] == mb["files"]


def test_manifest_rerun_is_identical(tmp_path):
    sets = SMALL + ["run.experiment=tails", "run.replicas=20", f"run.output={tmp_path / 'first'}"]
    assert main(["run", "/dev/null"] + sum((["--set", s] for s in sets), [])) == 0
    assert main(["run", str(tmp_path / "first" / "manifest.json"), "--manifest",
                 "--set", f"run.output={tmp_path / 'second'}"]) == 0
    assert _files(tmp_path / "first") == _files(tmp_path / "second")


def test_shape_experiment_runs(tmp_path):
    sets = ["lattice.dimension=2", "lattice.window_radius=45", "env.lambda=1.5", "run.horizon=10",
            "run.t_surv=4", "run.experiment=shape", "run.replicas=4", "shape.t_grid=2 4", "shape.mu_replicas=12",
            "shape.mu_n_grid=1 2", "shape.mu_horizon=8", "shape.mu_window_radius=30", f"run.output={tmp_path / 's'}"]
    cfg = load_config(None, sets)
    m = run_experiment(cfg, figures=True)
    out = tmp_path / "s"
    for name in ("shape_summary.csv", "shape_t2.csv", "shape_t4.csv", "mu.csv", "shape_pass_rate.png"):
        assert (out / name).exists()
    assert set(m["summary"]["counts"]) == {"ok", "died", "truncated"}


def test_report_renders_figures(tmp_path):
    out = tmp_path / "sim"
    sets = SMALL + ["run.replicas=8", "simulate.coupling_times=2 4", f"run.output={out}"]
    cfg = load_config(None, sets)
    run_experiment(cfg)
    assert main(["report", str(out)]) == 0
    assert (out / "lifetimes.png").exists() and (out / "coupling.png").exists()


def _long_run(seed):
    from contactshape.dynamics import run_contact
    from contactshape.environment import LatticeSpec, make_deterministic_env
    from contactshape.field import field_new
    w = LatticeSpec(1, 100)
    tr = run_contact(field_new(make_deterministic_env(w, 2.0), seed), [w.site(i) for i in range(w.n_sites)],
                     0.0, 480.0, w)
    return len(tr.times)


def test_thousand_long_replicas_within_budget():
    import time
    t0 = time.time()
    counts = parallel_map(range(1000), _long_run, 1)
    elapsed = time.time() - t0
    assert min(counts) >= 10 ** 5
    assert elapsed < 600, elapsed
