"""Run configuration: an INI file with sections, plus ``section.key=value`` overrides.

Replica ``i`` always uses seed ``base_seed + i``.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .environment import (EnvironmentField, LatticeSpec, make_deterministic_env, make_iid_env,
                          two_point, uniform)
from .errors import ConfigurationError
from .field import GraphicalField, field_new, load_fixture

EXPERIMENTS = ("simulate", "mu", "shape", "tails", "defect", "restart", "ergodic")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "run": {"experiment": "simulate", "replicas": "1", "base_seed": "0", "workers": "1",
            "output": "out", "horizon": "100", "t_surv": ""},
    "lattice": {"dimension": "1", "window_radius": "50"},
    "env": {"kind": "constant", "lambda": "2.0", "lo": "", "hi": "", "p": "0.5", "seed": "0",
            "lambda_min": "", "lambda_max": "", "per_replica": "false"},
    "field": {"seed": "0", "slab_length": "1.0", "fixture": ""},
    "simulate": {"initial": "0", "model": "contact", "events": "true", "coupling_times": ""},
    "mu": {"directions": "1", "n_grid": "2 4 8 16 32"},
    "shape": {"t_grid": "10 20 40", "epsilon": "0.25", "mu_directions": "1 0; 1 1", "mu_replicas": "40",
              "mu_n_grid": "4 8 16", "mu_seed_offset": "1000000", "max_surviving": "0",
              "dump_replicas": "5", "mu_horizon": "", "mu_window_radius": ""},
    "tails": {"target": "10"},
    "defect": {"scales": "5 10 20", "direction": "1"},
    "restart": {"lambda_min": "", "thin_seed": "0", "rho_replicas": "2000", "rho_seed_offset": "1000000"},
    "ergodic": {"families": "a b c d", "N": "100000", "tol": "0.01", "sample_size": "10000",
                "sigma_replicas": "0", "sigma_N": "100", "sigma_direction": "1"},
}


def _ints(s: str) -> List[int]:
    return [int(v) for v in s.replace(",", " ").split()]


def _floats(s: str) -> List[float]:
    return [float(v) for v in s.replace(",", " ").split()]


def _vectors(s: str) -> List[Tuple[int, ...]]:
    return [tuple(_ints(part)) for part in s.split(";") if part.strip()]


@dataclass
class RunConfig:
    """Parsed and validated configuration; ``raw`` keeps every key as text for the manifest."""

    raw: Dict[str, Dict[str, str]]
    experiment: str
    replicas: int
    base_seed: int
    workers: int
    output: Path
    horizon: float
    t_surv: float
    lattice: LatticeSpec
    fixture_path: Optional[str] = None

    def get(self, section: str, key: str) -> str:
        return self.raw[section][key]

    def ints(self, section, key) -> List[int]:
        return _ints(self.get(section, key))

    def floats(self, section, key) -> List[float]:
        return _floats(self.get(section, key))

    def vectors(self, section, key) -> List[Tuple[int, ...]]:
        return _vectors(self.get(section, key))

    def flag(self, section, key) -> bool:
        return self.get(section, key).strip().lower() in ("1", "true", "yes", "on")

    @property
    def seeds(self) -> List[int]:
        return [self.base_seed + i for i in range(self.replicas)]

    # builders ---------------------------------------------------------------

    def environment(self, replica_seed: int = 0, lattice: Optional[LatticeSpec] = None) -> EnvironmentField:
        e = self.raw["env"]
        spec = lattice or self.lattice
        kind = e["kind"]
        lam_min = float(e["lambda_min"]) if e["lambda_min"] else None
        lam_max = float(e["lambda_max"]) if e["lambda_max"] else None
        seed = int(e["seed"]) + (replica_seed if self.flag("env", "per_replica") else 0)
        if kind == "constant":
            return make_deterministic_env(spec, float(e["lambda"]), lam_min, lam_max)
        if not e["lo"] or not e["hi"]:
            raise ConfigurationError(f"env.kind={kind} needs env.lo and env.hi")
        lo, hi = float(e["lo"]), float(e["hi"])
        if kind == "uniform":
            dist = uniform(lo, hi)
        elif kind == "two_point":
            dist = two_point(lo, hi, float(e["p"]))
        else:
            raise ConfigurationError(f"unknown env.kind {kind!r}")
        return make_iid_env(spec, dist, seed, lam_min, lam_max)

    def field(self, replica_seed: int, lattice: Optional[LatticeSpec] = None) -> GraphicalField:
        env = self.environment(replica_seed, lattice)
        fx = load_fixture(self.fixture_path) if self.fixture_path else None
        # the field seed mixes the configured base with the replica seed
        fseed = (int(self.get("field", "seed")) << 32) + int(replica_seed)
        return field_new(env, fseed, float(self.get("field", "slab_length")), fx)


def _parse_value_errors(fn):
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except ConfigurationError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigurationError(str(exc)) from exc
    return wrapper


def apply_overrides(raw: Dict[str, Dict[str, str]], overrides: Sequence[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        section, key = section.strip(), key.strip()
        if section not in raw:
            raise ConfigurationError(f"unknown section {section!r}")
        if key not in raw[section]:
            raise ConfigurationError(f"unknown key {section}.{key}")
        raw[section][key] = value.strip()


def raw_from_file(path: Optional[str]) -> Dict[str, Dict[str, str]]:
    raw = {s: dict(v) for s, v in DEFAULTS.items()}
    if path is None:
        return raw
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for section in cp.sections():
        if section not in raw:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in raw[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            raw[section][key] = value
    return raw


@_parse_value_errors
def build_config(raw: Dict[str, Dict[str, str]], base_dir: Optional[Path] = None) -> RunConfig:
    r = raw["run"]
    exp = r["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")
    replicas = int(r["replicas"])
    if replicas < 1:
        raise ConfigurationError("replicas must be >= 1")
    workers = int(r["workers"])
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    horizon = float(r["horizon"])
    t_surv = float(r["t_surv"]) if r["t_surv"] else horizon / 2
    if not horizon > 0:
        raise ConfigurationError("horizon must be positive")
    if not 0 < t_surv <= horizon:
        raise ConfigurationError(f"t_surv={t_surv} must lie in (0, horizon={horizon}]")
    lattice = LatticeSpec(int(raw["lattice"]["dimension"]), int(raw["lattice"]["window_radius"]))
    fx = raw["field"]["fixture"] or None
    if fx and base_dir is not None and not Path(fx).is_absolute():
        fx = str((base_dir / fx).resolve())
        raw["field"]["fixture"] = fx
    cfg = RunConfig(raw, exp, replicas, int(r["base_seed"]), workers, Path(r["output"]), horizon, t_surv,
                    lattice, fx)
    cfg.environment()  # validate the environment block eagerly
    if int(raw["ergodic"]["sigma_N"]) < 10:
        raise ConfigurationError("ergodic.sigma_N must be at least 10")
    if float(raw["field"]["slab_length"]) <= 0:
        raise ConfigurationError("field.slab_length must be positive")
    return cfg


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    raw = raw_from_file(path)
    apply_overrides(raw, overrides)
    return build_config(raw, Path(path).parent if path else None)


def dump_raw(raw: Dict[str, Dict[str, str]]) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for section, items in raw.items():
        cp[section] = items
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
