"""Strict JSON configuration for the command-line harness.

One document drives every subcommand; each section is optional and falls back
to the library defaults.  Parsing is strict — an unknown key is an error that
names the full dotted path — and ``dump_config``/``load_config`` round-trip
exactly, so the ``resolved_config.json`` emitted next to any run's outputs is
sufficient to reproduce them.

Schema sketch (all keys optional)::

    {
      "run":      {"encoder": {...}, "task": {...}, "energy": {...},
                   "thermo": {...}, "eta": .., "steps": .., "seed": ..,
                   "log_every": .., "batch_size": .., "resample_reward": ..,
                   "track_gen_gap": ..},
      "sweep":    {"betas": [..], "surrogates": [..], "modes": [..], "jobs": ..},
      "langevin": {"potential": "quadratic", "beta": .., "dt": .., "steps": ..,
                   "n_particles": .., "seed": .., "init_loc": .., "init_scale": ..,
                   "lo": .., "hi": .., "m": ..},
      "fokker_planck": {"potential": .., "beta": .., "lo": .., "hi": .., "m": ..,
                        "dt_fraction": .., "steps": .., "record_every": ..,
                        "init_mean": .., "init_var": ..},
      "scaling":  {"a": .., "b": .., "alpha": .., "gamma_exp": .., "q": ..,
                   "l_inf": .., "svals": [..], "noise": .., "seed": ..},
      "memory":   {"n": .., "load_ratios": [..], "n_seeds": .., "t_steps": ..,
                   "flip_fraction": .., "retrieval_threshold": .., "tau_r": ..,
                   "mode": .., "base_seed": ..},
      "output_dir": "runs", "tag": null, "plots": true
    }

The energy section accepts ``"lambda"`` for the decoupling weight (stored
internally as ``lam``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
import json
from pathlib import Path

from .dynamics import EnergyConfig
from .errors import ConfigError
from .models import EncoderSpec, TaskSpec
from .surrogates import SurrogateConfig
from .thermostat import RunConfig, ThermostatConfig


@dataclass(frozen=True)
class SweepSettings:
    betas: tuple = (0.0, 0.1, 0.5)
    surrogates: tuple = ("logdet",)
    modes: tuple = ("fixed",)
    jobs: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class LangevinSettings:
    potential: str = "quadratic"
    beta: float = 0.5
    dt: float = 1e-3
    steps: int = 10_000
    n_particles: int = 100_000
    seed: int = 0
    init_loc: float = 0.0
    init_scale: float = 0.0
    lo: float = -8.0
    hi: float = 8.0
    m: int = 200

    def __post_init__(self):
        if self.potential not in ("quadratic", "double_well"):
            raise ConfigError(f"unknown potential {self.potential!r}")


@dataclass(frozen=True)
class FPSettings:
    potential: str = "quadratic"
    beta: float = 0.5
    lo: float = -8.0
    hi: float = 8.0
    m: int = 400
    dt_fraction: float = 0.5  # of the explicit stability limit
    steps: int = 10_000
    record_every: int = 100
    init_mean: float = 2.0
    init_var: float = 0.25

    def __post_init__(self):
        if self.potential not in ("quadratic", "double_well"):
            raise ConfigError(f"unknown potential {self.potential!r}")
        if not 0.0 < self.dt_fraction <= 1.0:
            raise ConfigError(f"dt_fraction must be in (0, 1], got {self.dt_fraction}")


@dataclass(frozen=True)
class ScalingSettings:
    a: float = 1.0
    b: float = 1.0
    alpha: float = 1.0
    gamma_exp: float = 0.5
    q: float = 0.5
    l_inf: float = 0.0
    svals: tuple = (4.0, 16.0, 64.0, 256.0, 1024.0)
    noise: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class MemorySettings:
    n: int = 200
    load_ratios: tuple = (0.05, 0.1, 0.138, 0.2, 0.3)
    n_seeds: int = 50
    t_steps: int = 30
    flip_fraction: float = 0.1
    retrieval_threshold: float = 0.9
    tau_r: float = 0.9
    mode: str = "sync_sign"
    base_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = RunConfig()
    sweep: SweepSettings = SweepSettings()
    langevin: LangevinSettings = LangevinSettings()
    fokker_planck: FPSettings = FPSettings()
    scaling: ScalingSettings = ScalingSettings()
    memory: MemorySettings = MemorySettings()
    output_dir: str = "runs"
    tag: str | None = None
    plots: bool = True


# JSON key -> dataclass attribute renames, per class
_RENAMES: dict[type, dict[str, str]] = {EnergyConfig: {"lambda": "lam"}}
# fields that hold nested dataclasses
_NESTED: dict[type, dict[str, type]] = {
    RunConfig: {
        "encoder": EncoderSpec,
        "task": TaskSpec,
        "energy": EnergyConfig,
        "thermo": ThermostatConfig,
    },
    EnergyConfig: {"surrogate": SurrogateConfig},
    ExperimentConfig: {
        "run": RunConfig,
        "sweep": SweepSettings,
        "langevin": LangevinSettings,
        "fokker_planck": FPSettings,
        "scaling": ScalingSettings,
        "memory": MemorySettings,
    },
}


def _build(cls: type, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected an object, got {type(data).__name__}")
    renames = _RENAMES.get(cls, {})
    nested = _NESTED.get(cls, {})
    by_name = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = renames.get(key, key)
        if name not in by_name:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {where!r}")
        child_path = f"{path}.{key}" if path else key
        if name in nested:
            kwargs[name] = _build(nested[name], value, child_path)
        elif isinstance(value, list) and isinstance(by_name[name].default, tuple):
            kwargs[name] = tuple(value)  # JSON arrays stand in for tuple fields
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file; empty object means all defaults."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def _to_jsonable(obj, cls: type):
    renames = {v: k for k, v in _RENAMES.get(cls, {}).items()}
    nested = _NESTED.get(cls, {})
    out = {}
    for f in fields(cls):
        value = getattr(obj, f.name)
        key = renames.get(f.name, f.name)
        if f.name in nested:
            out[key] = _to_jsonable(value, nested[f.name])
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _to_jsonable(cfg, ExperimentConfig)


def dump_config(cfg: ExperimentConfig, path) -> None:
    """Write the fully-resolved config; load_config inverts this exactly."""
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
