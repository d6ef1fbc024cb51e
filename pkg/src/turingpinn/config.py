"""Workbench configuration: JSON file form, environment overrides and defaults.

Precedence, highest first: command-line flag, ``TURINGPINN_*`` environment
variable, config file, built-in default.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .core import GridSpec
from .inference import TrainConfig
from .solver import SolverConfig, stable_dt

ENV_PREFIX = "TURINGPINN_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    """Solver settings minus ``dt``, which is derived per parameter set unless given."""

    dt: float | None = None
    max_steps: int = 2_000_000
    steady_tol: float = 1e-6
    seed_amplitude: float = 0.05
    boundary: str = "zero-flux"
    progress_every: int = 10_000

    def for_params(self, params, grid: GridSpec, rng_seed: int) -> SolverConfig:
        dt = self.dt if self.dt is not None else stable_dt(params, grid)
        return SolverConfig(dt=dt, max_steps=self.max_steps, steady_tol=self.steady_tol,
                            seed_amplitude=self.seed_amplitude, rng_seed=rng_seed,
                            boundary=self.boundary, progress_every=self.progress_every)


@dataclass(frozen=True)
class WorkbenchConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    solver: SolverSettings = field(default_factory=SolverSettings)
    training: TrainConfig = field(default_factory=TrainConfig)
    matrix: str = "baseline"
    n_restarts: int = 8
    output_dir: str = "runs"
    seed: int = 0
    validation_threshold: float = 0.10
    workers: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": self.grid.as_dict(),
            "solver": asdict(self.solver),
            "training": self.training.as_dict(),
            "matrix": self.matrix,
            "n_restarts": self.n_restarts,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "validation_threshold": self.validation_threshold,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorkbenchConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown("config", data, {f.name for f in fields(cls)})
        kwargs: dict[str, Any] = {}
        for name, typ in (("grid", GridSpec), ("solver", SolverSettings), ("training", TrainConfig)):
            if name in data:
                section = data[name]
                if not isinstance(section, dict):
                    raise ConfigError(f"{name} must be an object")
                _reject_unknown(name, section, {f.name for f in fields(typ)})
                try:
                    kwargs[name] = typ(**section)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{name}: {exc}") from None
        for key in ("matrix", "n_restarts", "output_dir", "seed", "validation_threshold", "workers"):
            if key in data:
                kwargs[key] = data[key]
        cfg = cls(**kwargs)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.n_restarts < 1:
            raise ConfigError("n_restarts must be >= 1")
        if self.matrix not in MATRICES:
            raise ConfigError(f"matrix must be one of {', '.join(MATRICES)}")
        if not 0 < self.validation_threshold:
            raise ConfigError("validation_threshold must be positive")

    def with_overrides(self, **overrides) -> "WorkbenchConfig":
        """Apply flat overrides; ``None`` means "not given".  ``epochs`` targets the training section."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        training = self.training
        if "epochs" in overrides:
            training = replace(training, epochs=int(overrides.pop("epochs")))
        cfg = replace(self, training=training, **overrides)
        cfg.check()
        return cfg


MATRICES = ("baseline", "tables", "desk")

_ENV_FIELDS = {
    "SEED": ("seed", int),
    "OUT": ("output_dir", str),
    "EPOCHS": ("epochs", int),
    "RESTARTS": ("n_restarts", int),
    "WORKERS": ("workers", int),
}


def _reject_unknown(where: str, data: dict, allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def env_overrides(environ=None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    for suffix, (name, conv) in _ENV_FIELDS.items():
        raw = environ.get(ENV_PREFIX + suffix)
        if raw is not None:
            try:
                out[name] = conv(raw)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX + suffix}={raw!r} is not a valid {conv.__name__}") from None
    return out


def load_config(path: str | os.PathLike | None = None, cli: dict[str, Any] | None = None,
                environ=None) -> WorkbenchConfig:
    cfg = WorkbenchConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        cfg = WorkbenchConfig.from_dict(data)
    cfg = cfg.with_overrides(**env_overrides(environ))
    return cfg.with_overrides(**(cli or {}))


def dump_config(cfg: WorkbenchConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
