"""Workflows shared by the command line and the acceptance suite.

Every workflow writes plain files: pattern CSVs with JSON sidecars, one JSON
per inference restart, aggregate CSV/JSON tables and a manifest recording the
configuration, its hash and the seeds used.
"""

from __future__ import annotations

import logging
import platform
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import pattern_stats
from .config import WorkbenchConfig
from .core import Pattern, RDParams, params_for_pattern
from .files import (config_hash, read_pattern, write_aggregate_csv, write_history_csv, write_json,
                    write_params, write_pattern, write_spectrum_csv)
from .inference import PARAMETER_SETS, RunAggregate, TrainConfig, multi_restart
from .solver import SolveResult, run_to_steady_state

log = logging.getLogger(__name__)

MATRIX_CELLS = {
    "baseline": [("P", "A"), ("P", "B")],
    "tables": [("P", "C"), ("P", "D"), ("P", "E"), ("Q", "C"), ("Q", "D"), ("Q", "E"), ("R", "D")],
}


@dataclass
class Generated:
    name: str
    params: RDParams
    result: SolveResult
    path: Path

    @property
    def pattern(self) -> Pattern:
        return self.result.pattern


def generate(cfg: WorkbenchConfig, params: RDParams, out_dir, name: str, seed: int | None = None,
             progress=None) -> Generated:
    """Solve to steady state and write ``<name>.csv`` (+ sidecar), stats and spectrum."""
    out_dir = Path(out_dir)
    seed = cfg.seed if seed is None else seed
    solver_cfg = cfg.solver.for_params(params, cfg.grid, rng_seed=seed)
    result = run_to_steady_state(params, cfg.grid, solver_cfg, progress=progress)
    if not result.converged:
        log.warning("%s: step budget exhausted with max rate %.3e", name, result.max_rate)
    path = write_pattern(result.pattern, out_dir / f"{name}.csv")
    stats = pattern_stats(result.pattern)
    write_json(out_dir / f"{name}_stats.json", stats.summary())
    write_spectrum_csv(out_dir / f"{name}_spectrum.csv", stats.spectrum_k, stats.spectrum_power)
    return Generated(name, params, result, path)


def load_or_generate(cfg: WorkbenchConfig, name: str, out_dir) -> Pattern:
    """Reuse ``<out_dir>/<name>.csv`` when its sidecar matches the requested solve, else regenerate."""
    params = params_for_pattern(name)
    path = Path(out_dir) / f"{name}.csv"
    seed = cfg.seed
    if path.exists():
        pattern = read_pattern(path)
        prov = pattern.provenance or {}
        wanted = cfg.solver.for_params(params, cfg.grid, rng_seed=seed).as_dict()
        if prov.get("params") == params.as_dict() and prov.get("solver") == wanted \
                and pattern.grid == cfg.grid:
            return pattern
    return generate(cfg, params, out_dir, name, seed=seed).pattern


def infer_cell(cfg: WorkbenchConfig, pattern: Pattern, reference: RDParams, set_id: str,
               out_dir) -> RunAggregate:
    """Run the configured number of restarts for one (pattern, set) cell and write its artifacts."""
    out_dir = Path(out_dir)
    agg = multi_restart(pattern, set_id, cfg.training, reference, n_runs=cfg.n_restarts,
                        base_seed=cfg.seed, workers=cfg.workers)
    for run in agg.runs + agg.failed:
        write_json(out_dir / "runs" / f"restart_{run.restart_seed}.json", run.as_dict())
    write_json(out_dir / "timings.json",
               {str(r.restart_seed): r.wall_time for r in agg.runs + agg.failed})
    write_aggregate_csv(out_dir / "aggregate.csv", agg)
    write_json(out_dir / "aggregate.json", agg.as_dict())
    write_history_csv(out_dir / "history.csv", agg.runs)
    if agg.runs:
        write_params(out_dir / "inferred.json", mean_params(agg, reference))
    return agg


def mean_params(agg: RunAggregate, reference: RDParams) -> RDParams:
    """Reference parameters with each inferred entry replaced by its restart mean."""
    return reference.with_values(**{s.name: s.mean for s in agg.summaries})


def write_manifest(cfg: WorkbenchConfig, out_dir, command: str, extra: dict | None = None) -> Path:
    data = cfg.to_dict()
    manifest = {
        "command": command,
        "config": data,
        "config_hash": config_hash(data),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    return write_json(Path(out_dir) / "manifest.json", manifest)


def with_budget(cfg: WorkbenchConfig, epochs: int, restarts: int) -> WorkbenchConfig:
    return replace(cfg, training=replace(cfg.training, epochs=epochs), n_restarts=restarts)


def trainable_names(set_id: str) -> tuple[str, ...]:
    return PARAMETER_SETS[set_id.upper()]
