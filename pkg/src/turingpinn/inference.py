"""Training the inverse problem and aggregating independent restarts."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import PDE_NAMES, Pattern, RDParams
from .nn import DEFAULT_LAYERS, AdamState, TrainableSet, adam_step, mlp_init
from .pinn import N_BC, W_F, LossBreakdown, NonFiniteLossError, PointSets, backprop, build_point_sets, loss

log = logging.getLogger(__name__)

# Which of (d1, d2, alpha, beta, r1) each experiment infers.
PARAMETER_SETS = {
    "A": ("d1", "d2"),
    "B": ("alpha", "beta"),
    "C": ("d1", "d2", "alpha", "beta"),
    "D": ("d1", "alpha", "beta"),
    "E": ("d1", "alpha", "beta", "r1"),
}


def set_mask(set_id: str) -> tuple[bool, ...]:
    try:
        names = PARAMETER_SETS[set_id.upper()]
    except KeyError:
        raise KeyError(f"unknown parameter set {set_id!r}; expected one of {', '.join(PARAMETER_SETS)}") from None
    return tuple(n in names for n in PDE_NAMES)


def initial_params(reference: RDParams, set_id: str) -> RDParams:
    """Trainable parameters start at 0 (beta at 1); the rest keep their reference values."""
    start = {name: (1.0 if name == "beta" else 0.0) for name in PARAMETER_SETS[set_id.upper()]}
    return reference.with_values(**start)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    batch_size: int = 25
    lr: float = 2.5e-4
    pde_lr_scale: float = 10.0
    w_f: float = W_F
    warmup_epochs: int = 100
    n_bc: int = N_BC
    bc_every: int = 8
    layer_sizes: tuple[int, ...] = DEFAULT_LAYERS
    input_scale: float = 10.0
    output_scaling: bool = True
    early_stop: bool = True
    patience_epochs: int = 500
    min_improvement: float = 0.01
    history_every: int = 50
    n_h: int | None = None
    n_f: int | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.bc_every < 1:
            raise ValueError("epochs, batch_size and bc_every must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if self.lr <= 0 or self.pde_lr_scale <= 0 or self.w_f < 0 or self.input_scale <= 0:
            raise ValueError("lr, pde_lr_scale and input_scale must be positive, w_f non-negative")
        object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Reduced budget used by the acceptance suite."""
        return cls(**{"epochs": 1000, **overrides})

    def as_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d


@dataclass
class InferenceRun:
    set_id: str
    restart_seed: int
    inferred: RDParams
    final_loss: LossBreakdown
    epochs: int
    wall_time: float
    stop_reason: str
    history: list[dict] = field(default_factory=list)
    beta_nudges: int = 0
    failed: bool = False
    error: str | None = None
    theta: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self, timing: bool = False) -> dict:
        """JSON-ready record.  Wall time is left out unless asked for, so reruns give identical files."""
        d = {
            "set_id": self.set_id,
            "restart_seed": self.restart_seed,
            "inferred": self.inferred.as_dict(),
            "final_loss": self.final_loss.as_dict(),
            "epochs": self.epochs,
            "stop_reason": self.stop_reason,
            "beta_nudges": self.beta_nudges,
            "failed": self.failed,
            "error": self.error,
            "history": self.history,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def full_loss(ts: TrainableSet, sets: PointSets, w_f: float) -> LossBreakdown:
    """Loss over every point, evaluated in chunks to bound memory."""
    total_h = total_f = 0.0
    n = sets.n_f
    chunk = 500
    shared = sets.data_points is sets.collocation_points or (
        sets.n_h == sets.n_f and np.array_equal(sets.data_points, sets.collocation_points))
    if shared:
        for s in range(0, n, chunk):
            idx = np.arange(s, min(n, s + chunk))
            br, _ = loss(ts, sets, w_f, include_bc=False, data_idx=idx, colloc_idx=idx, shared=True)
            total_h += br.mse_h * len(idx)
            total_f += br.mse_f * len(idx)
        mse_h, mse_f = total_h / n, total_f / n
    else:
        br, _ = loss(ts, sets, w_f, include_bc=False)
        mse_h, mse_f = br.mse_h, br.mse_f
    bc = 0.0
    if sets.n_bc:
        only_bc = PointSets(sets.data_points[:0], sets.data_targets[:0], sets.collocation_points[:0],
                            sets.boundary_points, sets.stencil_h)
        bc = loss(ts, only_bc, w_f)[0].mse_bc
    return LossBreakdown(mse_h, mse_f, bc, w_f)


def data_loss(ts: TrainableSet, sets: PointSets) -> float:
    r = ts.net.forward_points(sets.data_points) - sets.data_targets
    return float(np.sum(r * r)) / (2 * sets.n_h)


def output_map(pattern: Pattern) -> tuple[np.ndarray, np.ndarray]:
    """Per-field mean and standard deviation; a flat field gets unit scale."""
    fields = np.stack([pattern.u.ravel(), pattern.v.ravel()], axis=1)
    std = fields.std(axis=0)
    return fields.mean(axis=0), np.where(std > 0, std, 1.0)


def _seeds(restart_seed: int):
    init, points, batches = np.random.SeedSequence(restart_seed).spawn(3)
    return (int(init.generate_state(1)[0]), int(points.generate_state(1)[0]),
            np.random.default_rng(batches))


def train_inverse(pattern: Pattern, set_id: str, cfg: TrainConfig, restart_seed: int,
                  reference: RDParams, progress=None) -> InferenceRun:
    """Fit a fresh network and the set's trainable parameters to ``pattern``.

    Fixed parameters come from ``reference``.  Each epoch shuffles the paired
    data/collocation points into batches; every ``bc_every``-th batch also carries
    all boundary points.  A non-finite loss ends the run with ``failed=True``.
    """
    set_id = set_id.upper()
    mask = set_mask(set_id)
    grid = pattern.grid
    init_seed, point_seed, rng = _seeds(restart_seed)
    half = np.array([0.5 * (grid.x_max - grid.x_min), 0.5 * (grid.y_max - grid.y_min)]) / cfg.input_scale
    centre = np.array([0.5 * (grid.x_max + grid.x_min), 0.5 * (grid.y_max + grid.y_min)])
    out_center, out_scale = output_map(pattern) if cfg.output_scaling else (None, None)
    net = mlp_init(init_seed, cfg.layer_sizes, input_lo=centre - half, input_hi=centre + half,
                   output_center=out_center, output_scale=out_scale)
    ts = TrainableSet.create(net, initial_params(reference, set_id), mask)
    sets = build_point_sets(pattern, n_bc=cfg.n_bc, seed=point_seed, n_h=cfg.n_h, n_f=cfg.n_f)
    opt = AdamState.for_set(ts, lr=cfg.lr, pde_lr_scale=cfg.pde_lr_scale)

    shared = sets.n_h == sets.n_f and np.array_equal(sets.data_points, sets.collocation_points)
    n_points = sets.n_f
    n_batches = max(1, n_points // cfg.batch_size)
    history: list[dict] = []
    best: list[float] = []
    stop_reason = "epochs"
    t0 = time.perf_counter()
    epoch = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(n_points)
            data_perm = perm if shared else rng.permutation(sets.n_h)
            w_f = 0.0 if epoch <= cfg.warmup_epochs else cfg.w_f
            for b in range(n_batches):
                idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                didx = idx if shared else data_perm[(b * cfg.batch_size) % sets.n_h:][:cfg.batch_size]
                _, graph = loss(ts, sets, w_f, include_bc=(b % cfg.bc_every == 0),
                                data_idx=didx, colloc_idx=idx, shared=shared)
                adam_step(opt, ts, backprop(ts, graph))
            mse_h = data_loss(ts, sets)
            if not math.isfinite(mse_h):
                raise NonFiniteLossError("mse_h", mse_h)
            best.append(min(mse_h, best[-1]) if best else mse_h)
            if epoch % cfg.history_every == 0 or epoch == 1:
                br = full_loss(ts, sets, cfg.w_f)
                history.append({"epoch": epoch, **br.as_dict(), **_named(ts)})
                if progress is not None:
                    progress(epoch, br, ts.params)
            if cfg.early_stop and epoch > cfg.patience_epochs:
                before = best[-1 - cfg.patience_epochs]
                if best[-1] > (1.0 - cfg.min_improvement) * before:
                    stop_reason = "plateau"
                    break
    except (NonFiniteLossError, FloatingPointError) as exc:
        log.warning("restart %d of set %s failed at epoch %d: %s", restart_seed, set_id, epoch, exc)
        nan = float("nan")
        return InferenceRun(set_id, restart_seed, _safe_params(ts), LossBreakdown(nan, nan, nan, cfg.w_f),
                            epoch, time.perf_counter() - t0, "failed", history, ts.beta_nudges,
                            failed=True, error=str(exc))
    final = full_loss(ts, sets, cfg.w_f)
    if not history or history[-1]["epoch"] != epoch:
        history.append({"epoch": epoch, **final.as_dict(), **_named(ts)})
    return InferenceRun(set_id, restart_seed, ts.params, final, epoch, time.perf_counter() - t0,
                        stop_reason, history, ts.beta_nudges, theta=ts.theta.copy())


def _named(ts: TrainableSet) -> dict[str, float]:
    return {name: float(val) for name, val in zip(PDE_NAMES, ts.pde)}


def _safe_params(ts: TrainableSet) -> RDParams:
    vec = np.where(np.isfinite(ts.pde), ts.pde, 0.0)
    if vec[3] == 0.0:
        vec[3] = 1.0
    return RDParams.from_trainable_vector(vec, ts.r2)


@dataclass
class ParamSummary:
    name: str
    mean: float
    variance: float
    error_pct: float
    reference: float


@dataclass
class RunAggregate:
    set_id: str
    summaries: list[ParamSummary]
    mean_data_loss: float
    runs: list[InferenceRun]
    failed: list[InferenceRun]
    alternative_seeds: list[int]

    def summary(self, name: str) -> ParamSummary:
        for s in self.summaries:
            if s.name == name:
                return s
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "parameters": [asdict(s) for s in self.summaries],
            "mean_data_loss": self.mean_data_loss,
            "runs": [r.restart_seed for r in self.runs],
            "failed": [{"restart_seed": r.restart_seed, "error": r.error} for r in self.failed],
            "alternative_seeds": self.alternative_seeds,
        }


def percent_error(value: float, reference: float) -> float:
    return 100.0 * abs(value - reference) / abs(reference)


def aggregate(runs: list[InferenceRun], reference: RDParams, set_id: str, z_threshold: float = 3.0) -> RunAggregate:
    """Population mean/variance per trainable parameter over the successful runs."""
    ok = [r for r in runs if not r.failed]
    failed = [r for r in runs if r.failed]
    names = PARAMETER_SETS[set_id.upper()]
    summaries = []
    for name in names:
        vals = np.array([getattr(r.inferred, name) for r in ok])
        ref = getattr(reference, name)
        if len(vals):
            mean = float(np.mean(vals))
            var = float(np.mean((vals - mean) ** 2))
        else:
            mean = var = float("nan")
        summaries.append(ParamSummary(name, mean, var, percent_error(mean, ref), ref))
    mdl = float(np.mean([r.final_loss.mse_h for r in ok])) if ok else float("nan")
    return RunAggregate(set_id.upper(), summaries, mdl, ok, failed,
                        alternative_candidates(ok, names, z_threshold))


def alternative_candidates(runs: list[InferenceRun], names, z_threshold: float = 3.0) -> list[int]:
    """Seeds of runs lying more than ``z_threshold`` leave-one-out deviations from the others.

    Leave-one-out matters: with the outlier included, a population z-score over n
    runs cannot exceed ``(n-1)/sqrt(n)`` (2.47 for eight runs).
    """
    if len(runs) < 3:
        return []
    table = np.array([[getattr(r.inferred, n) for n in names] for r in runs])
    flagged = []
    for i, run in enumerate(runs):
        rest = np.delete(table, i, axis=0)
        mu = rest.mean(axis=0)
        sd = rest.std(axis=0)
        floor = 1e-9 * np.maximum(1.0, np.abs(mu))
        z = np.abs(table[i] - mu) / np.maximum(sd, floor)
        if np.any(z > z_threshold):
            flagged.append(run.restart_seed)
    return flagged


def restart_seeds(base_seed: int, n_runs: int) -> list[int]:
    return [base_seed * 1000 + i for i in range(n_runs)]


def _run_one(args):
    pattern, set_id, cfg, seed, reference = args
    return train_inverse(pattern, set_id, cfg, seed, reference)


def multi_restart(pattern: Pattern, set_id: str, cfg: TrainConfig, reference: RDParams,
                  n_runs: int = 8, base_seed: int = 0, workers: int | None = None) -> RunAggregate:
    """Independent restarts (own network, optimizer and RNG each), joined into one aggregate."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = restart_seeds(base_seed, n_runs)
    jobs = [(pattern, set_id, cfg, s, reference) for s in seeds]
    workers = min(n_runs, workers or os.cpu_count() or 1)
    if workers <= 1:
        runs = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    return aggregate(runs, reference, set_id)


def with_epochs(cfg: TrainConfig, epochs: int) -> TrainConfig:
    return replace(cfg, epochs=epochs)
