"""Explicit-Euler finite-difference solver that evolves the model to a steady Turing pattern."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numba
import numpy as np

from .core import GridSpec, Pattern, RDParams, reaction_rhs

log = logging.getLogger(__name__)

BOUNDARIES = ("zero-flux", "periodic")
STABILITY_SAFETY = 0.2
FALLBACK_DT = 1.0


class DivergenceError(RuntimeError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


def stable_dt(p: RDParams, grid: GridSpec, safety: float = STABILITY_SAFETY,
              fallback: float = FALLBACK_DT) -> float:
    diff = max(abs(p.d1 * p.d2), abs(p.d2))
    if diff == 0.0:
        return fallback
    return safety * min(grid.dx, grid.dy) ** 2 / (4.0 * diff)


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    max_steps: int = 2_000_000
    steady_tol: float = 1e-6
    seed_amplitude: float = 0.05
    rng_seed: int = 0
    boundary: str = "zero-flux"
    progress_every: int = 10_000

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.steady_tol > 0 and self.seed_amplitude > 0):
            raise ValueError("dt, steady_tol and seed_amplitude must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @classmethod
    def for_problem(cls, p: RDParams, grid: GridSpec, **kwargs) -> "SolverConfig":
        """Config whose ``dt`` is the stability-limited step for ``p`` on ``grid``."""
        return cls(dt=stable_dt(p, grid), **kwargs)

    def check_stable(self, p: RDParams, grid: GridSpec) -> None:
        limit = stable_dt(p, grid)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:g} exceeds the stability bound {limit:g}")

    def as_dict(self) -> dict:
        return asdict(self)


def seed_fields(grid: GridSpec, amplitude: float, rng_seed: int) -> Pattern:
    """Uniform noise in ``[-amplitude, amplitude]`` for both species."""
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(rng_seed)
    u = rng.uniform(-amplitude, amplitude, size=grid.shape)
    v = rng.uniform(-amplitude, amplitude, size=grid.shape)
    return Pattern(grid, u, v, provenance={"seed_amplitude": amplitude, "rng_seed": rng_seed})


def laplacian(field: np.ndarray, grid: GridSpec, boundary: str = "zero-flux") -> np.ndarray:
    """Five-point Laplacian.  Zero-flux mirrors the first interior node into the ghost cell."""
    f = np.asarray(field, dtype=np.float64)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    mode = {"zero-flux": "reflect", "periodic": "wrap"}[boundary]
    g = np.pad(f, 1, mode=mode)
    return ((g[1:-1, 2:] + g[1:-1, :-2] - 2.0 * f) / grid.dx ** 2
            + (g[2:, 1:-1] + g[:-2, 1:-1] - 2.0 * f) / grid.dy ** 2)


def _rates(u: np.ndarray, v: np.ndarray, p: RDParams, grid: GridSpec, boundary: str):
    return reaction_rhs(u, v, laplacian(u, grid, boundary), laplacian(v, grid, boundary), p)


def step_euler(state: Pattern, p: RDParams, cfg: SolverConfig, step: int = 0) -> tuple[Pattern, float]:
    with np.errstate(over="ignore", invalid="ignore"):
        du, dv = _rates(state.u, state.v, p, state.grid, cfg.boundary)
        max_rate = float(max(np.max(np.abs(du)), np.max(np.abs(dv))))
        u = state.u + cfg.dt * du
        v = state.v + cfg.dt * dv
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DivergenceError(step)
    return Pattern(state.grid, u, v, state.provenance), max_rate


@numba.njit(cache=True)
def _neighbour(i, n, periodic):
    lo = i - 1
    hi = i + 1
    if periodic:
        if lo < 0:
            lo = n - 1
        if hi > n - 1:
            hi = 0
    else:
        if lo < 0:
            lo = 1
        if hi > n - 1:
            hi = n - 2
    return lo, hi


@numba.njit(cache=True)
def _evolve(u, v, d1, d2, alpha, beta, gamma, r1, r2, dx, dy, dt, tol, n_steps, periodic):
    """Advance in place for at most ``n_steps``; returns (steps taken, last max rate, status).

    status: 0 budget exhausted, 1 converged, 2 diverged.
    """
    ny, nx = u.shape
    du = np.empty_like(u)
    dv = np.empty_like(v)
    idx2 = 1.0 / (dx * dx)
    idy2 = 1.0 / (dy * dy)
    d12 = d1 * d2
    coupling = alpha * r1 / beta
    max_rate = 0.0
    for s in range(n_steps):
        max_rate = 0.0
        for j in range(ny):
            jm, jp = _neighbour(j, ny, periodic)
            for i in range(nx):
                im, ip = _neighbour(i, nx, periodic)
                uc = u[j, i]
                vc = v[j, i]
                lu = (u[j, ip] + u[j, im] - 2.0 * uc) * idx2 + (u[jp, i] + u[jm, i] - 2.0 * uc) * idy2
                lv = (v[j, ip] + v[j, im] - 2.0 * vc) * idx2 + (v[jp, i] + v[jm, i] - 2.0 * vc) * idy2
                a = d12 * lu + alpha * uc * (1.0 - r1 * vc * vc) + vc * (1.0 - r2 * uc)
                b = d2 * lv + beta * vc * (1.0 + coupling * uc * vc) + uc * (gamma + r2 * vc)
                du[j, i] = a
                dv[j, i] = b
                if not (abs(a) <= max_rate):
                    max_rate = abs(a)
                if not (abs(b) <= max_rate):
                    max_rate = abs(b)
        if not np.isfinite(max_rate):
            return s, max_rate, 2
        if max_rate < tol:
            return s, max_rate, 1
        for j in range(ny):
            for i in range(nx):
                u[j, i] += dt * du[j, i]
                v[j, i] += dt * dv[j, i]
    return n_steps, max_rate, 0


@dataclass
class SolveResult:
    pattern: Pattern
    converged: bool
    steps: int
    max_rate: float
    wall_time: float

    @property
    def stop_reason(self) -> str:
        return "steady" if self.converged else "max_steps"


def run_to_steady_state(p: RDParams, grid: GridSpec, cfg: SolverConfig,
                        initial: Pattern | None = None,
                        progress: Callable[[int, float], None] | None = None) -> SolveResult:
    """Integrate from seeded noise until ``max|du/dt|, max|dv/dt| < steady_tol``.

    Hitting ``max_steps`` first is not an error: the result has ``converged=False`` and
    carries the last max rate.  A non-finite state raises :class:`DivergenceError`.
    """
    cfg.check_stable(p, grid)
    start = initial if initial is not None else seed_fields(grid, cfg.seed_amplitude, cfg.rng_seed)
    u = np.array(start.u, dtype=np.float64, order="C")
    v = np.array(start.v, dtype=np.float64, order="C")
    periodic = cfg.boundary == "periodic"
    t0 = time.perf_counter()
    done = 0
    status, max_rate = 0, math.inf
    while done < cfg.max_steps:
        chunk = min(cfg.progress_every, cfg.max_steps - done)
        taken, max_rate, status = _evolve(u, v, p.d1, p.d2, p.alpha, p.beta, p.gamma, p.r1, p.r2,
                                          grid.dx, grid.dy, cfg.dt, cfg.steady_tol, chunk, periodic)
        done += taken
        if status == 2:
            raise DivergenceError(done, f"solver diverged at step {done} (max rate {max_rate})")
        if status == 1:
            break
        log.debug("step %d max_rate %.3e", done, max_rate)
        if progress is not None:
            progress(done, max_rate)
    wall = time.perf_counter() - t0
    converged = status == 1
    provenance = {
        "params": p.as_dict(),
        "grid": grid.as_dict(),
        "solver": cfg.as_dict(),
        "steps": done,
        "max_rate": max_rate,
        "stop_reason": "steady" if converged else "max_steps",
    }
    return SolveResult(Pattern(grid, u, v, provenance), converged, done, max_rate, wall)


def steady_residual(pattern: Pattern, p: RDParams, boundary: str = "zero-flux"):
    """Time derivatives of a stored pattern under ``p``; near zero at a steady state."""
    return _rates(pattern.u, pattern.v, p, pattern.grid, boundary)
