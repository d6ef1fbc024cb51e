"""Desk-scale acceptance checks, shared by ``experiment desk`` and the test suite.

Each check returns a :class:`CheckResult` carrying the measured numbers, so a
failing gate still reports how far off it was.  Generated patterns and trained
aggregates are cached on the :class:`DeskSuite` because several checks reuse them.
"""

from __future__ import annotations

import logging
import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import dominant_mode, l2_norm, spectral_bin_width, validate_inferred
from .config import WorkbenchConfig
from .core import GridSpec, Pattern, RDParams, params_for_pattern
from .experiment import Generated, generate, infer_cell, mean_params
from .files import pattern_to_csv, read_pattern, write_pattern
from .inference import RunAggregate, TrainConfig, percent_error, train_inverse
from .nn import TrainableSet, mlp_init
from .pinn import W_F, backprop, build_point_sets, loss, residual_terms, stencil_points
from .solver import SolverConfig, run_to_steady_state, steady_residual

log = logging.getLogger(__name__)

TARGET_MODES = {"P": 0.42, "Q": 0.60, "R": 0.42}
MODE_TOL = 0.15
FORWARD_BUDGET_S = 120.0
MAGNITUDE_RATIO = 10.0
GRAD_RTOL = 1e-5
GRAD_STEP = 1e-6
GRAD_FLOOR = 1e-8
RESIDUAL_FACTOR = 10.0
BASELINE_TOL_PCT = 15.0
SET_D_TOL_PCT = 20.0
DATA_LOSS_MAX = 1e-4
SET_BUDGET_S = 900.0
ALT_DEVIATION_PCT = 20.0
ALT_LOSS_FACTOR = 5.0
R1_FACTOR = 1.5
DESK_EPOCHS = 1000
DESK_RESTARTS = 3


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.number:>2}. {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, title: str):
    def wrap(fn):
        def run(self, *args, **kwargs):
            t0 = time.perf_counter()
            passed, detail, data = fn(self, *args, **kwargs)
            return CheckResult(number, title, bool(passed), detail, time.perf_counter() - t0, data)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def toy_problem(seed: int = 0, layers=(2, 8, 8, 2)) -> tuple[TrainableSet, object]:
    """A 5x5 smooth pattern and a small network with every model parameter trainable."""
    grid = GridSpec(5, 5, -2.0, 2.0, -2.0, 2.0)
    xx, yy = grid.mesh()
    pattern = Pattern(grid, 0.3 * np.sin(0.8 * xx) * np.cos(0.5 * yy), 0.2 * np.cos(0.7 * xx + 0.3 * yy))
    net = mlp_init(seed, layers, input_lo=(-2.0, -2.0), input_hi=(2.0, 2.0),
                   output_center=(0.05, -0.02), output_scale=(0.8, 1.3))
    rng = np.random.default_rng(seed + 1)
    for b in net.biases:
        b[...] = rng.uniform(-0.3, 0.3, size=b.shape)
    params = RDParams(d1=0.6, d2=1.7, alpha=0.8, beta=-0.9, r1=3.1, r2=0.15)
    ts = TrainableSet.create(net, params, [True] * 5)
    sets = build_point_sets(pattern, n_bc=8, seed=seed)
    return ts, sets


def gradient_errors(ts: TrainableSet, sets, w_f: float = W_F, step: float = GRAD_STEP) -> np.ndarray:
    """Relative error of every backprop component against central differences."""
    _, graph = loss(ts, sets, w_f)
    grad = backprop(ts, graph)
    fd = np.empty_like(grad)
    for i in range(ts.theta.size):
        keep = ts.theta[i]
        ts.theta[i] = keep + step
        up = loss(ts, sets, w_f)[0].total
        ts.theta[i] = keep - step
        down = loss(ts, sets, w_f)[0].total
        ts.theta[i] = keep
        fd[i] = (up - down) / (2 * step)
    return np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), GRAD_FLOOR)


def brute_force_loss(ts: TrainableSet, sets, w_f: float = W_F) -> tuple[float, float, float]:
    """Point-by-point re-evaluation of the three loss terms, one network call per stencil node."""
    net, p = ts.net, ts.params
    hx, hy = sets.stencil_h

    def at(x, y):
        return net.forward_points(np.array([[x, y]]))[0]

    sq = 0.0
    for (x, y), target in zip(sets.data_points, sets.data_targets):
        out = at(x, y)
        sq += (out[0] - target[0]) ** 2 + (out[1] - target[1]) ** 2
    mse_h = sq / (2 * len(sets.data_points))

    def res_mean(points):
        total = 0.0
        for x, y in points:
            c, e, w, n, s = (at(*q) for q in stencil_points(np.array([[x, y]]), (hx, hy)))
            lap = (e + w - 2 * c) / hx ** 2 + (n + s - 2 * c) / hy ** 2
            fu, fv = residual_terms(c[0], c[1], lap[0], lap[1], p)
            total += fu * fu + fv * fv
        return total / len(points)

    return mse_h, res_mean(sets.collocation_points), res_mean(sets.boundary_points)


class DeskSuite:
    """All ten acceptance checks at desk scale.

    ``out_dir`` receives generated patterns and inference artifacts.  Budgets
    follow :data:`DESK_EPOCHS` and :data:`DESK_RESTARTS` unless overridden.
    """

    def __init__(self, cfg: WorkbenchConfig | None = None, out_dir=None,
                 epochs: int = DESK_EPOCHS, restarts: int = DESK_RESTARTS):
        cfg = cfg or WorkbenchConfig()
        self.cfg = replace(cfg, training=replace(cfg.training, epochs=epochs), n_restarts=restarts)
        self.out_dir = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="desk_"))
        self._generated: dict[str, Generated] = {}
        self._aggregates: dict[tuple[str, str], tuple[RunAggregate, float]] = {}

    def generated(self, name: str) -> Generated:
        if name not in self._generated:
            self._generated[name] = generate(self.cfg, params_for_pattern(name),
                                             self.out_dir / "patterns", name)
        return self._generated[name]

    def aggregate(self, pattern: str, set_id: str) -> tuple[RunAggregate, float]:
        """Restart aggregate for a cell and the wall time it took."""
        key = (pattern, set_id)
        if key not in self._aggregates:
            gen = self.generated(pattern)
            t0 = time.perf_counter()
            agg = infer_cell(self.cfg, gen.pattern, gen.params, set_id,
                             self.out_dir / f"{pattern}_{set_id}")
            self._aggregates[key] = (agg, time.perf_counter() - t0)
        return self._aggregates[key]

    @_timed(1, "forward pattern modes")
    def check_modes(self):
        parts, ok, data = [], True, {}
        for name, target in TARGET_MODES.items():
            gen = self.generated(name)
            k = dominant_mode(gen.pattern)
            err = abs(k - target) / target
            fast = gen.result.wall_time <= FORWARD_BUDGET_S
            ok &= err <= MODE_TOL and fast and gen.result.converged
            parts.append(f"{name} k={k:.3f} (target {target}, {100 * err:.1f}%, {gen.result.wall_time:.0f}s)")
            data[name] = {"k": k, "target": target, "rel_error": err, "wall_time": gen.result.wall_time,
                          "converged": gen.result.converged}
        return ok, "; ".join(parts), data

    @_timed(2, "pattern R magnitude")
    def check_magnitude(self):
        p = float(np.abs(self.generated("P").pattern.u).max())
        r = float(np.abs(self.generated("R").pattern.u).max())
        ratio = r / p if p > 0 else math.inf
        return ratio >= MAGNITUDE_RATIO, f"max|u| R={r:.3g}, P={p:.3g}, ratio {ratio:.1f}", \
            {"max_u_P": p, "max_u_R": r, "ratio": ratio}

    @_timed(3, "gradient oracle")
    def check_gradients(self):
        worst = 0.0
        for seed, layers in ((0, (2, 8, 8, 2)), (1, (2, 4, 4, 2)), (2, (2, 6, 2))):
            ts, sets = toy_problem(seed, layers)
            worst = max(worst, float(gradient_errors(ts, sets).max()))
        return worst < GRAD_RTOL, f"max relative error {worst:.2e} (limit {GRAD_RTOL:g})", {"max_rel_error": worst}

    @_timed(4, "steady-state residual")
    def check_residuals(self):
        parts, ok, data = [], True, {}
        for name in TARGET_MODES:
            gen = self.generated(name)
            tol = gen.result.pattern.provenance["solver"]["steady_tol"]
            du, dv = steady_residual(gen.pattern, gen.params, self.cfg.solver.boundary)
            rms = math.sqrt(float(np.mean(du * du + dv * dv) / 2))
            ok &= rms <= RESIDUAL_FACTOR * tol
            parts.append(f"{name} rms={rms:.2e}")
            data[name] = rms
        return ok, "; ".join(parts) + f" (limit {RESIDUAL_FACTOR:g}x tol)", data

    def _cell_errors(self, pattern: str, set_id: str, limit_pct: float):
        agg, wall = self.aggregate(pattern, set_id)
        errs = {s.name: s.error_pct for s in agg.summaries}
        ok = bool(agg.runs) and not agg.failed and all(e <= limit_pct for e in errs.values())
        ok &= agg.mean_data_loss <= DATA_LOSS_MAX
        text = ", ".join(f"{s.name}={s.mean:.3f} ({s.error_pct:.1f}%)" for s in agg.summaries)
        text += f", data loss {agg.mean_data_loss:.2e}, {wall:.0f}s"
        if agg.failed:
            text += f", {len(agg.failed)} failed restart(s)"
        return ok, text, {"errors_pct": errs, "mean_data_loss": agg.mean_data_loss, "wall_time": wall,
                          "failed": len(agg.failed)}

    @_timed(5, "baseline sets A and B")
    def check_baseline(self):
        ok_a, text_a, data_a = self._cell_errors("P", "A", BASELINE_TOL_PCT)
        ok_b, text_b, data_b = self._cell_errors("P", "B", BASELINE_TOL_PCT)
        in_time = data_a["wall_time"] <= SET_BUDGET_S and data_b["wall_time"] <= SET_BUDGET_S
        return ok_a and ok_b and in_time, f"A: {text_a} | B: {text_b}", {"A": data_a, "B": data_b}

    @_timed(6, "set D")
    def check_set_d(self):
        return self._cell_errors("P", "D", SET_D_TOL_PCT)

    @_timed(7, "alternative solution")
    def check_alternative(self):
        base, _ = self.aggregate("P", "A")
        agg, _ = self.aggregate("P", "C")
        reference = self.generated("P")
        ref = reference.params
        limit = ALT_LOSS_FACTOR * base.mean_data_loss
        candidates = []
        for run in agg.runs:
            worst = max(percent_error(getattr(run.inferred, s.name), getattr(ref, s.name)) for s in agg.summaries)
            if worst > ALT_DEVIATION_PCT and run.final_loss.mse_h <= limit:
                candidates.append((run.final_loss.mse_h, worst, run))
        if not candidates:
            deviations = [max(percent_error(getattr(r.inferred, s.name), getattr(ref, s.name))
                              for s in agg.summaries) for r in agg.runs]
            losses = [r.final_loss.mse_h for r in agg.runs]
            return False, (f"no restart deviates >{ALT_DEVIATION_PCT:g}% with data loss <= {limit:.2e}; "
                           f"deviations {[round(d, 1) for d in deviations]}, losses "
                           f"{[f'{x:.1e}' for x in losses]}"), {"deviations": deviations, "losses": losses}
        loss_h, worst, run = min(candidates, key=lambda c: c[0])
        report = validate_inferred(run.inferred, reference.pattern, threshold=self.cfg.validation_threshold)
        text = (f"restart {run.restart_seed} deviates {worst:.0f}% at data loss {loss_h:.2e}; "
                f"regenerated norm diffs u {100 * report.norm_diff_u:.1f}%, v {100 * report.norm_diff_v:.1f}%, "
                f"k {report.k_regenerated:.3f} vs {report.k_reference:.3f} -> {report.verdict}")
        return report.passed, text, {"restart_seed": run.restart_seed, "deviation_pct": worst,
                                     "data_loss": loss_h, "validation": report.as_dict()}

    @_timed(8, "r1 scaling direction")
    def check_r1_scaling(self):
        """Regenerate Q at the Set E restart means, then again with r1 raised; norms must grow."""
        agg, _ = self.aggregate("Q", "E")
        fitted = mean_params(agg, self.generated("Q").params)
        raised = fitted.with_values(r1=R1_FACTOR * fitted.r1)
        grid = self.cfg.grid
        runs = [run_to_steady_state(p, grid, self.cfg.solver.for_params(p, grid, rng_seed=self.cfg.seed))
                for p in (fitted, raised)]
        if not all(r.converged for r in runs):
            return False, f"regeneration did not settle: {[r.stop_reason for r in runs]}", \
                {"stop_reasons": [r.stop_reason for r in runs]}
        before, after = runs[0].pattern, runs[1].pattern
        lu0, lv0 = l2_norm(before.u), l2_norm(before.v)
        lu1, lv1 = l2_norm(after.u), l2_norm(after.v)
        k0, k1 = dominant_mode(before), dominant_mode(after)
        width = spectral_bin_width(grid)
        ok = lu1 > lu0 and lv1 > lv0 and abs(k1 - k0) <= width
        text = (f"set E means d1={fitted.d1:.3f} alpha={fitted.alpha:.3f} beta={fitted.beta:.3f}; "
                f"r1 {fitted.r1:.3g}->{raised.r1:.3g}: l2_u {lu0:.2f}->{lu1:.2f}, l2_v {lv0:.2f}->{lv1:.2f}, "
                f"k {k0:.3f}->{k1:.3f} (bin {width:.3f})")
        return ok, text, {"fitted": fitted.as_dict(), "l2_u": [lu0, lu1], "l2_v": [lv0, lv1], "k": [k0, k1],
                          "bin_width": width}

    @_timed(9, "determinism and round-trip")
    def check_determinism(self):
        problems = []
        p = params_for_pattern("P")
        solver_cfg = SolverConfig.for_problem(p, self.cfg.grid, max_steps=5000, rng_seed=self.cfg.seed)
        a = run_to_steady_state(p, self.cfg.grid, solver_cfg).pattern
        b = run_to_steady_state(p, self.cfg.grid, solver_cfg).pattern
        if not a.same_fields(b):
            problems.append("solver runs differ")
        gen = self.generated("P")
        scratch = self.out_dir / "roundtrip"
        first = write_pattern(gen.pattern, scratch / "first.csv")
        again = read_pattern(first)
        second = write_pattern(again, scratch / "second.csv")
        if first.read_bytes() != second.read_bytes() or not again.same_fields(gen.pattern):
            problems.append("pattern CSV round-trip is not byte-identical")
        if pattern_to_csv(again) != first.read_text():
            problems.append("re-serialised CSV differs")
        cfg = TrainConfig(epochs=2, early_stop=False)
        r1 = train_inverse(gen.pattern, "A", cfg, 7, gen.params)
        r2 = train_inverse(gen.pattern, "A", cfg, 7, gen.params)
        if not np.array_equal(r1.theta, r2.theta) or r1.as_dict() != r2.as_dict():
            problems.append("identical training runs differ")
        ok = not problems
        return ok, "bit-identical solver, training and files" if ok else "; ".join(problems), \
            {"problems": problems}

    @_timed(10, "loss decomposition")
    def check_loss(self):
        worst_sum = worst_brute = 0.0
        for seed in range(3):
            ts, sets = toy_problem(seed)
            br, _ = loss(ts, sets)
            parts = br.mse_h + W_F * br.mse_f + br.mse_bc
            worst_sum = max(worst_sum, abs(br.total - parts) / abs(parts))
            brute = brute_force_loss(ts, sets)
            for got, want in zip((br.mse_h, br.mse_f, br.mse_bc), brute):
                worst_brute = max(worst_brute, abs(got - want) / max(abs(want), 1e-300))
        ok = worst_sum <= 1e-12 and worst_brute <= 1e-12
        return ok, f"sum rel err {worst_sum:.1e}, brute-force rel err {worst_brute:.1e}", \
            {"sum": worst_sum, "brute": worst_brute}

    def checks(self):
        return [self.check_modes, self.check_magnitude, self.check_gradients, self.check_residuals,
                self.check_baseline, self.check_set_d, self.check_alternative, self.check_r1_scaling,
                self.check_determinism, self.check_loss]

    def run_all(self, report=None) -> list[CheckResult]:
        results = []
        for check in self.checks():
            res = check()
            log.info(res.line())
            if report is not None:
                report(res)
            results.append(res)
        return results
