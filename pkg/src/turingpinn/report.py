"""Experiment matrices and their Markdown report.

Published numbers appear only in the report, next to ours and labelled as such.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acceptance import DESK_EPOCHS, DESK_RESTARTS, BASELINE_TOL_PCT, DATA_LOSS_MAX, CheckResult, DeskSuite
from .analysis import dominant_mode, validate_inferred
from .config import WorkbenchConfig
from .core import params_for_pattern
from .experiment import MATRIX_CELLS, infer_cell, load_or_generate, write_manifest
from .inference import RunAggregate
from .published import PUBLISHED_ALTERNATIVES, PUBLISHED_MODES, PUBLISHED_TABLES

log = logging.getLogger(__name__)


def _num(x, fmt=".3f") -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return format(x, fmt)


def cell_table(pattern: str, set_id: str, agg: RunAggregate) -> list[str]:
    pub = PUBLISHED_TABLES.get((pattern, set_id), {})
    lines = [
        "| parameter | true | mean | variance | error % | published mean | published variance | published error % |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for s in agg.summaries:
        pm, pv, pe = pub.get(s.name, (None, None, None))
        lines.append(f"| {s.name} | {s.reference:g} | {_num(s.mean)} | {_num(s.variance, '.2e')} | "
                     f"{_num(s.error_pct, '.1f')} | {_num(pm)} | {_num(pv, '.1e')} | {_num(pe, '.1f')} |")
    lines.append(f"| data loss | | {_num(agg.mean_data_loss, '.2e')} | | | {_num(pub.get('data_loss'), '.1e')} | | |")
    return lines


def _alternatives(cfg, pattern, set_id, agg, reference_pattern) -> list[str]:
    lines = []
    if agg.alternative_seeds:
        lines.append(f"Restarts flagged as alternative-solution candidates: {agg.alternative_seeds}.")
        for run in agg.runs:
            if run.restart_seed not in agg.alternative_seeds:
                continue
            rep = validate_inferred(run.inferred, reference_pattern, threshold=cfg.validation_threshold)
            lines.append(f"- restart {run.restart_seed}: data loss {run.final_loss.mse_h:.2e}, "
                         f"regenerated norm diffs u {100 * rep.norm_diff_u:.1f}%, v {100 * rep.norm_diff_v:.1f}%, "
                         f"k {_num(rep.k_regenerated)} vs {_num(rep.k_reference)}: {rep.verdict}")
    pub = PUBLISHED_ALTERNATIVES.get((pattern, set_id))
    if pub:
        lines.append("Published alternative solution: " + ", ".join(f"{k}={v:g}" for k, v in pub.items()) + ".")
    if agg.failed:
        lines.append(f"{len(agg.failed)} restart(s) failed and are excluded: "
                     + "; ".join(f"{r.restart_seed}: {r.error}" for r in agg.failed))
    return lines


def _pattern_section(cfg: WorkbenchConfig, patterns: dict) -> list[str]:
    lines = ["## Patterns", "",
             "| pattern | dominant k | published k | min u | max u | min v | max v |",
             "|---|---|---|---|---|---|---|"]
    for name, pat in patterns.items():
        k = dominant_mode(pat)
        lines.append(f"| {name} | {k:.3f} | {PUBLISHED_MODES.get(name, float('nan')):.2f} | "
                     f"{pat.u.min():.3g} | {pat.u.max():.3g} | {pat.v.min():.3g} | {pat.v.max():.3g} |")
    if "P" in patterns and "R" in patterns:
        ratio = float(np.abs(patterns["R"].u).max() / np.abs(patterns["P"].u).max())
        lines += ["", f"Pattern R reaches max|u| = {np.abs(patterns['R'].u).max():.3g}, "
                      f"{ratio:.0f} times that of pattern P, so mean-squared losses on R are "
                      f"not comparable in absolute terms with those on P and Q."]
    g = cfg.grid
    lines += ["", f"Grid {g.nx}x{g.ny} on [{g.x_min:g},{g.x_max:g}] x [{g.y_min:g},{g.y_max:g}].", ""]
    return lines


def run_cells(cfg: WorkbenchConfig, cells, out: Path) -> tuple[list[str], bool]:
    names = sorted({p for p, _ in cells})
    patterns = {n: load_or_generate(cfg, n, out / "patterns") for n in names}
    lines = _pattern_section(cfg, patterns)
    lines += [f"Budget: {cfg.training.epochs} epochs per restart "
              f"({'early stop on' if cfg.training.early_stop else 'no early stop'}), "
              f"{cfg.n_restarts} restarts, seed {cfg.seed}.", ""]
    gates_ok = True
    for pattern, set_id in cells:
        t0 = time.perf_counter()
        agg = infer_cell(cfg, patterns[pattern], params_for_pattern(pattern), set_id, out / f"{pattern}_{set_id}")
        wall = time.perf_counter() - t0
        lines += [f"## Set {set_id} on pattern {pattern}", "", *cell_table(pattern, set_id, agg), "",
                  f"{len(agg.runs)} successful restart(s), {wall:.0f}s wall time.", ""]
        extra = _alternatives(cfg, pattern, set_id, agg, patterns[pattern])
        if extra:
            lines += extra + [""]
        if cfg.matrix == "baseline":
            cell_ok = (bool(agg.runs) and agg.mean_data_loss <= DATA_LOSS_MAX
                       and all(s.error_pct <= BASELINE_TOL_PCT for s in agg.summaries))
            lines += [f"Gate (errors <= {BASELINE_TOL_PCT:g}%, data loss <= {DATA_LOSS_MAX:g}): "
                      f"{'PASS' if cell_ok else 'FAIL'}", ""]
            gates_ok &= cell_ok
        gates_ok &= not agg.failed
    return lines, gates_ok


def desk_lines(results: list[CheckResult]) -> list[str]:
    lines = ["## Acceptance checks", "", "| # | check | verdict | detail | seconds |", "|---|---|---|---|---|"]
    for r in results:
        lines.append(f"| {r.number} | {r.title} | {'PASS' if r.passed else 'FAIL'} | {r.detail} | {r.seconds:.1f} |")
    return lines + [""]


def run_matrix(cfg: WorkbenchConfig, matrix: str, explicit_epochs: int | None = None,
               explicit_restarts: int | None = None) -> tuple[bool, Path]:
    out = Path(cfg.output_dir) / matrix
    out.mkdir(parents=True, exist_ok=True)
    header = [f"# Experiment: {matrix}", "",
              "Published values are reproduced for comparison only; nothing here is fitted to them.", ""]
    if matrix == "desk":
        epochs = explicit_epochs or DESK_EPOCHS
        restarts = explicit_restarts or DESK_RESTARTS
        suite = DeskSuite(cfg, out, epochs=epochs, restarts=restarts)
        t0 = time.perf_counter()
        results = suite.run_all(report=lambda r: print(r.line(), flush=True))
        total = time.perf_counter() - t0
        body = desk_lines(results)
        cells = [(p, s) for (p, s) in suite._aggregates]
        for pattern, set_id in cells:
            agg, _ = suite._aggregates[(pattern, set_id)]
            body += [f"## Set {set_id} on pattern {pattern}", "", *cell_table(pattern, set_id, agg), ""]
        body += [f"Total wall time {total:.0f}s ({epochs} epochs, {restarts} restarts per set)."]
        ok = all(r.passed for r in results)
        write_manifest(suite.cfg, out, f"experiment {matrix}",
                       {"checks": [{"number": r.number, "passed": r.passed, "detail": r.detail} for r in results]})
    else:
        if explicit_epochs is None and cfg.training.epochs == WorkbenchConfig().training.epochs:
            log.info("running %s with the default budget of %d epochs", matrix, cfg.training.epochs)
        run_cfg = replace(cfg, matrix=matrix)
        body, ok = run_cells(run_cfg, MATRIX_CELLS[matrix], out)
        write_manifest(run_cfg, out, f"experiment {matrix}")
    path = out / "report.md"
    path.write_text("\n".join(header + body) + "\n", encoding="utf-8")
    return ok, path
