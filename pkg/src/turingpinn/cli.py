"""Command line: ``turingpinn {generate,infer,validate,render,experiment}``.

Exit codes: 0 success (or validation PASS), 1 validation or acceptance failure,
2 usage, configuration or input-file error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import validate_inferred
from .config import ENV_PREFIX, MATRICES, ConfigError, WorkbenchConfig, dump_config, load_config
from .core import PATTERN_IDS, ParameterError, params_for_pattern
from .experiment import generate, infer_cell, load_or_generate, write_manifest
from .files import PatternFormatError, read_params, read_pattern, render_pattern, write_json
from .inference import PARAMETER_SETS

log = logging.getLogger("turingpinn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _defaults_epilog() -> str:
    d = WorkbenchConfig()
    t = d.training
    g = d.grid
    return (
        "defaults:\n"
        f"  grid            {g.nx}x{g.ny} nodes on [{g.x_min:g},{g.x_max:g}] x [{g.y_min:g},{g.y_max:g}]\n"
        f"  network         {'x'.join(map(str, t.layer_sizes))}, tanh hidden, linear output\n"
        f"  optimizer       Adam lr={t.lr:g} (model parameters x{t.pde_lr_scale:g}), batch {t.batch_size}\n"
        f"  points          N_f=grid nodes, N_bc={t.n_bc}, w_f={t.w_f:g} "
        f"(0 for the first {t.warmup_epochs} epochs)\n"
        f"  epochs          {t.epochs} (early stop after {t.patience_epochs} epochs under "
        f"{100 * t.min_improvement:g}% gain)\n"
        f"  restarts        {d.n_restarts}\n"
        f"  solver          steady tol {d.solver.steady_tol:g}, {d.solver.boundary} boundary, "
        f"max {d.solver.max_steps} steps\n"
        f"environment: {ENV_PREFIX}SEED, {ENV_PREFIX}OUT, {ENV_PREFIX}EPOCHS, {ENV_PREFIX}RESTARTS, "
        f"{ENV_PREFIX}WORKERS\n"
        "precedence: flag > environment > --config file > default"
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--out", help="output directory (default runs/)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(
        prog="turingpinn", description="Turing-pattern solver and physics-informed parameter inference.",
        epilog=_defaults_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("generate", parents=[common], formatter_class=fmt,
                       help="solve to a steady pattern and write it as CSV")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--pattern", choices=PATTERN_IDS, default="P", help="named parameter set")
    src.add_argument("--params", help="JSON file with d1,d2,alpha,beta,r1,r2")
    p.add_argument("--name", help="output file stem (default: pattern id or 'custom')")

    p = sub.add_parser("infer", parents=[common], formatter_class=fmt,
                       help="infer model parameters from a pattern with restarts")
    p.add_argument("--pattern", choices=PATTERN_IDS, default="P",
                   help="reference parameter set (fixed values, error percentages)")
    p.add_argument("--input", help="pattern CSV (default: generate the named pattern)")
    p.add_argument("--set", dest="set_id", choices=sorted(PARAMETER_SETS), default="A",
                   help="which parameters are trainable")
    p.add_argument("--epochs", type=int, help="epoch budget per restart")
    p.add_argument("--restarts", type=int, help="independent restarts")

    p = sub.add_parser("validate", parents=[common], formatter_class=fmt,
                       help="regenerate from inferred parameters and compare with a reference")
    p.add_argument("--params", required=True, help="inferred parameter JSON")
    p.add_argument("--reference", required=True, help="reference pattern CSV")
    p.add_argument("--threshold", type=float, help="max relative norm difference (default 0.10)")

    p = sub.add_parser("render", parents=[common], formatter_class=fmt,
                       help="write u and v as grayscale PGM images")
    p.add_argument("--input", required=True, help="pattern CSV")
    p.add_argument("--name", help="image stem (default: input stem)")

    p = sub.add_parser("experiment", parents=[common], formatter_class=fmt,
                       help="run an experiment matrix and write a Markdown report")
    p.add_argument("matrix", choices=MATRICES)
    p.add_argument("--epochs", type=int, help="epoch budget per restart")
    p.add_argument("--restarts", type=int, help="independent restarts")
    return parser


def _config(args) -> WorkbenchConfig:
    cli = {"seed": args.seed, "output_dir": args.out,
           "epochs": getattr(args, "epochs", None), "n_restarts": getattr(args, "restarts", None)}
    if getattr(args, "threshold", None) is not None:
        cli["validation_threshold"] = args.threshold
    return load_config(args.config, cli)


def cmd_generate(args, cfg: WorkbenchConfig) -> int:
    if args.params:
        params = read_params(args.params)
        name = args.name or "custom"
    else:
        params = params_for_pattern(args.pattern)
        name = args.name or args.pattern
    out = Path(cfg.output_dir)
    gen = generate(cfg, params, out, name,
                   progress=lambda n, rate: log.info("step %d, max rate %.3e", n, rate))
    write_manifest(cfg, out, "generate", {"pattern": name, "steps": gen.result.steps,
                                          "converged": gen.result.converged})
    state = "steady" if gen.result.converged else "step budget exhausted"
    print(f"{gen.path}: {state} after {gen.result.steps} steps ({gen.result.wall_time:.1f}s)")
    return EXIT_OK


def cmd_infer(args, cfg: WorkbenchConfig) -> int:
    reference = params_for_pattern(args.pattern)
    out = Path(cfg.output_dir)
    if args.input:
        pattern = read_pattern(args.input)
    else:
        pattern = load_or_generate(cfg, args.pattern, out / "patterns")
    cell = out / f"{args.pattern}_{args.set_id}"
    agg = infer_cell(cfg, pattern, reference, args.set_id, cell)
    write_manifest(cfg, cell, "infer", {"pattern": args.pattern, "set": args.set_id,
                                        "input": args.input})
    for s in agg.summaries:
        print(f"{s.name:>6} mean {s.mean:.4f} var {s.variance:.2e} error {s.error_pct:.1f}%")
    print(f"data loss {agg.mean_data_loss:.3e} over {len(agg.runs)} restart(s); artifacts in {cell}")
    if agg.alternative_seeds:
        print(f"alternative-solution candidates: restarts {agg.alternative_seeds}")
    if agg.failed:
        print(f"{len(agg.failed)} restart(s) failed; see {cell / 'runs'}")
    return EXIT_OK if agg.runs else EXIT_FAIL


def cmd_validate(args, cfg: WorkbenchConfig) -> int:
    params = read_params(args.params)
    reference = read_pattern(args.reference)
    report = validate_inferred(params, reference, threshold=cfg.validation_threshold)
    out = Path(cfg.output_dir)
    write_json(out / "validation.json", report.as_dict())
    print(f"u norm diff {100 * report.norm_diff_u:.2f}%, v norm diff {100 * report.norm_diff_v:.2f}%, "
          f"k {report.k_regenerated:.3f} vs {report.k_reference:.3f} (bin {report.bin_width:.3f}) "
          f"-> {report.verdict}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_render(args, cfg: WorkbenchConfig) -> int:
    pattern = read_pattern(args.input)
    stem = args.name or Path(args.input).stem
    meta = render_pattern(pattern, cfg.output_dir, stem)
    for f in ("u", "v"):
        note = " (constant field)" if meta[f]["degenerate"] else ""
        print(f"{Path(cfg.output_dir) / f'{stem}_{f}.pgm'}: range [{meta[f]['min']:.4g}, {meta[f]['max']:.4g}]{note}")
    return EXIT_OK


def cmd_experiment(args, cfg: WorkbenchConfig) -> int:
    from .report import run_matrix

    ok, path = run_matrix(cfg, args.matrix, explicit_epochs=args.epochs, explicit_restarts=args.restarts)
    print(f"report: {path}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"generate": cmd_generate, "infer": cmd_infer, "validate": cmd_validate,
            "render": cmd_render, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if getattr(args, "matrix", None):
            cfg = cfg.with_overrides(matrix=args.matrix)
        log.debug("effective config:\n%s", dump_config(cfg))
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, PatternFormatError, ParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
