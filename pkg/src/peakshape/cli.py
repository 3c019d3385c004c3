"""Command-line front end.

    python -m peakshape align     --input data.csv --lambda 0.05 --output-dir out
    python -m peakshape ppd       --input data.csv --output-dir out
    python -m peakshape estimate  --input data.csv --output-dir out
    python -m peakshape bootstrap --input data.csv --output-dir out --bootstrap-B 100
    python -m peakshape simulate  --scenario 1 --seed 7 --output-dir sim
    python -m peakshape compare   --scenario 1 --reps 20 --output-dir cmp

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bootstrap import bootstrap
from .errors import PeakShapeError
from .io import (
    read_curve,
    read_function_csv,
    read_selection,
    selection_payload,
    write_barchart,
    write_curves,
    write_frame,
    write_function_set,
    write_json,
    write_surface,
    write_warpings,
)
from .align import multiple_align
from .pipeline import estimate_at
from .ppd import build_ppd, ppd_barchart, ppd_surface
from .runconfig import RunConfig, load_run_config
from .simulate import SCENARIOS, generate, make_scenario, run_experiment

logger = logging.getLogger("peakshape")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is reserved for data errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args, cfg: RunConfig):
    data, names = read_function_csv(args.input, cfg.grid)
    logger.info("✓ Loaded %d functions from %s", data.n, args.input)
    return data, names


# ===================== COMMANDS =====================

def cmd_align(args, cfg: RunConfig) -> int:
    data, names = _load(args, cfg)
    result = multiple_align(data, cfg.align)
    out = _out(cfg)
    write_function_set(out / "aligned.csv", result.aligned, names)
    write_warpings(out / "warps.csv", result.warpings, names)
    write_curves(out / "mean.csv", data.grid, {"mean": result.mean.values})
    if not result.converged:
        logger.warning("✗ alignment did not converge (eps=%.3e)", result.final_eps)
    return EXIT_OK


def cmd_ppd(args, cfg: RunConfig) -> int:
    data, _ = _load(args, cfg)
    ppd = build_ppd(data, cfg.align, cfg.ppd)
    out = _out(cfg)
    write_barchart(out / "ppd_barchart.csv", ppd_barchart(ppd))
    write_surface(out / "ppd_surface.json", ppd_surface(ppd))
    write_json(selection_payload(ppd), out / "selection.json")
    return EXIT_OK


def cmd_estimate(args, cfg: RunConfig) -> int:
    data, _ = _load(args, cfg)
    out = _out(cfg)
    selection = out / "selection.json"
    if selection.exists():
        m, lambda_star = read_selection(selection)
        logger.info("✓ Using selection m=%d, lambda*=%g from %s", m, lambda_star, selection)
        est = estimate_at(data, lambda_star, m, cfg.align, cfg.ppd, cfg.fit)
    else:
        ppd = build_ppd(data, cfg.align, cfg.ppd)
        write_json(selection_payload(ppd), selection)
        est = estimate_at(data, ppd.lambda_star, ppd.m, cfg.align, cfg.ppd, cfg.fit,
                          alignment=ppd.alignment_star, ppd=ppd)
    write_curves(out / "ginit.csv", data.grid, {"ginit": est.g_init.values})
    write_curves(out / "ghat.csv", data.grid, {"ghat": est.g_hat.values})
    if est.fit.failed:
        logger.warning("✗ shape fit made no progress from the initial estimate")
    return EXIT_OK


def cmd_bootstrap(args, cfg: RunConfig) -> int:
    out = _out(cfg)
    # both artifacts come from a prior estimate run
    _, lambda_star = read_selection(out / "selection.json")
    g_init = read_curve(out / "ginit.csv", cfg.grid, "ginit")
    data, _ = _load(args, cfg)
    result = bootstrap(data, g_init, lambda_star, cfg.align, cfg.fit, cfg.bootstrap)
    write_curves(out / "band.csv", data.grid, {"lower": result.band.lower, "upper": result.band.upper})
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    scn = make_scenario(args.scenario, cfg.grid, n=cfg.samples, seed=cfg.seed, noise=cfg.noise)
    data, g_true = generate(scn)
    out = _out(cfg)
    write_function_set(out / "data.csv", data, [f"f_{i + 1}" for i in range(data.n)])
    write_curves(out / "gtrue.csv", data.grid, {"g": g_true.values})
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    scn = make_scenario(args.scenario, cfg.grid, n=cfg.samples, seed=cfg.seed, noise=cfg.noise)
    report = run_experiment(scn, args.reps, cfg.align, cfg.ppd, cfg.fit, cfg.kappa_grid, n_jobs=cfg.n_jobs,
                            l2cfg=cfg.l2)
    out = _out(cfg)
    frame = report.to_frame(timings=True)
    timing_columns = [c for c in frame.columns if c.startswith("seconds_")]
    # timings vary run to run, so they stay out of report.csv
    write_frame(frame.drop(columns=timing_columns), out / "report.csv")
    write_frame(frame[["rep", *timing_columns]], out / "timings.csv")
    write_json(report.summary(), out / "summary.json")
    return EXIT_OK


COMMANDS = {
    "align": cmd_align,
    "ppd": cmd_ppd,
    "estimate": cmd_estimate,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", help="Directory for output artifacts")
    common.add_argument("--seed", type=int, help="Random seed (overrides config)")
    common.add_argument("--n-jobs", type=int, help="Parallel workers; -1 uses every core")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = _Parser(prog="peakshape", description="Peak-persistence shape estimation for functional data")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("align", parents=[common], help="Align functions at a fixed lambda")
    p.add_argument("--input", required=True, help="CSV with a t column followed by one column per function")
    p.add_argument("--lambda", dest="lam", type=float, help="Elasticity penalty (default from config)")

    for name, text in (("ppd", "Build the peak-persistence diagram"),
                       ("estimate", "Shape-constrained estimate of the underlying function")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--input", required=True, help="CSV with a t column followed by one column per function")

    p = sub.add_parser("bootstrap", parents=[common], help="Pointwise bootstrap band around the estimate")
    p.add_argument("--input", required=True, help="The CSV passed to estimate")
    p.add_argument("--bootstrap-B", dest="B", type=int, help="Number of bootstrap replicates")
    p.add_argument("--alpha", type=float, help="Band level 1 - alpha")

    p = sub.add_parser("simulate", parents=[common], help="Generate a synthetic data set")
    p.add_argument("--scenario", default="1", choices=SCENARIOS)

    p = sub.add_parser("compare", parents=[common], help="Monte-Carlo comparison of the estimators")
    p.add_argument("--scenario", default="1", choices=SCENARIOS)
    p.add_argument("--reps", type=int, default=20, help="Independent replications")
    return parser


def _attach_handler(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = _attach_handler(args.verbose)
    try:
        cfg = load_run_config(args.config).with_overrides(
            seed=args.seed,
            n_jobs=args.n_jobs,
            output_dir=args.output_dir,
            lam=getattr(args, "lam", None),
            B=getattr(args, "B", None),
            alpha=getattr(args, "alpha", None),
        )
        return COMMANDS[args.command](args, cfg)
    except PeakShapeError as exc:
        logger.error("✗ %s", exc)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("✗ numerical failure: %s", exc)
        return EXIT_NUMERICAL
    finally:
        logger.removeHandler(handler)
