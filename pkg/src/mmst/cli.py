"""Operator surface: run stages, analyze runs or sweeps, evaluate.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import analysis
from .core import CandidateSolution, MethodKind, Split
from .pipeline import (
    STAGE_ORDER,
    EvaluationAborted,
    PipelineConfig,
    PipelineError,
    RunDirectory,
    evaluate,
    read_jsonl,
    run_pipeline,
)
from .sandbox import RunnerUnavailableError, Sandbox
from .solvers import SolverError, build_solver

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    from dataclasses import replace

    config = PipelineConfig.from_file(args.config)
    if args.run_id:
        config = replace(config, run_id=args.run_id)
    if getattr(args, "workers", None):
        config = replace(config, workers=args.workers)
    if getattr(args, "seed", None) is not None:
        config = replace(config, run=replace(config.run, seed=args.seed))
    return config


def _format_value(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_table(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_format_value(v) for v in row) + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args)
    except (OSError, ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stages = args.stages.split(",") if args.stages else list(STAGE_ORDER)
    try:
        result = run_pipeline(config, stages=stages, force=args.force)
    except (PipelineError, RunnerUnavailableError, SolverError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for entry in result.ledgers:
        mark = "skipped" if entry.skipped else f"{entry.wall_time_s:.2f}s"
        print(f"{entry.stage}: {entry.output_count} records ({mark})")
    return EXIT_OK


def _phi_table(run_dir: RunDirectory) -> tuple[list[str], list[list]]:
    candidates_path = run_dir.root / "generate" / "candidates.jsonl"
    candidates = [CandidateSolution.from_dict(r) for r in read_jsonl(candidates_path)]
    methods = (MethodKind.TEXT, MethodKind.CODE)
    matrix = analysis.VerdictMatrix.from_candidates(candidates, methods)
    rows = []
    for rule in analysis.SubsetRule:
        rows.append([rule.value, analysis.phi_correlation(matrix, rule), int(matrix.rows.shape[0])])
    return ["subset", "phi", "examples"], rows


def _emax_table(seed: int, n_draws: int, workers: int) -> tuple[list[str], list[list]]:
    header = ["rho", "estimate", "std_error", "closed_form"]
    rows = []
    for rho in (-1.0, -0.5, 0.0, 0.5, 1.0):
        model = analysis.two_method_model(rho=rho)
        est = analysis.expected_aggregate(model, n_draws, seed, workers=workers)
        rows.append([rho, est.estimate, est.std_error, analysis.bivariate_equal_max_mean(0.0, 1.0, rho)])
    return header, rows


def _jensen_table(seed: int, n_draws: int, workers: int) -> tuple[list[str], list[list]]:
    header = ["model", "aggregator", "gap", "std_error"]
    rows = []
    for index, model in enumerate(analysis.JENSEN_GRID):
        result = analysis.jensen_gap(model, n_draws, seed + index, workers=workers)
        rows.append([index, model.aggregator.value, result.gap, result.std_error])
    return header, rows


def cmd_analyze(args: argparse.Namespace) -> int:
    workers = args.workers or 1
    if args.sweep:
        try:
            with open(args.sweep, encoding="utf-8") as fh:
                sweep_config = yaml.safe_load(fh)
            p_text = float(sweep_config["p_text"])
            p_code = float(sweep_config["p_code"])
            rho_grid = [float(r) for r in sweep_config["rho_grid"]]
            n_examples = int(sweep_config["n_examples"])
            k = int(sweep_config["k"])
            seed = int(sweep_config.get("seed", args.seed or 0))
        except (OSError, KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
            print(f"config error: bad sweep config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        out = Path(args.out or "analysis")
        rows = analysis.correlation_sweep(p_text, p_code, rho_grid, n_examples, k, seed)
        table = [
            [
                r.rho,
                "yes" if r.feasible else "no",
                r.phi_all,
                r.phi_positives,
                r.union_coverage,
                r.single_sizes.get("text"),
                r.single_sizes.get("code"),
                r.mmst_sizes.get("text"),
                r.implied_bernoulli,
            ]
            for r in rows
        ]
        write_table(
            out / "sweep.tsv",
            ["rho", "feasible", "phi_all", "phi_positives", "union_coverage",
             "single_text", "single_code", "mmst_size", "implied_bernoulli"],
            table,
        )
        plot_rows = []
        for r in rows:
            if not r.feasible:
                continue
            for series, value in (
                ("phi_all", r.phi_all),
                ("phi_positives", r.phi_positives),
                ("union_coverage", r.union_coverage),
            ):
                plot_rows.append([r.rho, value, series])
        write_table(out / "sweep_plot.tsv", ["x", "y", "series"], plot_rows)
        seed_for_tables = seed
    else:
        if not args.run_id:
            print("config error: --run-id or --sweep is required", file=sys.stderr)
            return EXIT_CONFIG
        run_root = Path(args.runs_dir) / args.run_id
        if not run_root.exists():
            print(f"config error: run {args.run_id!r} not found under {args.runs_dir}", file=sys.stderr)
            return EXIT_CONFIG
        run_dir = RunDirectory(args.runs_dir, args.run_id)
        out = Path(args.out or (run_root / "analysis"))
        try:
            header, rows = _phi_table(run_dir)
        except (OSError, KeyError, ValueError) as exc:
            print(f"stage failure: cannot build phi table: {exc}", file=sys.stderr)
            return EXIT_STAGE
        write_table(out / "phi.tsv", header, rows)
        seed_for_tables = args.seed or 0

    n_draws = args.draws
    header, rows = _emax_table(seed_for_tables, n_draws, workers)
    write_table(out / "emax.tsv", header, rows)
    header, rows = _jensen_table(seed_for_tables, n_draws, workers)
    write_table(out / "jensen.tsv", header, rows)
    print(f"analysis tables written under {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args)
        method = MethodKind(args.method)
        split = Split(args.split)
    except (OSError, ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run_dir = RunDirectory(config.runs_dir, config.run_id)
    checkpoint = run_dir.stage_dir("eval") / f"{method.value}_{split.value}.checkpoint.jsonl"
    try:
        examples = config.load_examples()
        solver = build_solver(config.solver, config.run.seed)
        with Sandbox(config.runner_command, timeout=config.run.sandbox_timeout) as sandbox:
            result = evaluate(
                examples, method, solver, sandbox, config.templates(), config.run,
                split=split, checkpoint_path=checkpoint,
            )
    except (PipelineError, EvaluationAborted, RunnerUnavailableError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    summary_path = run_dir.stage_dir("eval") / f"{method.value}_{split.value}.json"
    summary_path.write_text(
        json.dumps(
            {"method": method.value, "split": split.value, "accuracy": result.accuracy,
             "correct": result.correct, "total": result.total},
            indent=2, sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"{result.accuracy * 100:.1f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmst",
        description="Multi-method self-training pipeline: generate, pseudo-label, "
                    "translate, assemble, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute pipeline stages")
    run.add_argument("--config", required=True)
    run.add_argument("--stages", help="comma-separated subset of: " + ",".join(STAGE_ORDER))
    run.add_argument("--force", action="store_true", help="recompute completed stages")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--run-id", dest="run_id")
    run.set_defaults(handler=cmd_run)

    an = sub.add_parser("analyze", help="phi, E[max], Jensen-gap and sweep tables")
    an.add_argument("--run-id", dest="run_id")
    an.add_argument("--runs-dir", dest="runs_dir", default="runs")
    an.add_argument("--sweep", help="sweep config file (p_text, p_code, rho_grid, n_examples, k, seed)")
    an.add_argument("--out", help="output directory for tables")
    an.add_argument("--seed", type=int)
    an.add_argument("--draws", type=int, default=100_000)
    an.add_argument("--workers", type=int)
    an.set_defaults(handler=cmd_analyze)

    ev = sub.add_parser("evaluate", help="accuracy of one method on one split")
    ev.add_argument("--config", required=True)
    ev.add_argument("--method", required=True, choices=[m.value for m in MethodKind])
    ev.add_argument("--split", default="test", choices=[s.value for s in Split])
    ev.add_argument("--seed", type=int)
    ev.add_argument("--workers", type=int)
    ev.add_argument("--run-id", dest="run_id")
    ev.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
