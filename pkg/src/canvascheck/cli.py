"""Command-line entry point.

Subcommands: validate, run, adjudicate, evaluate, report. Exit codes:
0 ok, 1 usage error, 2 data error, 3 provider error, 4 pending
adjudication.

Configuration precedence for `run`: command-line flags beat the JSON
config file, which beats environment variables (CANVASCHECK_ENDPOINT,
CANVASCHECK_MODEL), which beat built-in defaults. The API key is never a
flag; it is read from the environment variable named by api_key_env.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .adjudication import (
    AdjudicationError,
    VerdictStore,
    import_verdicts,
    pending_queue,
    review_loop,
)
from .dataset import DatasetError, load_manifest, validate_dataset
from .evaluation import EvaluationError, PendingAdjudicationError, aggregate
from .prompting import PromptError, PromptStrategy
from .report import MetricsReport, ReportError, emit_csv, emit_pass_at_k_table, CSV_KINDS
from .vlm_client import (
    ArchiveError,
    HttpProvider,
    MockProvider,
    ProviderError,
    RunArchive,
    RunConfig,
    run_experiment,
    run_id_for,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3
EXIT_PENDING = 4

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; we reserve that
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="canvascheck", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a dataset manifest")
    p_validate.add_argument("--manifest", required=True)

    p_run = sub.add_parser("run", help="execute one experiment")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--strategy", required=True,
                       help="kebab-case strategy name, e.g. all-context-except-assets")
    p_run.add_argument("--config", help="JSON file with RunConfig fields")
    p_run.add_argument("--out", required=True, help="run directory")
    p_run.add_argument("--provider", choices=("http", "mock"), default="http")
    p_run.add_argument("--mock-script", help="fixture file for the mock provider")
    p_run.add_argument("--resume", action="store_true",
                       help="continue a partial run in --out")
    p_run.add_argument("--repetitions", type=int)
    p_run.add_argument("--model")
    p_run.add_argument("--endpoint")
    p_run.add_argument("--temperature", type=float)
    p_run.add_argument("--parallelism", type=int)

    p_adj = sub.add_parser("adjudicate", help="review positive predictions")
    p_adj.add_argument("--run", required=True, dest="run_dir")
    p_adj.add_argument("--verdicts", help="verdict store (default: <run>/verdicts.ndjson)")
    p_adj.add_argument("--import", dest="import_file",
                       help="batch-apply a pre-filled verdict file")
    p_adj.add_argument("--reviewer", default="reviewer")

    p_eval = sub.add_parser("evaluate", help="classify answers and compute metrics")
    p_eval.add_argument("--run", required=True, dest="run_dir")
    p_eval.add_argument("--verdicts")
    p_eval.add_argument("--out", required=True, help="metrics report JSON path")

    p_report = sub.add_parser("report", help="emit result tables")
    p_report.add_argument("--reports", required=True, nargs="+")
    p_report.add_argument("--out", help="directory for CSV emissions")

    return parser


def _build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if os.environ.get("CANVASCHECK_ENDPOINT"):
        values["endpoint"] = os.environ["CANVASCHECK_ENDPOINT"]
    if os.environ.get("CANVASCHECK_MODEL"):
        values["model_id"] = os.environ["CANVASCHECK_MODEL"]
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DatasetError(f"config file not found: {path}")
        values.update(json.loads(path.read_text(encoding="utf-8")))
    if args.repetitions is not None:
        values["repetitions"] = args.repetitions
    if args.model is not None:
        values["model_id"] = args.model
    if args.endpoint is not None:
        values["endpoint"] = args.endpoint
    if args.temperature is not None:
        values["temperature"] = args.temperature
    if args.parallelism is not None:
        values["parallelism"] = args.parallelism
    if "k_values" not in values:
        # keep the default k values consistent with a reduced repetition count
        repetitions = values.get("repetitions", RunConfig.repetitions)
        values["k_values"] = [k for k in RunConfig.k_values if k <= repetitions] or [1]
    try:
        return RunConfig.from_dict(values)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def _cmd_validate(args) -> int:
    dataset = load_manifest(args.manifest)
    violations = validate_dataset(dataset)
    for violation in violations:
        print(violation)
    print(f"{len(violations)} violations")
    return EXIT_OK if not violations else EXIT_DATA


def _cmd_run(args) -> int:
    dataset = load_manifest(args.manifest)
    strategy = PromptStrategy.from_cli_name(args.strategy)
    cfg = _build_config(args)

    if args.provider == "mock":
        if not args.mock_script:
            raise UsageError("--provider mock requires --mock-script")
        provider = MockProvider.from_file(args.mock_script)
    else:
        provider = HttpProvider(cfg)

    archive = RunArchive(args.out)
    if archive.exists and not args.resume:
        raise ArchiveError(
            f"run directory {args.out} already contains an archive; "
            "pass --resume to continue it"
        )

    summary = run_experiment(
        dataset,
        strategy,
        cfg,
        provider,
        args.out,
        run_id=run_id_for(strategy, args.manifest),
    )
    print(
        f"run {summary.run_id}: {summary.answers_written} answers written, "
        f"{summary.resumed} already archived, {summary.skipped} screenshots skipped"
    )
    return EXIT_OK


def _verdict_store(args) -> VerdictStore:
    path = args.verdicts or str(Path(args.run_dir) / "verdicts.ndjson")
    return VerdictStore(path)


def _cmd_adjudicate(args) -> int:
    archive = RunArchive(args.run_dir)
    store = _verdict_store(args)
    if args.import_file:
        applied = import_verdicts(archive, store, args.import_file, reviewer=args.reviewer)
        remaining = len(pending_queue(archive, store))
        print(f"{applied} verdicts imported, {remaining} still pending")
        return EXIT_OK
    recorded, skipped = review_loop(archive, store, reviewer=args.reviewer)
    print(f"{recorded} verdicts recorded, {skipped} skipped")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    archive = RunArchive(args.run_dir)
    store = _verdict_store(args)
    report = aggregate(archive, store)
    report.save(args.out)
    print(f"metrics report written to {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = [MetricsReport.load(p) for p in args.reports]
    print(emit_pass_at_k_table(reports), end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for report in reports:
            for kind in CSV_KINDS:
                emit_csv(report, kind, out_dir / f"{report.strategy}_{kind}.csv")
        print(f"CSV tables written to {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "adjudicate": _cmd_adjudicate,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PendingAdjudicationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PENDING
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (DatasetError, PromptError, ArchiveError, AdjudicationError,
            EvaluationError, ReportError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
