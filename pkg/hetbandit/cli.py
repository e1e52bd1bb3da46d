from __future__ import annotations

import argparse
import json
import logging
import sys

from dotenv import load_dotenv

from hetbandit.confidence.erm import FiniteFunctionClass
from hetbandit.config import Settings, load_settings
from hetbandit.eluder import SizeLimitError, eluder_dimension
from hetbandit.enums import EluderMode
from hetbandit.harness.reports import report_from_traces
from hetbandit.harness.runner import ExperimentAbortedError, run_experiment
from hetbandit.schemas import ExperimentConfigError, load_experiment_config


log = logging.getLogger("hetbandit")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetbandit",
        description="Multi-level bandit experiments under heteroscedastic noise",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run an experiment config over its seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--seeds", type=int, help="Use seeds 0..N-1 instead of the config's list")
    run.add_argument("--out", help="Artifact directory")
    run.add_argument("--workers", type=int)

    eluder = subparsers.add_parser("eluder", help="Eluder dimension of a finite function class")
    eluder.add_argument("--class", dest="class_path", required=True)
    eluder.add_argument("--eps", type=float, required=True)
    eluder.add_argument("--mode", choices=[mode.value for mode in EluderMode], default=EluderMode.EXACT.value)

    report = subparsers.add_parser("report", help="Recompute aggregates from traces.csv")
    report.add_argument("--traces", required=True)
    return parser


def _run(args: argparse.Namespace, settings: Settings) -> int:
    config = load_experiment_config(args.config)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ExperimentConfigError("--seeds must be at least 1")
        config = config.model_copy(update={"seeds": list(range(args.seeds))})
    out_dir = args.out or config.output_dir or settings.out_dir
    workers = args.workers if args.workers is not None else settings.workers
    report = run_experiment(
        config,
        out_dir=out_dir,
        workers=max(1, workers),
        failure_threshold=settings.failure_threshold,
    )
    summary = {
        "out": out_dir,
        "per_seed_final_regret": report.per_seed_final_regret,
        "failures": report.failures,
        "wall_clock_seconds": report.wall_clock_seconds,
    }
    print(json.dumps(summary, indent=2))
    return 0


def _eluder(args: argparse.Namespace, settings: Settings) -> int:
    fclass = FiniteFunctionClass.load(args.class_path)
    result = eluder_dimension(fclass, args.eps, mode=EluderMode(args.mode))
    print(json.dumps(result.to_json()))
    return 0


def _report(args: argparse.Namespace, settings: Settings) -> int:
    print(report_from_traces(args.traces).model_dump_json(indent=2))
    return 0


COMMANDS = {"run": _run, "eluder": _eluder, "report": _report}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    load_dotenv()
    try:
        settings = load_settings()
    except RuntimeError as exc:
        print(f"hetbandit: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO))
    try:
        return COMMANDS[args.command](args, settings)
    except (ExperimentConfigError, SizeLimitError, ExperimentAbortedError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
