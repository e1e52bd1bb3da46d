from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from hetbandit.core import RunTrace
from hetbandit.schemas import AggregateReport, CellCoverage, CoverageSummary, TheoryBounds


log = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "seed",
    "t",
    "action_index",
    "level",
    "sigma_t",
    "reward",
    "regret_inst",
    "regret_cum",
    "J_cum",
    "coverage_ok",
]
FLOAT_FORMAT = "%.17g"


class TraceWriteError(RuntimeError):
    """Trace or report artifacts could not be written."""

    def __init__(self, path: Path, cause: BaseException) -> None:
        super().__init__(f"cannot write {path}: {cause}")
        self.path = path


def traces_frame(traces: Sequence[RunTrace]) -> pd.DataFrame:
    rows = [
        (
            trace.seed,
            record.t,
            record.action_index,
            record.level,
            record.sigma,
            record.reward,
            record.regret_inst,
            record.regret_cum,
            record.j_cum,
            pd.NA if record.coverage_ok is None else int(record.coverage_ok),
        )
        for trace in traces
        for record in trace.rounds
    ]
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    return frame.astype(
        {
            "seed": "int64",
            "t": "int64",
            "action_index": "int64",
            "level": "int64",
            "sigma_t": "float64",
            "reward": "float64",
            "regret_inst": "float64",
            "regret_cum": "float64",
            "J_cum": "float64",
            "coverage_ok": "Int64",
        }
    )


def emit_csv(traces: Sequence[RunTrace], path: str | Path) -> Path:
    """One row per (seed, t); floats with 17 significant digits, empty coverage when not computed."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        traces_frame(traces).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise TraceWriteError(path, exc) from exc
    return path


def read_traces(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"coverage_ok": "Int64"}, float_precision="round_trip")
    missing = [column for column in TRACE_COLUMNS if column not in frame.columns]
    if missing:
        raise ValueError(f"{path} lacks trace columns {missing}")
    return frame


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    interval = stats.binomtest(successes, trials).proportion_ci(method="wilson")
    return float(interval.low), float(interval.high)


def coverage_report(frame: pd.DataFrame) -> CoverageSummary | None:
    """Violation frequencies per (t, level), per run, and at the final round."""
    flagged = frame.dropna(subset=["coverage_ok"])
    if flagged.empty:
        return None
    violated = flagged.assign(violation=(flagged["coverage_ok"] == 0).astype(int))
    cells = []
    for (t, level), group in violated.groupby(["t", "level"], sort=True):
        trials, violations = len(group), int(group["violation"].sum())
        low, high = wilson_interval(violations, trials)
        cells.append(
            CellCoverage(
                t=int(t),
                level=int(level),
                trials=trials,
                violations=violations,
                rate=violations / trials,
                ci_low=low,
                ci_high=high,
            )
        )
    per_run = violated.groupby("seed")["violation"].max()
    final = violated.loc[violated.groupby("seed")["t"].idxmax()]
    runs, any_violation = len(per_run), int(per_run.sum())
    final_violations = int(final["violation"].sum())
    return CoverageSummary(
        runs=runs,
        runs_with_violation=any_violation,
        any_violation_rate=any_violation / runs,
        any_violation_ci=wilson_interval(any_violation, runs),
        final_round_violations=final_violations,
        final_round_rate=final_violations / runs,
        final_round_ci=wilson_interval(final_violations, runs),
        cells=cells,
    )


def summarize(
    frame: pd.DataFrame,
    *,
    config_echo: dict[str, Any] | None = None,
    levels: int | None = None,
    failed_seeds: Sequence[int] = (),
    wall_clock_seconds: float = 0.0,
    theory: TheoryBounds | None = None,
) -> AggregateReport:
    """Aggregate report computed from trace rows alone."""
    seeds = list(dict.fromkeys(frame["seed"].tolist()))
    curves = frame.pivot(index="seed", columns="t", values="regret_cum").reindex(seeds)
    matrix = curves.to_numpy(dtype=float)
    if matrix.size:
        q25, median, q75 = np.nanpercentile(matrix, [25, 50, 75], axis=0)
        mean = np.nanmean(matrix, axis=0)
    else:
        q25 = median = q75 = mean = np.zeros(0)
    last = frame.sort_values("t").groupby("seed", sort=False).last().reindex(seeds)
    width = levels if levels is not None else (int(frame["level"].max()) + 1 if len(frame) else 0)
    occupancy = np.bincount(frame["level"].to_numpy(dtype=int), minlength=width) if len(frame) else np.zeros(width, dtype=int)
    return AggregateReport(
        config_echo=config_echo or {},
        seeds=[int(seed) for seed in seeds],
        per_seed_final_regret={str(seed): float(value) for seed, value in last["regret_cum"].items()},
        per_seed_J={str(seed): float(value) for seed, value in last["J_cum"].items()},
        mean_curve=mean.tolist(),
        median_curve=median.tolist(),
        q25_curve=q25.tolist(),
        q75_curve=q75.tolist(),
        coverage=coverage_report(frame),
        level_occupancy=[int(count) for count in occupancy],
        failures=len(failed_seeds),
        failed_seeds=list(failed_seeds),
        wall_clock_seconds=wall_clock_seconds,
        theory=theory or TheoryBounds(),
    )


def aggregate(
    traces: Sequence[RunTrace],
    *,
    config_echo: dict[str, Any] | None = None,
    levels: int | None = None,
    failed_seeds: Sequence[int] = (),
    wall_clock_seconds: float = 0.0,
    theory: TheoryBounds | None = None,
) -> AggregateReport:
    return summarize(
        traces_frame(traces),
        config_echo=config_echo,
        levels=levels,
        failed_seeds=failed_seeds,
        wall_clock_seconds=wall_clock_seconds,
        theory=theory,
    )


def write_aggregate(report: AggregateReport, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    except OSError as exc:
        raise TraceWriteError(path, exc) from exc
    return path


def report_from_traces(path: str | Path) -> AggregateReport:
    """Recompute the aggregate statistics of a run directory or traces.csv file."""
    path = Path(path)
    if path.is_dir():
        path = path / "traces.csv"
    log.info("summarizing %s", path)
    return summarize(read_traces(path))
