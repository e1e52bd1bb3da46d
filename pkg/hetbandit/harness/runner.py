from __future__ import annotations

import asyncio
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hetbandit import bounds
from hetbandit.confidence.erm import BetaSchedule, ErmSubroutine, FiniteFunctionClass
from hetbandit.confidence.gloc import GlmBetaSchedule, GlocSubroutine
from hetbandit.confidence.links import GlmModel
from hetbandit.core import RunTrace, num_levels
from hetbandit.eluder import covering_number_upper, eluder_dimension
from hetbandit.enums import Algorithm, BetaKind, EluderMode
from hetbandit.framework import Ml2Config, run_episode
from hetbandit.harness.baselines import OracleSubroutine, WeightedRidgeSubroutine
from hetbandit.harness.environments import build_environment, load_action_rows, load_function_class
from hetbandit.harness.reports import aggregate, emit_csv, write_aggregate
from hetbandit.harness.schedules import build_schedule
from hetbandit.schemas import (
    AggregateReport,
    ExperimentConfig,
    ExperimentConfigError,
    FiniteEnvironmentSpec,
    GlmEnvironmentSpec,
    TheoryBounds,
)


log = logging.getLogger(__name__)

AUTO_EXACT_LIMIT = 8
ERM_BETA_KINDS = {
    Algorithm.ML2_ERM_SUBGAUSSIAN: BetaKind.SUBGAUSSIAN,
    Algorithm.ML2_ERM_VARIANCE_AWARE: BetaKind.VARIANCE_AWARE_UNION,
    Algorithm.ML2_ERM_VARIANCE_AWARE_FIXED: BetaKind.VARIANCE_AWARE,
    Algorithm.BASELINE_ELUDER_UCB: BetaKind.SUBGAUSSIAN,
}
TRACES_FILE = "traces.csv"
AGGREGATE_FILE = "aggregate.json"


class ExperimentAbortedError(RuntimeError):
    """Too many seeds failed for the Monte-Carlo statistics to be trusted."""

    def __init__(self, failures: int, total: int, threshold: float) -> None:
        super().__init__(
            f"{failures} of {total} seeds failed, above the abort threshold of {threshold:.0%}"
        )
        self.failures = failures
        self.total = total


@dataclass(frozen=True)
class EpisodePlan:
    """Quantities shared by every seed of an experiment."""

    sigma_bar: float
    levels: int
    dim_e: float | None = None
    covering_number: int | None = None


@dataclass
class SeedOutcome:
    seed: int
    trace: RunTrace | None = None
    error: str | None = None
    traceback_text: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    plan: EpisodePlan
    traces: list[RunTrace] = field(default_factory=list)
    failed_seeds: list[int] = field(default_factory=list)
    wall_clock_seconds: float = 0.0


def _finite_class_dimension(fclass: FiniteFunctionClass, horizon: int) -> float:
    mode = EluderMode.EXACT if fclass.num_actions <= AUTO_EXACT_LIMIT else EluderMode.GREEDY
    result = eluder_dimension(fclass, horizon**-2.0, mode=mode)
    return float(max(1, result.dimension))


def plan_experiment(config: ExperimentConfig) -> EpisodePlan:
    R = config.noise.noise_bound
    algorithm = config.algorithm
    env = config.environment
    dim_e = covering = None
    if isinstance(env, FiniteEnvironmentSpec) and algorithm.needs_finite_class:
        fclass = load_function_class(env)
        dim_e = _finite_class_dimension(fclass, config.horizon)
        covering = covering_number_upper(fclass, config.effective_alpha() or 1.0)
    if isinstance(env, GlmEnvironmentSpec) and env.actions_path is not None:
        load_action_rows(env)

    if algorithm in (Algorithm.ORACLE, Algorithm.BASELINE_ELUDER_UCB):
        return EpisodePlan(sigma_bar=R, levels=1, dim_e=dim_e, covering_number=covering)

    explicit = config.sigma_bar != "auto"
    if algorithm is Algorithm.ML2_ERM_SUBGAUSSIAN:
        if explicit:
            sigma_bar, levels = config.sigma_bar, num_levels(R, config.sigma_bar)
        else:
            sigma_bar, levels = bounds.auto_sigma_bar_subgaussian(
                horizon=config.horizon,
                noise_bound=R,
                dim_e=dim_e,
                covering_number=covering,
                delta=config.delta,
            )
    elif algorithm in (Algorithm.ML2_ERM_VARIANCE_AWARE, Algorithm.ML2_ERM_VARIANCE_AWARE_FIXED):
        if explicit:
            sigma_bar = config.sigma_bar
        else:
            # C, one unit of the rescaled rewards.
            sigma_bar = load_function_class(env).bound
            if sigma_bar <= 0:
                raise ExperimentConfigError("sigma_bar: 'auto' needs a class with a positive bound")
        levels = num_levels(R, sigma_bar)
    else:
        sigma_bar = config.sigma_bar if explicit else bounds.auto_sigma_bar_glm(R, env.d)
        levels = 1 if algorithm is Algorithm.BASELINE_WEIGHTED_RIDGE else num_levels(R, sigma_bar)
    log.info("%s: sigma_bar=%.6g with %s levels", algorithm, sigma_bar, levels)
    return EpisodePlan(sigma_bar=sigma_bar, levels=levels, dim_e=dim_e, covering_number=covering)


def build_subroutine(config: ExperimentConfig, env, plan: EpisodePlan):
    R = config.noise.noise_bound
    algorithm = config.algorithm
    if algorithm is Algorithm.ORACLE:
        return OracleSubroutine(env)
    if algorithm.needs_finite_class:
        schedule = BetaSchedule(
            kind=ERM_BETA_KINDS[algorithm],
            reward_bound=env.fclass.bound,
            noise_bound=R,
            sigma_bar=plan.sigma_bar,
            num_levels=plan.levels,
            delta=config.delta,
            alpha=config.effective_alpha(),
            covering_number=plan.covering_number or env.fclass.size,
            scale=config.beta_scale,
        )
        return ErmSubroutine(env.fclass, schedule)
    if algorithm is Algorithm.ML2_GLOC:
        schedule = GlmBetaSchedule(
            model=env.model,
            noise_bound=R,
            sigma_bar=plan.sigma_bar,
            num_levels=plan.levels,
            delta=config.delta,
            lam=config.lam,
            scale=config.beta_scale,
        )
        return GlocSubroutine(env.model, schedule, clip_predictions=config.clip_predictions)
    return WeightedRidgeSubroutine(
        env.model, plan.sigma_bar, config.delta, lam=config.lam, scale=config.beta_scale
    )


def run_seed(config: ExperimentConfig, seed: int, plan: EpisodePlan | None = None) -> RunTrace:
    """One episode; the decision-set stream and the noise draw from separate children of ``seed``."""
    plan = plan_experiment(config) if plan is None else plan
    env_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    noise = build_schedule(config.noise, config.horizon)
    env = build_environment(config.environment, noise, np.random.default_rng(env_seq))
    subroutine = build_subroutine(config, env, plan)
    ml2 = Ml2Config(
        horizon=config.horizon,
        noise_bound=config.noise.noise_bound,
        sigma_bar=plan.sigma_bar,
        delta=config.delta,
        alpha=config.effective_alpha(),
        levels=plan.levels,
    )
    coverage = None
    if config.algorithm is not Algorithm.ORACLE:
        coverage = lambda conf_set: subroutine.covers(conf_set, env.truth)  # noqa: E731
    trace = run_episode(
        env, ml2, subroutine, np.random.default_rng(noise_seq), coverage=coverage, seed=seed
    )
    trace.reward_scale = getattr(subroutine, "reward_scale", 1.0)
    return trace


def _seed_job(payload: dict, seed: int, plan: EpisodePlan) -> SeedOutcome:
    # Runs in a worker process; errors come back as text.
    config = ExperimentConfig.model_validate(payload)
    try:
        return SeedOutcome(seed, trace=run_seed(config, seed, plan))
    except Exception as exc:
        return SeedOutcome(seed, error=f"{type(exc).__name__}: {exc}", traceback_text=traceback.format_exc())


def _log_worker_failures(outcomes: list[SeedOutcome]) -> None:
    for outcome in outcomes:
        if outcome.error is not None:
            log.error("seed %s failed\n%s", outcome.seed, outcome.traceback_text or outcome.error)


def _seed_in_process(config: ExperimentConfig, seed: int, plan: EpisodePlan) -> SeedOutcome:
    try:
        return SeedOutcome(seed, trace=run_seed(config, seed, plan))
    except Exception as exc:
        log.exception("seed %s failed", seed)
        return SeedOutcome(seed, error=f"{type(exc).__name__}: {exc}")


async def run_experiment_async(
    config: ExperimentConfig,
    *,
    workers: int = 1,
    failure_threshold: float = 0.1,
) -> ExperimentResult:
    plan = plan_experiment(config)
    started = time.perf_counter()
    log.info("running %s over %s seeds with %s workers", config.algorithm, len(config.seeds), workers)
    if workers <= 1:
        outcomes = [_seed_in_process(config, seed, plan) for seed in config.seeds]
    else:
        loop = asyncio.get_running_loop()
        semaphore = asyncio.Semaphore(workers)
        payload = config.model_dump(mode="json", by_alias=True)
        with ProcessPoolExecutor(max_workers=workers) as pool:

            async def _one(seed: int) -> SeedOutcome:
                async with semaphore:
                    return await loop.run_in_executor(pool, _seed_job, payload, seed, plan)

            outcomes = await asyncio.gather(*(_one(seed) for seed in config.seeds))
        _log_worker_failures(outcomes)

    result = ExperimentResult(config=config, plan=plan)
    for outcome in outcomes:
        if outcome.trace is None:
            result.failed_seeds.append(outcome.seed)
        else:
            result.traces.append(outcome.trace)
    result.wall_clock_seconds = time.perf_counter() - started
    if len(result.failed_seeds) > failure_threshold * len(config.seeds):
        raise ExperimentAbortedError(len(result.failed_seeds), len(config.seeds), failure_threshold)
    log.info(
        "%s finished in %.2fs (%s failed seeds)",
        config.algorithm,
        result.wall_clock_seconds,
        len(result.failed_seeds),
    )
    return result


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def theory_bounds(result: ExperimentResult) -> TheoryBounds:
    config, plan = result.config, result.plan
    noise = build_schedule(config.noise, config.horizon)
    T, R, delta = config.horizon, config.noise.noise_bound, config.delta
    J = noise.total_variance(T)
    algorithm = config.algorithm
    if algorithm in (Algorithm.ML2_ERM_SUBGAUSSIAN, Algorithm.BASELINE_ELUDER_UCB):
        C = load_function_class(config.environment).bound
        gaps = [trace.gap for trace in result.traces if math.isfinite(trace.gap)]
        common = dict(
            horizon=T,
            levels=plan.levels,
            dim_e=plan.dim_e,
            covering_number=plan.covering_number,
            delta=delta,
            alpha=config.effective_alpha(),
            reward_bound=C,
        )
        return TheoryBounds(
            regret_bound=bounds.subgaussian_regret_bound(
                total_variance=J, sigma_bar=plan.sigma_bar, noise_bound=R, **common
            ),
            gap_regret_bound=_finite_or_none(
                bounds.gap_regret_bound(gap=min(gaps), sigma_max=noise.sigma_max, **common)
            )
            if gaps
            else None,
        )
    if algorithm is Algorithm.ML2_ERM_VARIANCE_AWARE:
        C = load_function_class(config.environment).bound
        return TheoryBounds(
            regret_bound=C
            * bounds.variance_aware_regret_bound(
                horizon=T,
                levels=plan.levels,
                dim_e=plan.dim_e,
                total_variance=J / C**2,
                sigma_bar=plan.sigma_bar / C,
                covering_number=plan.covering_number,
                delta=delta,
                alpha=config.effective_alpha(),
                noise_bound=R / C,
            )
        )
    if algorithm is Algorithm.ML2_GLOC:
        model = GlmModel.from_spec(config.environment)
        return TheoryBounds(
            online_regression_bound=bounds.ftrl_regret_bound(T, model, R, noise.sigma_max, delta)
        )
    return TheoryBounds()


def write_artifacts(report: AggregateReport, traces: list[RunTrace], out_dir: str | Path) -> Path:
    directory = Path(out_dir)
    emit_csv(traces, directory / TRACES_FILE)
    write_aggregate(report, directory / AGGREGATE_FILE)
    log.info("wrote %s and %s to %s", TRACES_FILE, AGGREGATE_FILE, directory)
    return directory


def run_experiment(
    config: ExperimentConfig,
    *,
    out_dir: str | Path | None = None,
    workers: int = 1,
    failure_threshold: float = 0.1,
) -> AggregateReport:
    """Run every seed, aggregate, and write traces.csv and aggregate.json when a directory is known."""
    result = asyncio.run(
        run_experiment_async(config, workers=workers, failure_threshold=failure_threshold)
    )
    report = aggregate(
        result.traces,
        config_echo=config.model_dump(mode="json", by_alias=True),
        levels=result.plan.levels,
        failed_seeds=result.failed_seeds,
        wall_clock_seconds=result.wall_clock_seconds,
        theory=theory_bounds(result),
    )
    directory = out_dir if out_dir is not None else config.output_dir
    if directory is not None:
        write_artifacts(report, result.traces, directory)
    return report
