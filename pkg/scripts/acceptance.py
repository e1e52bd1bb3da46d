"""Desk-scale acceptance checks for hetbandit.

Each check runs seeded Monte-Carlo experiments and prints one JSON line with
its measurements. The exit status is non-zero when any check fails.
"""

from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import logging
import math
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from dotenv import load_dotenv
from scipy import stats

from hetbandit.bounds import ftrl_regret_bound
from hetbandit.confidence.erm import FiniteFunctionClass, erm_fit
from hetbandit.confidence.ftrl import (
    ftrl_regularizer,
    ftrl_step,
    online_regression_regret,
    prediction_error_check,
    run_ftrl,
)
from hetbandit.confidence.gloc import EllipsoidConfidenceSet, ucb_value_glm
from hetbandit.confidence.links import GlmModel
from hetbandit.config import load_settings
from hetbandit.eluder import eluder_dimension, is_eps_dependent
from hetbandit.enums import LinkKind
from hetbandit.harness.reports import coverage_report, read_traces, traces_frame
from hetbandit.harness.runner import ExperimentResult, run_experiment, run_experiment_async
from hetbandit.schemas import parse_experiment_config


log = logging.getLogger("hetbandit.acceptance")

RANDOM_CLASS = {"kind": "finite", "generator": "random", "num_functions": 20, "num_actions": 10}


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)


@dataclass
class Runner:
    workers: int
    scale: float

    def seeds(self, full: int) -> list[int]:
        return list(range(max(2, int(round(full * self.scale)))))

    def experiment(self, payload: dict[str, Any], seeds: int) -> ExperimentResult:
        config = parse_experiment_config({**payload, "seeds": self.seeds(seeds)})
        return asyncio.run(run_experiment_async(config, workers=self.workers))


def _json_scalar(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _final_regrets(result: ExperimentResult) -> np.ndarray:
    return np.array([trace.regret_cum for trace in result.traces])


def _mean_interval(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    half = float(stats.sem(values)) * float(stats.t.ppf(0.975, len(values) - 1))
    return mean - half, mean + half


def check_erm_coverage(runner: Runner) -> CheckResult:
    rates = {}
    for algorithm in ("ml2-erm-variance-aware", "ml2-erm-variance-aware-fixed"):
        result = runner.experiment(
            {
                "environment": {**RANDOM_CLASS, "decision_set_size": 10},
                "noise": {"kind": "constant", "R": 2.0, "sigma": 1.0},
                "algorithm": algorithm,
                "T": 500,
            },
            400,
        )
        summary = coverage_report(traces_frame(result.traces))
        rates[algorithm] = summary.final_round_rate
    return CheckResult(
        "erm-coverage",
        max(rates.values()) <= 0.26,
        {"final_round_rate": rates, "runs": summary.runs},
    )


def check_gloc_coverage(runner: Runner) -> CheckResult:
    result = runner.experiment(
        {
            "environment": {"kind": "glm", "d": 3, "theta_star": [0.5, -0.3, 0.2], "A": 1.0, "B": 1.0},
            "noise": {"kind": "bursty", "R": 1.0, "burst_fraction": 0.05},
            "algorithm": "ml2-gloc",
            "T": 300,
            "delta": 0.05,
            "lambda": 1.0,
        },
        400,
    )
    summary = coverage_report(traces_frame(result.traces))
    return CheckResult(
        "gloc-coverage",
        summary.any_violation_rate <= 0.26,
        {"any_violation_rate": summary.any_violation_rate, "runs": summary.runs},
    )


def _ftrl_runs(runner: Runner, horizon: int, sigma: float):
    model = GlmModel(LinkKind.IDENTITY, 1.0, 1.0, 2)
    theta_star = np.array([0.6, -0.4])
    for seed in runner.seeds(200):
        rng = np.random.default_rng(seed)
        actions = rng.standard_normal((horizon, 2))
        actions /= np.linalg.norm(actions, axis=1, keepdims=True)
        rewards = actions @ theta_star + sigma * rng.standard_normal(horizon)
        yield model, theta_star, run_ftrl(actions, rewards, model)


def check_ftrl_regret(runner: Runner) -> CheckResult:
    horizon, sigma, delta = 500, 0.2, 0.05
    bound = ftrl_regret_bound(horizon, GlmModel(LinkKind.IDENTITY, 1.0, 1.0, 2), 1.0, sigma, delta)
    within = [
        online_regression_regret(trace, theta_star, model)[-1] <= bound
        for model, theta_star, trace in _ftrl_runs(runner, horizon, sigma)
    ]
    fraction = float(np.mean(within))
    return CheckResult("ftrl-regret-bound", fraction >= 0.85, {"fraction_within": fraction, "bound": bound})


def check_prediction_error(runner: Runner) -> CheckResult:
    horizon, sigma, delta = 500, 0.2, 0.05
    violations = [
        not prediction_error_check(trace, theta_star, model, delta, 1.0)
        for model, theta_star, trace in _ftrl_runs(runner, horizon, sigma)
    ]
    rate = float(np.mean(violations))
    return CheckResult("prediction-error", rate <= delta + 0.05, {"violation_rate": rate})


def check_oracles(runner: Runner) -> CheckResult:
    rng = np.random.default_rng(2024)
    erm_mismatches = 0
    for _ in range(1000):
        n_functions, n_actions = int(rng.integers(1, 10)), int(rng.integers(1, 8))
        table = rng.uniform(-1, 1, size=(n_functions, n_actions))
        fclass = FiniteFunctionClass(tuple(range(n_actions)), table, 1.0)
        data = [(int(rng.integers(n_actions)), float(rng.normal())) for _ in range(int(rng.integers(0, 30)))]
        losses = np.array([sum((table[f, a] - r) ** 2 for a, r in data) for f in range(n_functions)])
        fitted = erm_fit(data, fclass)
        erm_mismatches += int(losses[fitted] > losses.min() + 1e-9)

    ftrl_error = 0.0
    for _ in range(200):
        dim, n = int(rng.integers(1, 11)), int(rng.integers(1, 501))
        model = GlmModel(LinkKind.IDENTITY, 1.0, 1.0, dim)
        actions = rng.standard_normal((n, dim))
        actions /= np.linalg.norm(actions, axis=1, keepdims=True)
        rewards = rng.normal(size=n)
        closed = np.linalg.solve(
            2 * ftrl_regularizer(model) * np.eye(dim) + actions.T @ actions, actions.T @ rewards
        )
        ftrl_error = max(ftrl_error, float(np.abs(ftrl_step(list(zip(actions, rewards)), model) - closed).max()))

    ucb_gap, ucb_below = 0.0, 0
    model = GlmModel(LinkKind.IDENTITY, 10.0, 10.0, 2)
    angles = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    circle = np.stack([np.cos(angles), np.sin(angles)])
    for _ in range(100):
        root = rng.standard_normal((2, 2))
        shape = root @ root.T + 0.5 * np.eye(2)
        center, beta, action = rng.uniform(-1, 1, 2), float(rng.uniform(0.1, 2)), rng.uniform(-1, 1, 2)
        boundary = center[:, None] + math.sqrt(beta) * np.linalg.solve(np.linalg.cholesky(shape).T, circle)
        sampled = float((action @ boundary).max())
        value = ucb_value_glm(EllipsoidConfidenceSet(center, shape, beta), action, model)
        ucb_below += int(value < sampled - 1e-12)
        ucb_gap = max(ucb_gap, value - sampled)

    passed = erm_mismatches == 0 and ftrl_error <= 1e-8 and ucb_below == 0 and ucb_gap <= 1e-3
    return CheckResult(
        "oracle-equivalences",
        passed,
        {"erm_mismatches": erm_mismatches, "ftrl_max_error": ftrl_error, "ucb_max_gap": ucb_gap},
    )


def _bursty_payload(algorithm: str, schedule: dict[str, Any]) -> dict[str, Any]:
    return {
        "environment": {**RANDOM_CLASS, "decision_set_size": 10},
        "noise": schedule,
        "algorithm": algorithm,
        "T": 2000,
    }


def check_variance_advantage(runner: Runner) -> CheckResult:
    bursty = {"kind": "bursty", "R": 2.0, "burst_fraction": 0.01, "base_sigma": 0.02}
    constant = {"kind": "constant", "R": 2.0}
    ml2 = _final_regrets(runner.experiment(_bursty_payload("ml2-erm-subgaussian", bursty), 100))
    base = _final_regrets(runner.experiment(_bursty_payload("baseline-eluder-ucb", bursty), 100))
    ml2_flat = _final_regrets(runner.experiment(_bursty_payload("ml2-erm-subgaussian", constant), 100))
    base_flat = _final_regrets(runner.experiment(_bursty_payload("baseline-eluder-ucb", constant), 100))
    low_a, high_a = _mean_interval(ml2_flat)
    low_b, high_b = _mean_interval(base_flat)
    overlap = low_a <= high_b and low_b <= high_a
    ratio = float(ml2.mean() / base.mean()) if base.mean() > 0 else math.inf
    return CheckResult(
        "variance-advantage",
        ratio < 0.5 and overlap,
        {
            "bursty_ratio": ratio,
            "constant_ml2_ci": [low_a, high_a],
            "constant_baseline_ci": [low_b, high_b],
        },
    )


def _brute_force_dimension(fclass: FiniteFunctionClass, eps: float) -> int:
    n = fclass.num_actions
    candidates = {eps}
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            columns = fclass.table[:, list(subset)]
            diff = columns[:, None, :] - columns[None, :, :]
            candidates.update(float(v) for v in np.sqrt((diff * diff).sum(axis=-1)).ravel() if v >= eps)

    def longest(prefix: list[int], eps_prime: float) -> int:
        return max(
            [len(prefix)]
            + [
                longest(prefix + [a], eps_prime)
                for a in range(n)
                if a not in prefix and not is_eps_dependent(a, prefix, fclass, eps_prime)
            ]
        )

    return max(longest([], eps_prime) for eps_prime in candidates)


def check_eluder(runner: Runner) -> CheckResult:
    single = eluder_dimension(FiniteFunctionClass((0, 1, 2), np.array([[0.1, 0.2, 0.3]]), 1.0), 0.5).dimension
    binary = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
    cube = eluder_dimension(FiniteFunctionClass((0, 1, 2), binary, 1.0), 0.5).dimension
    rng = np.random.default_rng(7)
    mismatches = 0
    instances = 0
    for n_actions in range(1, 6):
        for n_functions in range(1, 9):
            table = rng.choice([0.0, 0.5, 1.0], size=(n_functions, n_actions))
            fclass = FiniteFunctionClass(tuple(range(n_actions)), table, 1.0)
            for eps in (0.3, 0.5, 0.8):
                instances += 1
                mismatches += int(eluder_dimension(fclass, eps).dimension != _brute_force_dimension(fclass, eps))
    return CheckResult(
        "eluder-brute-force",
        single == 0 and cube == 3 and mismatches == 0,
        {"single": single, "binary_cube": cube, "instances": instances, "mismatches": mismatches},
    )


def check_determinism(runner: Runner) -> CheckResult:
    config = parse_experiment_config(
        {
            "environment": {**RANDOM_CLASS, "decision_set_size": 5},
            "noise": {"kind": "bursty", "R": 1.0, "burst_fraction": 0.05},
            "algorithm": "ml2-erm-subgaussian",
            "T": 200,
            "seeds": [0, 1, 2],
        }
    )
    with tempfile.TemporaryDirectory() as tmp:
        run_experiment(config, out_dir=Path(tmp) / "a", workers=runner.workers)
        run_experiment(config, out_dir=Path(tmp) / "b", workers=runner.workers)
        identical = (Path(tmp) / "a" / "traces.csv").read_bytes() == (Path(tmp) / "b" / "traces.csv").read_bytes()
        frame = read_traces(Path(tmp) / "a" / "traces.csv")
    rebuilt = frame.groupby("seed")["regret_inst"].cumsum()
    max_error = float((rebuilt - frame["regret_cum"]).abs().max())
    return CheckResult("determinism", identical and max_error <= 1e-12, {"identical": identical, "max_error": max_error})


def check_gap_direction(runner: Runner) -> CheckResult:
    def payload(gap: float) -> dict[str, Any]:
        return {
            "environment": {"kind": "finite", "generator": "gapped", "num_functions": 10, "num_actions": 10, "gap": gap},
            # Low enough that the narrow gap also eliminates every wrong peak within T.
            "noise": {"kind": "constant", "R": 1.0, "sigma": 0.08},
            "algorithm": "ml2-erm-subgaussian",
            "T": 2000,
        }

    wide = float(_final_regrets(runner.experiment(payload(0.5), 100)).mean())
    narrow = float(_final_regrets(runner.experiment(payload(0.1), 100)).mean())
    return CheckResult("gap-direction", wide < narrow, {"gap_0.5": wide, "gap_0.1": narrow})


def check_variance_scaling(runner: Runner) -> CheckResult:
    def regret(sigma: float) -> float:
        payload = {
            "environment": {**RANDOM_CLASS, "decision_set_size": 10},
            "noise": {"kind": "constant", "R": 1.0, "sigma": sigma},
            "algorithm": "ml2-erm-subgaussian",
            "T": 1000,
        }
        return float(_final_regrets(runner.experiment(payload, 50)).mean())

    high, low, noiseless = regret(1.0), regret(0.1), regret(0.0)
    floor = noiseless / high if high > 0 else 0.0
    ratio = low / high if high > 0 else 0.0
    limit = 3 * math.sqrt(0.01) + floor
    return CheckResult(
        "variance-scaling",
        ratio <= limit,
        {"ratio": ratio, "limit": limit, "additive_floor": floor},
    )


CHECKS: dict[str, Callable[[Runner], CheckResult]] = {
    "erm-coverage": check_erm_coverage,
    "gloc-coverage": check_gloc_coverage,
    "ftrl-regret-bound": check_ftrl_regret,
    "prediction-error": check_prediction_error,
    "oracle-equivalences": check_oracles,
    "variance-advantage": check_variance_advantage,
    "eluder-brute-force": check_eluder,
    "determinism": check_determinism,
    "gap-direction": check_gap_direction,
    "variance-scaling": check_variance_scaling,
}


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--only", action="append", choices=sorted(CHECKS), help="Run only these checks")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--scale", type=float, default=1.0, help="Fraction of the full seed counts")
    args = parser.parse_args()

    load_dotenv()
    settings = load_settings()
    logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO))
    runner = Runner(workers=args.workers or settings.workers, scale=args.scale)

    failed = []
    for name in args.only or CHECKS:
        started = time.perf_counter()
        result = CHECKS[name](runner)
        result.seconds = time.perf_counter() - started
        print(
            json.dumps(
                {"check": name, "passed": result.passed, "seconds": round(result.seconds, 2), **result.details},
                default=_json_scalar,
            )
        )
        if not result.passed:
            failed.append(name)
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
        sys.exit(1)


if __name__ == "__main__":
    main()
