from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence, TypeVar

import numpy as np

from hetbandit.core import (
    InvalidArgumentError,
    LevelPartition,
    NoiseSpec,
    RunTrace,
    minimum_gap,
    num_levels,
    record_round,
    require_positive,
    require_probability,
    sample_noise,
)


log = logging.getLogger(__name__)

FitT = TypeVar("FitT")
SetT = TypeVar("SetT")


class ConfigurationError(RuntimeError):
    """The episode cannot proceed with the given configuration."""


class EpisodeError(RuntimeError):
    """A confidence-set subroutine failed during an episode."""

    def __init__(self, round_index: int, cause: BaseException) -> None:
        super().__init__(f"round {round_index}: {cause}")
        self.round_index = round_index


@dataclass(frozen=True)
class Observation:
    t: int
    action: Any
    reward: float
    sigma: float


class ConfidenceSubroutine(Protocol[FitT, SetT]):
    """Per-level regression state and the confidence sets derived from it.

    ``update`` must return a new fit and leave the old one untouched, so levels
    that receive no data keep identical state across rounds. Thresholds are
    applied in ``confidence_set`` at the round being scored.
    """

    def initial_fit(self, level: int) -> FitT: ...

    def update(self, fit: FitT, level: int, observation: Observation) -> FitT: ...

    def confidence_set(self, fit: FitT, level: int, t: int) -> SetT: ...

    def optimistic_values(self, conf_set: SetT, actions: np.ndarray) -> np.ndarray | None: ...

    def covers(self, conf_set: SetT, truth: Any) -> bool: ...


class Environment(Protocol):
    noise: NoiseSpec
    truth: Any
    reward_bound: float

    @property
    def horizon(self) -> int: ...

    def decision_set(self, t: int) -> np.ndarray: ...

    def mean_rewards(self, actions: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Ml2Config:
    horizon: int
    noise_bound: float
    sigma_bar: float
    delta: float = 0.1
    alpha: float = 0.0
    levels: int | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise InvalidArgumentError(f"horizon must be at least 1, got {self.horizon}")
        require_positive("R", self.noise_bound)
        require_positive("sigma_bar", self.sigma_bar)
        require_probability("delta", self.delta)
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be non-negative, got {self.alpha!r}")
        if self.levels is not None and self.levels < 1:
            raise InvalidArgumentError(f"levels must be at least 1, got {self.levels}")

    @property
    def num_levels(self) -> int:
        if self.levels is not None:
            return self.levels
        return num_levels(self.noise_bound, self.sigma_bar)


@dataclass(frozen=True)
class OfuChoice:
    index: int
    scores: np.ndarray
    skipped_levels: int = 0


def select_action_ofu(
    decision_set: Sequence[Any] | np.ndarray,
    optimistic: Callable[[int, Any], np.ndarray | None],
    levels: int,
) -> OfuChoice:
    """argmax over actions of the min over levels of the optimistic value.

    ``optimistic(level, decision_set)`` returns one value per action, or None
    when the level's set is empty; such levels are left out of the min.
    Ties go to the lowest index.
    """
    size = len(decision_set)
    if size == 0:
        raise InvalidArgumentError("decision set is empty")
    if levels < 1:
        raise InvalidArgumentError(f"number of levels must be at least 1, got {levels}")
    scores = np.full(size, np.inf)
    skipped = 0
    for level in range(levels):
        values = optimistic(level, decision_set)
        if values is None:
            skipped += 1
            continue
        scores = np.minimum(scores, np.asarray(values, dtype=float))
    if skipped == levels:
        raise ConfigurationError("every level has an empty confidence set; no action can be scored")
    return OfuChoice(index=int(np.argmax(scores)), scores=scores, skipped_levels=skipped)


def run_episode(
    env: Environment,
    config: Ml2Config,
    subroutine: ConfidenceSubroutine[FitT, SetT],
    rng: np.random.Generator,
    *,
    coverage: Callable[[SetT], bool] | None = None,
    seed: int = 0,
) -> RunTrace:
    """Run the multi-level OFU loop for ``config.horizon`` rounds.

    ``coverage`` is an oracle supplied by the harness; the policy never sees it.
    """
    if env.horizon < config.horizon:
        raise InvalidArgumentError(
            f"environment horizon {env.horizon} is shorter than T={config.horizon}"
        )
    levels = config.num_levels
    partition = LevelPartition(config.sigma_bar, levels)
    fits: list[FitT] = [subroutine.initial_fit(level) for level in range(levels)]
    trace = RunTrace(seed=seed, reward_bound=env.reward_bound)
    value_rows: list[np.ndarray] = []

    for t in range(1, config.horizon + 1):
        decision_set = env.decision_set(t)
        try:
            sets = [subroutine.confidence_set(fits[level], level, t) for level in range(levels)]
            choice = select_action_ofu(
                decision_set,
                lambda level, actions: subroutine.optimistic_values(sets[level], actions),
                levels,
            )
        except (ConfigurationError, InvalidArgumentError):
            raise
        except Exception as exc:
            raise EpisodeError(t, exc) from exc
        trace.empty_level_skips += choice.skipped_levels

        means = np.asarray(env.mean_rewards(decision_set), dtype=float)
        sigma_t = env.noise.sigma(t)
        reward = float(means[choice.index]) + sample_noise(env.noise, t, rng)
        # σ_t is revealed only after acting.
        level = partition.route(t, sigma_t)
        observation = Observation(t=t, action=decision_set[choice.index], reward=reward, sigma=sigma_t)
        try:
            fits[level] = subroutine.update(fits[level], level, observation)
        except Exception as exc:
            raise EpisodeError(t, exc) from exc

        coverage_ok: bool | None = None
        all_covered: bool | None = None
        if coverage is not None:
            coverage_ok = bool(coverage(subroutine.confidence_set(fits[level], level, t + 1)))
            all_covered = all(bool(coverage(conf_set)) for conf_set in sets)

        record_round(
            trace,
            means,
            choice.index,
            reward,
            sigma_t,
            level,
            coverage_ok=coverage_ok,
            all_covered=all_covered,
            scores=choice.scores,
        )
        value_rows.append(means)

    trace.gap = minimum_gap(value_rows)
    if trace.empty_level_skips:
        log.warning(
            "seed %s: %s empty level confidence sets skipped during OFU",
            seed,
            trace.empty_level_skips,
        )
    return trace
