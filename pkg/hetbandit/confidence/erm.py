from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from hetbandit.core import InvalidArgumentError, require_positive, require_probability
from hetbandit.enums import BetaKind
from hetbandit.framework import Observation
from hetbandit.schemas import FiniteClassDocument


BOUND_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FiniteFunctionClass:
    """Reward functions tabulated as rows over a finite action universe."""

    universe: tuple[str | int, ...]
    table: np.ndarray
    bound: float

    def __post_init__(self) -> None:
        universe = tuple(self.universe)
        table = np.array(self.table, dtype=float)
        if not universe:
            raise InvalidArgumentError("action universe is empty")
        if table.ndim != 2 or table.shape[0] < 1:
            raise InvalidArgumentError("function table must be a non-empty matrix")
        if table.shape[1] != len(universe):
            raise InvalidArgumentError(
                f"function table has {table.shape[1]} columns for {len(universe)} actions"
            )
        if not math.isfinite(self.bound) or self.bound < 0:
            raise InvalidArgumentError(f"bound C must be non-negative, got {self.bound!r}")
        if not np.all(np.isfinite(table)):
            raise InvalidArgumentError("function table contains non-finite values")
        if np.abs(table).max() > self.bound + BOUND_TOLERANCE:
            raise InvalidArgumentError(f"function values exceed the bound C={self.bound}")
        table.setflags(write=False)
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "bound", float(self.bound))

    @classmethod
    def from_document(cls, document: FiniteClassDocument) -> "FiniteFunctionClass":
        return cls(
            universe=tuple(document.actions),
            table=np.array(document.functions, dtype=float),
            bound=document.bound,
        )

    @classmethod
    def load(cls, path: str | Path) -> "FiniteFunctionClass":
        document = FiniteClassDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
        return cls.from_document(document)

    def to_document(self) -> FiniteClassDocument:
        return FiniteClassDocument(
            actions=list(self.universe),
            functions=self.table.tolist(),
            bound=self.bound,
        )

    @property
    def size(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    def index_of(self, action_id: str | int) -> int:
        try:
            return self.universe.index(action_id)
        except ValueError as exc:
            raise InvalidArgumentError(f"action {action_id!r} is not in the class universe") from exc

    def check_actions(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=int)
        if actions.size and (actions.min() < 0 or actions.max() >= self.num_actions):
            raise InvalidArgumentError(
                f"action index outside the class universe of size {self.num_actions}"
            )
        return actions

    def scaled(self, factor: float) -> "FiniteFunctionClass":
        require_positive("scale factor", factor)
        return FiniteFunctionClass(self.universe, self.table / factor, self.bound / factor)


@dataclass(frozen=True)
class LevelStatistics:
    """Sufficient statistics of a level's data for squared-loss ERM."""

    counts: np.ndarray
    reward_sums: np.ndarray
    reward_squares: float = 0.0

    @classmethod
    def empty(cls, num_actions: int) -> "LevelStatistics":
        return cls(np.zeros(num_actions), np.zeros(num_actions))

    @classmethod
    def from_data(
        cls, level_data: Sequence[tuple[int, float]], fclass: FiniteFunctionClass
    ) -> "LevelStatistics":
        stats = cls.empty(fclass.num_actions)
        if not level_data:
            return stats
        actions = fclass.check_actions(np.array([action for action, _ in level_data]))
        rewards = np.array([reward for _, reward in level_data], dtype=float)
        counts = np.bincount(actions, minlength=fclass.num_actions).astype(float)
        sums = np.bincount(actions, weights=rewards, minlength=fclass.num_actions)
        return cls(counts, sums, float(np.dot(rewards, rewards)))

    def add(self, action: int, reward: float) -> "LevelStatistics":
        counts = self.counts.copy()
        sums = self.reward_sums.copy()
        counts[action] += 1.0
        sums[action] += reward
        return LevelStatistics(counts, sums, self.reward_squares + reward * reward)

    @property
    def size(self) -> int:
        return int(self.counts.sum())


def empirical_losses(fclass: FiniteFunctionClass, stats: LevelStatistics) -> np.ndarray:
    table = fclass.table
    return (table * table) @ stats.counts - 2.0 * (table @ stats.reward_sums) + stats.reward_squares


def squared_distances(fclass: FiniteFunctionClass, stats: LevelStatistics, fitted: int) -> np.ndarray:
    diff = fclass.table - fclass.table[fitted]
    return (diff * diff) @ stats.counts


def erm_fit(level_data: Sequence[tuple[int, float]], fclass: FiniteFunctionClass) -> int:
    """Least-squares minimiser over the class; ties and empty data go to the lowest index."""
    stats = LevelStatistics.from_data(level_data, fclass)
    return int(np.argmin(empirical_losses(fclass, stats)))


@dataclass(frozen=True)
class BetaSchedule:
    kind: BetaKind
    reward_bound: float
    noise_bound: float
    sigma_bar: float
    num_levels: int
    delta: float
    alpha: float
    covering_number: int
    scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BetaKind(self.kind))
        require_probability("delta", self.delta)
        require_positive("R", self.noise_bound)
        require_positive("sigma_bar", self.sigma_bar)
        if self.reward_bound < 0 or self.alpha < 0:
            raise InvalidArgumentError("C and alpha must be non-negative")
        if self.num_levels < 1 or self.covering_number < 1:
            raise InvalidArgumentError("L and the covering number must be at least 1")
        require_positive("beta scale", self.scale)

    def threshold(self, t: int, level: int) -> float:
        if self.kind is BetaKind.SUBGAUSSIAN:
            value = beta_subgaussian(t, level, self)
        else:
            value = beta_variance_aware(t, level, self)
        return self.scale * value


def _check_round(t: int, level: int, params: BetaSchedule) -> None:
    if t < 1:
        raise InvalidArgumentError(f"round must be at least 1, got {t}")
    if not 0 <= level < params.num_levels:
        raise InvalidArgumentError(f"level {level} outside [0, {params.num_levels})")


def _level_width(level: int, sigma_bar: float) -> float:
    return (2.0 ** (level + 1) * sigma_bar) ** 2


def beta_subgaussian(t: int, level: int, params: BetaSchedule) -> float:
    """Sum-of-squares threshold for conditionally σ_t-sub-Gaussian noise."""
    _check_round(t, level, params)
    width = _level_width(level, params.sigma_bar)
    levels = params.num_levels
    variance_term = 8.0 * width * math.log(2.0 * params.covering_number * levels / params.delta)
    cover_term = 4.0 * t * params.alpha * (
        params.reward_bound + math.sqrt(width * math.log(4.0 * t * (t + 1) * levels / params.delta))
    )
    return variance_term + cover_term


def beta_variance_aware(t: int, level: int, params: BetaSchedule) -> float:
    """Variance-aware threshold; the union kind spends δ across all levels and needs C = 1."""
    _check_round(t, level, params)
    if params.kind is BetaKind.SUBGAUSSIAN:
        raise InvalidArgumentError("variance-aware threshold requested for a sub-Gaussian schedule")
    union = params.kind is BetaKind.VARIANCE_AWARE_UNION
    if union and params.reward_bound != 1.0:
        raise InvalidArgumentError(
            f"the union threshold needs C = 1, got C={params.reward_bound}; rescale rewards first"
        )
    spread = params.num_levels if union else 1
    r_bar = params.noise_bound * math.sqrt(2.0 * math.log(4.0 * t * t * spread / params.delta))
    log_term = math.log(2.0 * params.covering_number * t * t * spread / params.delta)
    c = params.reward_bound
    return (
        12.0 * c * params.alpha * t
        + 4.0 * params.alpha * r_bar * t
        + (8.0 / 3.0) * c * r_bar * log_term
        + 16.0 * _level_width(level, params.sigma_bar) * log_term
    )


@dataclass(frozen=True)
class EnumeratedConfidenceSet:
    members: np.ndarray
    fitted: int
    beta_sq: float

    def __len__(self) -> int:
        return int(self.members.size)

    def __contains__(self, index: object) -> bool:
        return bool(np.any(self.members == index))


def _members(distances: np.ndarray, beta_sq: float) -> np.ndarray:
    return np.flatnonzero(distances <= beta_sq)


def build_confidence_set(
    fclass: FiniteFunctionClass,
    level_data: Sequence[tuple[int, float]],
    fitted: int,
    beta_sq: float,
) -> EnumeratedConfidenceSet:
    stats = LevelStatistics.from_data(level_data, fclass)
    distances = squared_distances(fclass, stats, fitted)
    return EnumeratedConfidenceSet(_members(distances, beta_sq), fitted, beta_sq)


def ucb_value(conf_set: EnumeratedConfidenceSet, fclass: FiniteFunctionClass, action: int) -> float | None:
    if len(conf_set) == 0:
        return None
    return float(fclass.table[conf_set.members, action].max())


@dataclass(frozen=True)
class ErmLevelFit:
    stats: LevelStatistics
    fitted: int
    distances: np.ndarray


class ErmSubroutine:
    """Per-level least-squares ERM with enumerated confidence sets.

    The union threshold is stated for |f| <= 1, so a class with C != 1 is run on
    rewards divided by C; optimistic values are reported back in original units.
    """

    def __init__(self, fclass: FiniteFunctionClass, schedule: BetaSchedule) -> None:
        self.reward_scale = 1.0
        if schedule.kind is BetaKind.VARIANCE_AWARE_UNION and schedule.reward_bound != 1.0:
            if schedule.reward_bound <= 0:
                raise InvalidArgumentError("cannot rescale rewards of a class with C = 0")
            self.reward_scale = schedule.reward_bound
            fclass = fclass.scaled(self.reward_scale)
            schedule = replace(
                schedule,
                reward_bound=1.0,
                noise_bound=schedule.noise_bound / self.reward_scale,
                sigma_bar=schedule.sigma_bar / self.reward_scale,
            )
        self.fclass = fclass
        self.schedule = schedule

    def initial_fit(self, level: int) -> ErmLevelFit:
        return ErmLevelFit(
            stats=LevelStatistics.empty(self.fclass.num_actions),
            fitted=0,
            distances=np.zeros(self.fclass.size),
        )

    def update(self, fit: ErmLevelFit, level: int, observation: Observation) -> ErmLevelFit:
        action = int(self.fclass.check_actions(np.array([observation.action]))[0])
        stats = fit.stats.add(action, observation.reward / self.reward_scale)
        fitted = int(np.argmin(empirical_losses(self.fclass, stats)))
        return ErmLevelFit(stats, fitted, squared_distances(self.fclass, stats, fitted))

    def confidence_set(self, fit: ErmLevelFit, level: int, t: int) -> EnumeratedConfidenceSet:
        beta_sq = self.schedule.threshold(t, level)
        return EnumeratedConfidenceSet(_members(fit.distances, beta_sq), fit.fitted, beta_sq)

    def optimistic_values(
        self, conf_set: EnumeratedConfidenceSet, actions: np.ndarray
    ) -> np.ndarray | None:
        if len(conf_set) == 0:
            return None
        values = self.fclass.table[np.ix_(conf_set.members, np.asarray(actions, dtype=int))]
        return values.max(axis=0) * self.reward_scale

    def covers(self, conf_set: EnumeratedConfidenceSet, truth: int) -> bool:
        return truth in conf_set
