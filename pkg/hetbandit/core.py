from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hetbandit.enums import NoiseKind


log = logging.getLogger(__name__)

LOG2_TOLERANCE = 1e-12


class InvalidArgumentError(ValueError):
    """An argument violates the precondition of the operation it was passed to."""


def require_positive(name: str, value: float) -> float:
    if not math.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def require_probability(name: str, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise InvalidArgumentError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def floor_log2(x: float) -> int:
    """floor(log2(x)) with values within a relative 1e-12 of a power of two snapped onto it."""
    require_positive("x", x)
    _, exponent = math.frexp(x)
    if abs(x - math.ldexp(1.0, exponent)) <= LOG2_TOLERANCE * x:
        return exponent
    return exponent - 1


def ceil_log2(x: float) -> int:
    k = floor_log2(x)
    if abs(x - math.ldexp(1.0, k)) <= LOG2_TOLERANCE * x:
        return k
    return k + 1


def num_levels(noise_bound: float, sigma_bar: float) -> int:
    require_positive("R", noise_bound)
    require_positive("sigma_bar", sigma_bar)
    return max(1, ceil_log2(noise_bound / sigma_bar))


def assign_level(sigma_t: float, sigma_bar: float, levels: int) -> int:
    """Level l with 2^l σ̄ <= max(σ̄, σ_t) <= 2^(l+1) σ̄, clamped to [0, levels - 1].

    Exact powers of two go to the lower level.
    """
    if not math.isfinite(sigma_t) or sigma_t < 0:
        raise InvalidArgumentError(f"sigma_t must be finite and non-negative, got {sigma_t!r}")
    require_positive("sigma_bar", sigma_bar)
    if levels < 1:
        raise InvalidArgumentError(f"number of levels must be at least 1, got {levels}")
    sigma_eff = max(sigma_bar, sigma_t)
    level = floor_log2(sigma_eff / sigma_bar)
    return min(max(level, 0), levels - 1)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-round noise scales with 0 <= sigma_t <= R; sigma_t may equal R."""

    noise_bound: float
    schedule: tuple[float, ...]
    kind: NoiseKind = NoiseKind.GAUSSIAN

    def __post_init__(self) -> None:
        require_positive("R", self.noise_bound)
        schedule = tuple(float(sigma) for sigma in self.schedule)
        for t, sigma in enumerate(schedule, start=1):
            if not math.isfinite(sigma) or sigma < 0 or sigma > self.noise_bound:
                raise InvalidArgumentError(
                    f"sigma at round {t} must lie in [0, R={self.noise_bound}], got {sigma!r}"
                )
        object.__setattr__(self, "schedule", schedule)
        object.__setattr__(self, "kind", NoiseKind(self.kind))

    @property
    def horizon(self) -> int:
        return len(self.schedule)

    @property
    def sigma_max(self) -> float:
        return max(self.schedule, default=0.0)

    def sigma(self, t: int) -> float:
        if not 1 <= t <= len(self.schedule):
            raise InvalidArgumentError(
                f"round {t} outside the noise schedule of length {len(self.schedule)}"
            )
        return self.schedule[t - 1]

    def total_variance(self, horizon: int | None = None) -> float:
        end = len(self.schedule) if horizon is None else horizon
        return math.fsum(sigma * sigma for sigma in self.schedule[:end])


def sample_noise(spec: NoiseSpec, t: int, rng: np.random.Generator) -> float:
    sigma = spec.sigma(t)
    if spec.kind is NoiseKind.GAUSSIAN:
        return sigma * float(rng.standard_normal())
    half_width = sigma * math.sqrt(3.0)
    return float(rng.uniform(-half_width, half_width))


class LevelPartition:
    """Round indices grouped by noise level; owned by a single episode."""

    def __init__(self, sigma_bar: float, levels: int) -> None:
        self.sigma_bar = require_positive("sigma_bar", sigma_bar)
        if levels < 1:
            raise InvalidArgumentError(f"number of levels must be at least 1, got {levels}")
        self.num_levels = levels
        self._sets: list[list[int]] = [[] for _ in range(levels)]

    def route(self, t: int, sigma_t: float) -> int:
        level = assign_level(sigma_t, self.sigma_bar, self.num_levels)
        self._sets[level].append(t)
        log.debug("round %s (sigma=%s) routed to level %s", t, sigma_t, level)
        return level

    def members(self, level: int) -> tuple[int, ...]:
        return tuple(self._sets[level])

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(rounds) for rounds in self._sets)

    def rounds(self) -> list[int]:
        return sorted(t for rounds in self._sets for t in rounds)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    action_index: int
    optimal_value: float
    chosen_value: float
    reward: float
    sigma: float
    level: int
    regret_inst: float
    regret_cum: float
    j_cum: float
    coverage_ok: bool | None = None
    all_covered: bool | None = None
    scores: tuple[float, ...] = ()


@dataclass
class RunTrace:
    seed: int = 0
    reward_bound: float = math.inf
    reward_scale: float = 1.0
    gap: float = math.inf
    rounds: list[RoundRecord] = field(default_factory=list)
    empty_level_skips: int = 0

    @property
    def regret_cum(self) -> float:
        return self.rounds[-1].regret_cum if self.rounds else 0.0

    @property
    def j_cum(self) -> float:
        return self.rounds[-1].j_cum if self.rounds else 0.0

    @property
    def coverage_violations(self) -> int:
        return sum(1 for record in self.rounds if record.coverage_ok is False)

    def regret_curve(self) -> np.ndarray:
        return np.array([record.regret_cum for record in self.rounds], dtype=float)

    def level_counts(self, levels: int) -> list[int]:
        counts = [0] * levels
        for record in self.rounds:
            counts[record.level] += 1
        return counts


def record_round(
    trace: RunTrace,
    values: Sequence[float] | np.ndarray,
    action_index: int,
    reward: float,
    sigma_t: float,
    level: int,
    *,
    coverage_ok: bool | None = None,
    all_covered: bool | None = None,
    scores: Sequence[float] = (),
) -> RunTrace:
    """Append one round; ``values`` holds f* over the round's decision set."""
    values = np.asarray(values, dtype=float)
    if not 0 <= action_index < values.size:
        raise InvalidArgumentError(
            f"action index {action_index} outside a decision set of size {values.size}"
        )
    optimal_value = float(values.max())
    chosen_value = float(values[action_index])
    regret_inst = optimal_value - chosen_value
    previous = trace.rounds[-1] if trace.rounds else None
    regret_cum = regret_inst + (previous.regret_cum if previous else 0.0)
    j_cum = sigma_t * sigma_t + (previous.j_cum if previous else 0.0)
    trace.rounds.append(
        RoundRecord(
            t=(previous.t + 1) if previous else 1,
            action_index=int(action_index),
            optimal_value=optimal_value,
            chosen_value=chosen_value,
            reward=float(reward),
            sigma=float(sigma_t),
            level=int(level),
            regret_inst=regret_inst,
            regret_cum=regret_cum,
            j_cum=j_cum,
            coverage_ok=coverage_ok,
            all_covered=all_covered,
            scores=tuple(float(score) for score in scores),
        )
    )
    return trace


def minimum_gap(value_rows: Iterable[Sequence[float] | np.ndarray]) -> float:
    """Smallest margin between an optimal and a sub-optimal action; inf when none exists."""
    gap = math.inf
    for row in value_rows:
        values = np.asarray(row, dtype=float)
        if values.size == 0:
            continue
        best = values.max()
        suboptimal = values[values < best]
        if suboptimal.size:
            gap = min(gap, float(best - suboptimal.max()))
    return gap
