from __future__ import annotations

import numpy as np

from hetbandit.core import InvalidArgumentError, NoiseSpec
from hetbandit.enums import ScheduleKind
from hetbandit.schemas import ExperimentConfigError, NoiseScheduleSpec, load_schedule_entries


BASE_FRACTION = 0.01


def constant_schedule(sigma: float, horizon: int) -> list[float]:
    return [sigma] * horizon


def bursty_schedule(
    horizon: int, fraction: float, high: float, low: float, rng: np.random.Generator
) -> list[float]:
    """``high`` on round(fraction * T) rounds drawn without replacement, ``low`` elsewhere."""
    sigmas = np.full(horizon, low)
    bursts = int(round(fraction * horizon))
    if bursts:
        sigmas[rng.choice(horizon, size=bursts, replace=False)] = high
    return sigmas.tolist()


def decaying_schedule(horizon: int, base: float, rate: float) -> list[float]:
    t = np.arange(1, horizon + 1, dtype=float)
    return (base * t**-rate).tolist()


def file_schedule(path: str, horizon: int) -> list[float]:
    entries = {entry.t: entry.sigma for entry in load_schedule_entries(path)}
    missing = [t for t in range(1, horizon + 1) if t not in entries]
    if missing:
        raise ExperimentConfigError(
            f"noise.path: schedule {path} has no sigma for rounds {missing[:5]}"
            + (" ..." if len(missing) > 5 else "")
        )
    return [entries[t] for t in range(1, horizon + 1)]


def build_schedule(spec: NoiseScheduleSpec, horizon: int) -> NoiseSpec:
    R = spec.noise_bound
    if spec.kind is ScheduleKind.CONSTANT:
        sigmas = constant_schedule(R if spec.sigma is None else spec.sigma, horizon)
    elif spec.kind is ScheduleKind.BURSTY:
        sigmas = bursty_schedule(
            horizon,
            spec.burst_fraction,
            R if spec.burst_sigma is None else spec.burst_sigma,
            BASE_FRACTION * R if spec.base_sigma is None else spec.base_sigma,
            np.random.default_rng(spec.seed),
        )
    elif spec.kind is ScheduleKind.DECAYING:
        sigmas = decaying_schedule(horizon, R if spec.base_sigma is None else spec.base_sigma, spec.decay_rate)
    else:
        sigmas = file_schedule(spec.path, horizon)
    try:
        return NoiseSpec(noise_bound=R, schedule=tuple(sigmas), kind=spec.noise_kind)
    except InvalidArgumentError as exc:
        raise ExperimentConfigError(f"noise: {exc}") from exc
