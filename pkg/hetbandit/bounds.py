"""Closed-form regret bounds and the automatic sigma_bar rules built on them."""

from __future__ import annotations

import logging
import math

from hetbandit.confidence.links import GlmModel
from hetbandit.core import InvalidArgumentError, num_levels, require_positive, require_probability


log = logging.getLogger(__name__)

MAX_FIXED_POINT_STEPS = 64


def _check_common(horizon: int, delta: float) -> None:
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be at least 1, got {horizon}")
    require_probability("delta", delta)


def subgaussian_regret_bound(
    *,
    horizon: int,
    levels: int,
    dim_e: float,
    total_variance: float,
    sigma_bar: float,
    covering_number: int,
    delta: float,
    alpha: float,
    reward_bound: float,
    noise_bound: float,
) -> float:
    """Gap-independent bound for conditionally sub-Gaussian noise."""
    _check_common(horizon, delta)
    T, L = horizon, levels
    log_cover = math.log(2.0 * covering_number * L / delta)
    return (
        L
        + 2.0 * reward_bound * dim_e * L
        + 8.0 * math.sqrt(2.0 * L * dim_e * (total_variance + sigma_bar**2 * T) * log_cover)
        + 4.0
        * math.sqrt(L * dim_e * alpha)
        * math.sqrt(reward_bound + 2.0 * noise_bound * math.sqrt(math.log(4.0 * T * (T + 1) * L / delta)))
        * T
    )


def gap_regret_bound(
    *,
    horizon: int,
    levels: int,
    dim_e: float,
    gap: float,
    sigma_max: float,
    covering_number: int,
    delta: float,
    alpha: float,
    reward_bound: float,
) -> float:
    """Gap-dependent bound for conditionally sub-Gaussian noise; inf when the gap is zero."""
    _check_common(horizon, delta)
    if not gap > 0 or math.isinf(gap):
        return math.inf
    T, L = horizon, levels
    spread = dim_e * (math.log(T) + 1.0)
    return (
        (L / gap) * (4.0 * dim_e * reward_bound**2 + 1.0 / T)
        + 16.0 * (L * T * alpha * reward_bound / gap) * spread
        + 128.0 * (L / gap) * sigma_max**2 * math.log(2.0 * covering_number * L / delta) * spread
        + 32.0 * (L / gap) * T * alpha * sigma_max * math.sqrt(math.log(8.0 * T * T * L / delta)) * spread
    )


def variance_aware_regret_bound(
    *,
    horizon: int,
    levels: int,
    dim_e: float,
    total_variance: float,
    sigma_bar: float,
    covering_number: int,
    delta: float,
    alpha: float,
    noise_bound: float,
) -> float:
    """Gap-independent bound for noise known only through its variance, rewards in [-1, 1]."""
    _check_common(horizon, delta)
    T, L = horizon, levels
    r_bar = noise_bound * math.sqrt(2.0 * math.log(4.0 * T * T * L / delta))
    spread = L * dim_e * (math.log(T) + 1.0)
    log_cover = math.log(2.0 * covering_number * T * T * L / delta)
    return (
        math.sqrt(L) * (2.0 * math.sqrt(dim_e * T) + 1.0)
        + 4.0 * math.sqrt(spread * alpha) * math.sqrt(3.0 + r_bar) * T
        + 2.0 * math.sqrt((8.0 / 3.0) * spread * r_bar * log_cover * T)
        + 16.0 * math.sqrt(spread * log_cover) * math.sqrt(total_variance + T * sigma_bar**2)
    )


def ftrl_regret_bound(
    horizon: int, model: GlmModel, noise_bound: float, sigma_max: float, delta: float
) -> float:
    """High-probability bound on the FTRL online-regression regret after ``horizon`` rounds."""
    _check_common(horizon, delta)
    A, B, K, kappa, d = model.action_bound, model.param_bound, model.lipschitz, model.kappa, model.dim
    log_term = math.log(4.0 * horizon * horizon / delta)
    return (
        8.0 * A**2 * K**2 * B**2 / kappa
        + (9.0 / (2.0 * kappa)) * noise_bound**2 * log_term**2
        + 3.0 * (sigma_max**2 / kappa) * d * math.log(1.0 + horizon * A * kappa**2 / (4.0 * d * K**2))
    )


def auto_sigma_bar_subgaussian(
    *,
    horizon: int,
    noise_bound: float,
    dim_e: float,
    covering_number: int,
    delta: float,
) -> tuple[float, int]:
    """sigma_bar = 1 / (dim_e log(2 N L / delta) sqrt(T)), solved jointly with L.

    L only grows as sigma_bar shrinks, so the iteration is monotone.
    """
    _check_common(horizon, delta)
    require_positive("R", noise_bound)
    dim_e = max(1.0, dim_e)
    levels = 1
    for _ in range(MAX_FIXED_POINT_STEPS):
        sigma_bar = 1.0 / (dim_e * math.log(2.0 * covering_number * levels / delta) * math.sqrt(horizon))
        updated = num_levels(noise_bound, sigma_bar)
        if updated == levels:
            log.debug("auto sigma_bar=%s with %s levels", sigma_bar, levels)
            return sigma_bar, levels
        levels = updated
    raise InvalidArgumentError("automatic sigma_bar did not settle; pass sigma_bar explicitly")


def auto_sigma_bar_glm(noise_bound: float, dim: int) -> float:
    require_positive("R", noise_bound)
    return noise_bound / math.sqrt(dim)
