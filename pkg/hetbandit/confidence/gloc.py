from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from hetbandit.confidence.ftrl import PredictionTrace, ftrl_regularizer, minimize_ftrl
from hetbandit.confidence.links import GlmModel
from hetbandit.core import InvalidArgumentError, require_positive, require_probability
from hetbandit.framework import Observation


NORM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class EllipsoidConfidenceSet:
    """{theta : (theta - center)' shape (theta - center) <= beta}."""

    center: np.ndarray
    shape: np.ndarray
    beta: float

    def __post_init__(self) -> None:
        if not self.beta >= 0:
            raise InvalidArgumentError(f"ellipsoid radius must be non-negative, got {self.beta!r}")

    def _factor(self):
        return linalg.cho_factor(self.shape)

    def contains(self, theta) -> bool:
        diff = np.asarray(theta, dtype=float) - self.center
        return bool(diff @ self.shape @ diff <= self.beta)

    def inverse_norms(self, actions: np.ndarray) -> np.ndarray:
        """|a|_{shape^-1} for every row of ``actions``."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        solved = linalg.cho_solve(self._factor(), actions.T)
        return np.sqrt(np.maximum(np.einsum("ij,ji->i", actions, solved), 0.0))


@dataclass(frozen=True)
class LevelLearnerState:
    """Data of one level with the FTRL predictions and the ridge statistics built on them."""

    lam: float
    actions: np.ndarray
    rewards: np.ndarray
    rounds: tuple[int, ...]
    predictions: np.ndarray
    iterates: np.ndarray
    prequential: np.ndarray
    shape: np.ndarray
    moment: np.ndarray
    center: np.ndarray

    @classmethod
    def initial(cls, dim: int, lam: float = 1.0) -> "LevelLearnerState":
        require_positive("lambda", lam)
        return cls(
            lam=float(lam),
            actions=np.zeros((0, dim)),
            rewards=np.zeros(0),
            rounds=(),
            predictions=np.zeros(0),
            iterates=np.zeros((0, dim)),
            prequential=np.zeros((0, dim)),
            shape=lam * np.eye(dim),
            moment=np.zeros(dim),
            center=np.zeros(dim),
        )

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    @property
    def size(self) -> int:
        return len(self.rounds)

    @property
    def iterate(self) -> np.ndarray:
        return self.iterates[-1] if self.size else np.zeros(self.dim)

    def recomputed_shape(self) -> np.ndarray:
        return self.lam * np.eye(self.dim) + self.actions.T @ self.actions

    def ridge_residual(self) -> float:
        """|z|^2 - center' X' z, non-negative up to round-off."""
        return float(self.predictions @ self.predictions - self.center @ self.moment)

    def prediction_trace(self) -> PredictionTrace:
        return PredictionTrace(self.actions, self.rewards, self.prequential)


def advance_level(
    state: LevelLearnerState,
    t: int,
    action,
    reward: float,
    model: GlmModel,
    *,
    reg: float | None = None,
    clip_predictions: bool = False,
) -> LevelLearnerState:
    action = np.asarray(action, dtype=float)
    if action.shape != (state.dim,):
        raise InvalidArgumentError(f"action must be a vector of dimension {state.dim}")
    if np.linalg.norm(action) > model.action_bound * (1 + NORM_TOLERANCE):
        raise InvalidArgumentError(f"action norm exceeds A={model.action_bound}")
    reg = ftrl_regularizer(model) if reg is None else reg
    actions = np.vstack([state.actions, action])
    rewards = np.append(state.rewards, reward)
    theta = minimize_ftrl(actions, rewards, model, reg, start=state.iterate)
    z = float(action @ theta)
    if clip_predictions:
        z = float(np.clip(z, -model.domain, model.domain))
    shape = state.shape + np.outer(action, action)
    moment = state.moment + z * action
    center = linalg.cho_solve(linalg.cho_factor(shape), moment)
    return LevelLearnerState(
        lam=state.lam,
        actions=actions,
        rewards=rewards,
        rounds=state.rounds + (t,),
        predictions=np.append(state.predictions, z),
        iterates=np.vstack([state.iterates, theta]),
        prequential=np.vstack([state.prequential, state.iterate]),
        shape=shape,
        moment=moment,
        center=center,
    )


def gloc_update(
    state: LevelLearnerState,
    t: int,
    action,
    reward: float,
    model: GlmModel,
    beta: float,
    *,
    reg: float | None = None,
    clip_predictions: bool = False,
) -> tuple[LevelLearnerState, EllipsoidConfidenceSet]:
    new_state = advance_level(
        state, t, action, reward, model, reg=reg, clip_predictions=clip_predictions
    )
    return new_state, EllipsoidConfidenceSet(new_state.center, new_state.shape, beta)


@dataclass(frozen=True)
class GlmBetaSchedule:
    model: GlmModel
    noise_bound: float
    sigma_bar: float
    num_levels: int
    delta: float
    lam: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        require_probability("delta", self.delta)
        if self.delta >= 0.25:
            raise InvalidArgumentError(f"GLM threshold needs delta < 1/4, got {self.delta}")
        require_positive("R", self.noise_bound)
        require_positive("sigma_bar", self.sigma_bar)
        require_positive("lambda", self.lam)
        require_positive("beta scale", self.scale)
        if self.num_levels < 1:
            raise InvalidArgumentError(f"number of levels must be at least 1, got {self.num_levels}")

    def threshold(self, t: int, level: int) -> float:
        return self.scale * beta_glm(t, level, self)


def beta_glm(t: int, level: int, params: GlmBetaSchedule) -> float:
    """Radius of the level's ellipsoid in the squared shape norm."""
    if t < 1:
        raise InvalidArgumentError(f"round must be at least 1, got {t}")
    if not 0 <= level < params.num_levels:
        raise InvalidArgumentError(f"level {level} outside [0, {params.num_levels})")
    model = params.model
    A, B, K, kappa, d = model.action_bound, model.param_bound, model.lipschitz, model.kappa, model.dim
    width = 2.0 ** (2 * (level + 1)) * params.sigma_bar**2
    return (
        1.0
        + 32.0 * A**2 * K**2 * B**2 / kappa**2
        + (26.0 / kappa**2) * params.noise_bound**2 * math.log(4.0 * t * t * params.num_levels / params.delta) ** 2
        + 12.0 * (width / kappa**2) * d * math.log(1.0 + t * A * kappa**2 / (4.0 * d * K**2))
        + params.lam * B**2
    )


def ucb_value_glm(conf_set: EllipsoidConfidenceSet, actions, model: GlmModel):
    """h of the ellipsoid's largest a'theta, clipped to the link's certified domain."""
    actions = np.asarray(actions, dtype=float)
    rows = np.atleast_2d(actions)
    peak = rows @ conf_set.center + math.sqrt(conf_set.beta) * conf_set.inverse_norms(rows)
    values = model.link(np.clip(peak, -model.domain, model.domain))
    return float(values[0]) if actions.ndim == 1 else values


class GlocSubroutine:
    """One FTRL learner per level, converted into ridge ellipsoids over theta."""

    def __init__(
        self, model: GlmModel, schedule: GlmBetaSchedule, *, clip_predictions: bool = False
    ) -> None:
        if schedule.model != model:
            raise InvalidArgumentError("threshold schedule was built for a different link model")
        self.model = model
        self.schedule = schedule
        self.clip_predictions = clip_predictions
        self.reg = ftrl_regularizer(model)

    def initial_fit(self, level: int) -> LevelLearnerState:
        return LevelLearnerState.initial(self.model.dim, self.schedule.lam)

    def update(self, fit: LevelLearnerState, level: int, observation: Observation) -> LevelLearnerState:
        return advance_level(
            fit,
            observation.t,
            observation.action,
            observation.reward,
            self.model,
            reg=self.reg,
            clip_predictions=self.clip_predictions,
        )

    def confidence_set(self, fit: LevelLearnerState, level: int, t: int) -> EllipsoidConfidenceSet:
        return EllipsoidConfidenceSet(fit.center, fit.shape, self.schedule.threshold(t, level))

    def optimistic_values(self, conf_set: EllipsoidConfidenceSet, actions: np.ndarray) -> np.ndarray:
        return np.atleast_1d(ucb_value_glm(conf_set, np.atleast_2d(actions), self.model))

    def covers(self, conf_set: EllipsoidConfidenceSet, truth) -> bool:
        return conf_set.contains(truth)
