from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from hetbandit.confidence.gloc import EllipsoidConfidenceSet, ucb_value_glm
from hetbandit.confidence.links import GlmModel
from hetbandit.core import InvalidArgumentError, require_positive, require_probability
from hetbandit.enums import LinkKind
from hetbandit.framework import Environment, Observation


class OracleSubroutine:
    """Scores every action by its true mean, so OFU plays argmax f*."""

    def __init__(self, env: Environment) -> None:
        self.env = env

    def initial_fit(self, level: int) -> None:
        return None

    def update(self, fit: None, level: int, observation: Observation) -> None:
        return None

    def confidence_set(self, fit: None, level: int, t: int):
        return self.env.truth

    def optimistic_values(self, conf_set, actions: np.ndarray) -> np.ndarray:
        return np.asarray(self.env.mean_rewards(actions), dtype=float)

    def covers(self, conf_set, truth) -> bool:
        return True


@dataclass(frozen=True)
class WeightedRidgeState:
    shape: np.ndarray
    moment: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return linalg.cho_solve(linalg.cho_factor(self.shape), self.moment)


class WeightedRidgeSubroutine:
    """Single ellipsoid from ridge regression weighted by 1 / max(sigma_bar^2, sigma_s^2).

    Weighted rewards carry unit-variance noise, so the radius is the usual
    self-normalized one with actions of norm at most A / sigma_bar.
    """

    def __init__(
        self,
        model: GlmModel,
        sigma_bar: float,
        delta: float,
        lam: float = 1.0,
        scale: float = 1.0,
    ) -> None:
        if model.kind is not LinkKind.IDENTITY:
            raise InvalidArgumentError("weighted ridge regression needs the identity link")
        self.model = model
        self.sigma_bar = require_positive("sigma_bar", sigma_bar)
        self.delta = require_probability("delta", delta)
        self.lam = require_positive("lambda", lam)
        self.scale = require_positive("beta scale", scale)

    def initial_fit(self, level: int) -> WeightedRidgeState:
        return WeightedRidgeState(self.lam * np.eye(self.model.dim), np.zeros(self.model.dim))

    def update(self, fit: WeightedRidgeState, level: int, observation: Observation) -> WeightedRidgeState:
        action = np.asarray(observation.action, dtype=float)
        weight = 1.0 / max(self.sigma_bar**2, observation.sigma**2)
        return WeightedRidgeState(
            fit.shape + weight * np.outer(action, action),
            fit.moment + weight * observation.reward * action,
        )

    def radius(self, t: int) -> float:
        d = self.model.dim
        spread = 1.0 + t * self.model.action_bound**2 / (d * self.lam * self.sigma_bar**2)
        root = math.sqrt(2.0 * math.log(1.0 / self.delta) + d * math.log(spread))
        return self.scale * (root + math.sqrt(self.lam) * self.model.param_bound) ** 2

    def confidence_set(self, fit: WeightedRidgeState, level: int, t: int) -> EllipsoidConfidenceSet:
        return EllipsoidConfidenceSet(fit.center, fit.shape, self.radius(t))

    def optimistic_values(self, conf_set: EllipsoidConfidenceSet, actions: np.ndarray) -> np.ndarray:
        return np.atleast_1d(ucb_value_glm(conf_set, np.atleast_2d(actions), self.model))

    def covers(self, conf_set: EllipsoidConfidenceSet, truth) -> bool:
        return conf_set.contains(truth)
