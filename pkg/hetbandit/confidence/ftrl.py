from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from hetbandit.confidence.links import GlmModel, glm_loss
from hetbandit.core import InvalidArgumentError, require_positive, require_probability


log = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-10
MAX_NEWTON_STEPS = 200
ARMIJO = 1e-4
MIN_STEP = 1e-12
# Newton decrements below this fraction of the objective are lost in its round-off.
DECREMENT_FLOOR = 1e-12


class NonConvergenceError(RuntimeError):
    """Newton iterations ran out before the gradient norm reached tolerance."""

    def __init__(self, grad_norm: float, iterations: int) -> None:
        super().__init__(
            f"FTRL solver stopped after {iterations} Newton steps with gradient norm {grad_norm:.3e}"
        )
        self.grad_norm = grad_norm
        self.iterations = iterations


def ftrl_regularizer(model: GlmModel) -> float:
    return 2.0 * model.action_bound**2 * model.lipschitz**2 / model.kappa


def stack_data(
    level_data: Sequence[tuple[Sequence[float], float]], dim: int
) -> tuple[np.ndarray, np.ndarray]:
    if not level_data:
        return np.zeros((0, dim)), np.zeros(0)
    actions = np.array([np.asarray(action, dtype=float) for action, _ in level_data])
    rewards = np.array([reward for _, reward in level_data], dtype=float)
    if actions.ndim != 2 or actions.shape[1] != dim:
        raise InvalidArgumentError(f"actions must be vectors of dimension {dim}")
    return actions, rewards


def ftrl_objective(
    theta: np.ndarray, actions: np.ndarray, rewards: np.ndarray, model: GlmModel, reg: float
) -> tuple[float, np.ndarray, np.ndarray]:
    value, first, second = glm_loss(actions @ theta, rewards, model)
    objective = reg * float(theta @ theta) + float(value.sum())
    gradient = 2.0 * reg * theta + actions.T @ first
    hessian = 2.0 * reg * np.eye(theta.size) + (actions.T * second) @ actions
    return objective, gradient, hessian


def minimize_ftrl(
    actions: np.ndarray,
    rewards: np.ndarray,
    model: GlmModel,
    reg: float,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Damped Newton on the strongly convex FTRL objective, stopped at gradient norm GRAD_TOLERANCE."""
    theta = np.zeros(model.dim) if start is None else np.array(start, dtype=float)
    value, gradient, hessian = ftrl_objective(theta, actions, rewards, model, reg)
    for step in range(MAX_NEWTON_STEPS + 1):
        grad_norm = float(np.linalg.norm(gradient))
        if grad_norm <= GRAD_TOLERANCE:
            log.debug("FTRL converged after %s Newton steps", step)
            return theta
        if step == MAX_NEWTON_STEPS:
            break
        direction = linalg.cho_solve(linalg.cho_factor(hessian), gradient)
        decrement = float(gradient @ direction)
        size = 1.0
        if decrement > DECREMENT_FLOOR * max(1.0, abs(value)):
            while size > MIN_STEP:
                candidate = theta - size * direction
                if ftrl_objective(candidate, actions, rewards, model, reg)[0] <= value - ARMIJO * size * decrement:
                    break
                size *= 0.5
            else:
                size = 1.0
        theta = theta - size * direction
        value, gradient, hessian = ftrl_objective(theta, actions, rewards, model, reg)
    raise NonConvergenceError(grad_norm, MAX_NEWTON_STEPS)


def ftrl_step(
    level_data: Sequence[tuple[Sequence[float], float]],
    model: GlmModel,
    reg: float | None = None,
) -> np.ndarray:
    """Minimiser of reg * |theta|^2 plus the summed GLM loss of ``level_data``."""
    reg = ftrl_regularizer(model) if reg is None else require_positive("regularizer", reg)
    actions, rewards = stack_data(level_data, model.dim)
    return minimize_ftrl(actions, rewards, model, reg)


@dataclass(frozen=True)
class PredictionTrace:
    """Rows of (a_s, r_s) with the iterate that predicted round s."""

    actions: np.ndarray
    rewards: np.ndarray
    iterates: np.ndarray

    def __post_init__(self) -> None:
        n = self.rewards.shape[0]
        if self.actions.shape[0] != n or self.iterates.shape != self.actions.shape:
            raise InvalidArgumentError("trace arrays disagree in length or dimension")

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


def run_ftrl(
    actions: np.ndarray, rewards: np.ndarray, model: GlmModel, reg: float | None = None
) -> PredictionTrace:
    """Prequential FTRL: round s is predicted by the minimiser over rounds before s."""
    reg = ftrl_regularizer(model) if reg is None else reg
    actions = np.asarray(actions, dtype=float).reshape(-1, model.dim)
    rewards = np.asarray(rewards, dtype=float)
    iterates = np.zeros_like(actions)
    theta = np.zeros(model.dim)
    for s in range(len(rewards)):
        iterates[s] = theta
        theta = minimize_ftrl(actions[: s + 1], rewards[: s + 1], model, reg, start=theta)
    return PredictionTrace(actions, rewards, iterates)


def online_regression_regret(
    trace: PredictionTrace, theta_star: np.ndarray, model: GlmModel
) -> np.ndarray:
    """Cumulative loss of the played iterates minus that of theta_star, per round."""
    played = np.einsum("ij,ij->i", trace.actions, trace.iterates)
    truth = trace.actions @ np.asarray(theta_star, dtype=float)
    learner_loss = glm_loss(played, trace.rewards, model)[0]
    truth_loss = glm_loss(truth, trace.rewards, model)[0]
    return np.cumsum(learner_loss - truth_loss)


def prediction_error_check(
    trace: PredictionTrace,
    theta_star: np.ndarray,
    model: GlmModel,
    delta: float,
    noise_bound: float,
) -> bool:
    """Whether the cumulative squared prediction error stays below
    (4/kappa) reg_t + (8 R^2 / kappa^2) log(4 t^2 / delta) at every round."""
    require_probability("delta", delta)
    if len(trace) == 0:
        return True
    theta_star = np.asarray(theta_star, dtype=float)
    errors = np.einsum("ij,ij->i", trace.actions, trace.iterates - theta_star)
    lhs = np.cumsum(errors * errors)
    regret = online_regression_regret(trace, theta_star, model)
    t = np.arange(1, len(trace) + 1, dtype=float)
    kappa = model.kappa
    rhs = (4.0 / kappa) * regret + (8.0 * noise_bound**2 / kappa**2) * np.log(4.0 * t * t / delta)
    return bool(np.all(lhs <= rhs + 1e-9 * np.maximum(1.0, np.abs(rhs))))
