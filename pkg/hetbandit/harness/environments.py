from __future__ import annotations

from pathlib import Path

import numpy as np
from pydantic import ValidationError

from hetbandit.confidence.erm import FiniteFunctionClass
from hetbandit.confidence.links import GlmModel
from hetbandit.core import InvalidArgumentError, NoiseSpec
from hetbandit.enums import ClassGenerator
from hetbandit.schemas import (
    ACTIONS_FILE,
    ExperimentConfigError,
    FiniteEnvironmentSpec,
    GlmEnvironmentSpec,
    check_action_rows,
)


def random_class(num_functions: int, num_actions: int, bound: float, rng: np.random.Generator) -> FiniteFunctionClass:
    table = rng.uniform(-bound, bound, size=(num_functions, num_actions))
    return FiniteFunctionClass(tuple(range(num_actions)), table, bound)


def gapped_class(num_functions: int, num_actions: int, bound: float, gap: float) -> FiniteFunctionClass:
    """Function i peaks at action i mod |A| with value C and sits at C - gap elsewhere."""
    table = np.full((num_functions, num_actions), bound - gap)
    table[np.arange(num_functions), np.arange(num_functions) % num_actions] = bound
    return FiniteFunctionClass(tuple(range(num_actions)), table, bound)


def load_function_class(spec: FiniteEnvironmentSpec) -> FiniteFunctionClass:
    if spec.class_path is not None:
        try:
            return FiniteFunctionClass.load(spec.class_path)
        except OSError as exc:
            raise ExperimentConfigError(f"environment.class_path: cannot read {spec.class_path}: {exc}") from exc
        except (ValidationError, InvalidArgumentError) as exc:
            raise ExperimentConfigError(f"environment.class_path: {exc}") from exc
    if spec.generator is ClassGenerator.GAPPED:
        return gapped_class(spec.num_functions, spec.num_actions, spec.bound, spec.gap)
    return random_class(spec.num_functions, spec.num_actions, spec.bound, np.random.default_rng(spec.class_seed))


def load_action_rows(spec: GlmEnvironmentSpec) -> np.ndarray | None:
    if spec.actions_path is None:
        return None if spec.actions is None else np.array(spec.actions, dtype=float)
    try:
        rows = ACTIONS_FILE.validate_json(Path(spec.actions_path).read_text(encoding="utf-8"))
        check_action_rows(rows, spec.d, spec.action_bound)
    except OSError as exc:
        raise ExperimentConfigError(f"environment.actions_path: cannot read {spec.actions_path}: {exc}") from exc
    except ValidationError as exc:
        messages = "; ".join(error["msg"] for error in exc.errors())
        raise ExperimentConfigError(f"environment.actions_path: {messages}") from exc
    except ValueError as exc:
        raise ExperimentConfigError(f"environment.actions_path: {exc}") from exc
    return np.array(rows, dtype=float)


class FiniteClassEnvironment:
    """Rewards f*(a) + noise with f* a row of a finite class; decision sets are action indices."""

    def __init__(
        self,
        fclass: FiniteFunctionClass,
        truth: int,
        noise: NoiseSpec,
        decision_set_size: int,
        rng: np.random.Generator,
    ) -> None:
        if not 0 <= truth < fclass.size:
            raise InvalidArgumentError(f"truth index {truth} outside a class of size {fclass.size}")
        if decision_set_size < 1:
            raise InvalidArgumentError("decision sets need at least one action")
        self.fclass = fclass
        self.truth = int(truth)
        self.noise = noise
        self.reward_bound = fclass.bound
        universe = fclass.num_actions
        if decision_set_size >= universe:
            self._sets = np.tile(np.arange(universe), (noise.horizon, 1))
        else:
            self._sets = np.array(
                [np.sort(rng.choice(universe, size=decision_set_size, replace=False)) for _ in range(noise.horizon)],
                dtype=int,
            ).reshape(noise.horizon, decision_set_size)

    @property
    def horizon(self) -> int:
        return self.noise.horizon

    def decision_set(self, t: int) -> np.ndarray:
        return self._sets[t - 1]

    def mean_rewards(self, actions: np.ndarray) -> np.ndarray:
        return self.fclass.table[self.truth, np.asarray(actions, dtype=int)]


class GlmEnvironment:
    """Rewards h(a' theta*) + noise; decision sets are rows of action vectors."""

    def __init__(
        self,
        model: GlmModel,
        theta_star: np.ndarray,
        noise: NoiseSpec,
        decision_set_size: int,
        rng: np.random.Generator,
        actions: np.ndarray | None = None,
    ) -> None:
        theta_star = np.asarray(theta_star, dtype=float)
        if theta_star.shape != (model.dim,):
            raise InvalidArgumentError(f"theta_star must have dimension {model.dim}")
        if np.linalg.norm(theta_star) > model.param_bound * (1 + 1e-12):
            raise InvalidArgumentError(f"theta_star norm exceeds B={model.param_bound}")
        self.model = model
        self.truth = theta_star
        self.noise = noise
        edge = model.domain
        self.reward_bound = float(max(abs(model.link(edge)), abs(model.link(-edge))))
        if actions is not None:
            fixed = np.asarray(actions, dtype=float).reshape(-1, model.dim)
            self._sets = np.broadcast_to(fixed, (noise.horizon,) + fixed.shape)
        else:
            draws = rng.standard_normal((noise.horizon, decision_set_size, model.dim))
            norms = np.linalg.norm(draws, axis=-1, keepdims=True)
            self._sets = model.action_bound * draws / np.where(norms > 0, norms, 1.0)

    @property
    def horizon(self) -> int:
        return self.noise.horizon

    def decision_set(self, t: int) -> np.ndarray:
        return self._sets[t - 1]

    def mean_rewards(self, actions: np.ndarray) -> np.ndarray:
        return np.atleast_1d(self.model.link(np.atleast_2d(actions) @ self.truth))


def build_environment(
    spec: FiniteEnvironmentSpec | GlmEnvironmentSpec,
    noise: NoiseSpec,
    rng: np.random.Generator,
    fclass: FiniteFunctionClass | None = None,
) -> FiniteClassEnvironment | GlmEnvironment:
    """Deterministic in ``rng``: the decision-set stream and a drawn f* depend on nothing else."""
    try:
        if isinstance(spec, FiniteEnvironmentSpec):
            fclass = load_function_class(spec) if fclass is None else fclass
            if spec.truth_index is None:
                truth = int(rng.integers(fclass.size))
            elif spec.truth_index >= fclass.size:
                raise ExperimentConfigError(
                    f"environment.truth_index: {spec.truth_index} outside a class of size {fclass.size}"
                )
            else:
                truth = spec.truth_index
            return FiniteClassEnvironment(fclass, truth, noise, spec.decision_set_size, rng)
        model = GlmModel.from_spec(spec)
        return GlmEnvironment(
            model,
            np.array(spec.theta_star, dtype=float),
            noise,
            spec.decision_set_size,
            rng,
            actions=load_action_rows(spec),
        )
    except InvalidArgumentError as exc:
        raise ExperimentConfigError(f"environment: {exc}") from exc
