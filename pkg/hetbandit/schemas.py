from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    TypeAdapter,
    ValidationError,
    field_validator,
    model_validator,
)

from hetbandit.enums import Algorithm, ClassGenerator, LinkKind, NoiseKind, ScheduleKind


class ExperimentConfigError(RuntimeError):
    """An experiment or input document failed validation."""


class StrictDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class FiniteClassDocument(StrictDocument):
    actions: list[Union[int, str]] = Field(min_length=1)
    functions: list[list[float]] = Field(min_length=1)
    bound: float = Field(ge=0)

    @model_validator(mode="after")
    def rows_match_actions(self) -> "FiniteClassDocument":
        width = len(self.actions)
        for index, row in enumerate(self.functions):
            if len(row) != width:
                raise ValueError(f"function {index} has {len(row)} values for {width} actions")
        return self


class ScheduleEntry(StrictDocument):
    t: int = Field(ge=1)
    sigma: float = Field(ge=0)


SCHEDULE_FILE = TypeAdapter(list[ScheduleEntry])


class NoiseScheduleSpec(StrictDocument):
    kind: ScheduleKind = ScheduleKind.CONSTANT
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN
    noise_bound: float = Field(alias="R", gt=0)
    sigma: float | None = Field(default=None, ge=0)
    burst_fraction: float = Field(default=0.01, ge=0, le=1)
    burst_sigma: float | None = Field(default=None, ge=0)
    base_sigma: float | None = Field(default=None, ge=0)
    decay_rate: float = Field(default=0.5, ge=0)
    path: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def file_schedule_needs_path(self) -> "NoiseScheduleSpec":
        if self.kind is ScheduleKind.FILE and not self.path:
            raise ValueError("a file schedule needs 'path'")
        return self


class FiniteEnvironmentSpec(StrictDocument):
    kind: Literal["finite"] = "finite"
    class_path: str | None = None
    generator: ClassGenerator | None = None
    num_functions: int = Field(default=20, ge=1)
    num_actions: int = Field(default=10, ge=1)
    bound: float = Field(default=1.0, ge=0)
    gap: float = Field(default=0.1, gt=0)
    truth_index: int | None = Field(default=None, ge=0)
    decision_set_size: int = Field(default=20, ge=1)
    class_seed: int = 0

    @model_validator(mode="after")
    def one_class_source(self) -> "FiniteEnvironmentSpec":
        if (self.class_path is None) == (self.generator is None):
            raise ValueError("set exactly one of 'class_path' and 'generator'")
        if self.generator is ClassGenerator.GAPPED and self.gap > 2 * self.bound:
            raise ValueError("'gap' cannot exceed 2 * bound")
        return self


ACTIONS_FILE = TypeAdapter(Annotated[list[list[float]], Field(min_length=1)])


def check_action_rows(actions: list[list[float]], d: int, action_bound: float) -> None:
    for index, action in enumerate(actions):
        if len(action) != d:
            raise ValueError(f"action {index} has {len(action)} entries for d={d}")
        if math.hypot(*action) > action_bound * (1 + 1e-12):
            raise ValueError(f"action {index} norm exceeds A")


class GlmEnvironmentSpec(StrictDocument):
    kind: Literal["glm"] = "glm"
    d: int = Field(ge=1)
    theta_star: list[float]
    link: LinkKind = LinkKind.IDENTITY
    action_bound: float = Field(alias="A", gt=0)
    param_bound: float = Field(alias="B", gt=0)
    link_scale: float = Field(default=1.0, gt=0)
    actions: list[list[float]] | None = None
    actions_path: str | None = None
    decision_set_size: int = Field(default=20, ge=1)

    @model_validator(mode="after")
    def shapes_and_norms(self) -> "GlmEnvironmentSpec":
        if len(self.theta_star) != self.d:
            raise ValueError(f"theta_star has {len(self.theta_star)} entries for d={self.d}")
        if math.hypot(*self.theta_star) > self.param_bound * (1 + 1e-12):
            raise ValueError("theta_star norm exceeds B")
        if self.actions is not None and self.actions_path is not None:
            raise ValueError("set at most one of 'actions' and 'actions_path'")
        check_action_rows(self.actions or [], self.d, self.action_bound)
        return self


EnvironmentSpec = Annotated[
    Union[FiniteEnvironmentSpec, GlmEnvironmentSpec],
    Field(discriminator="kind"),
]


class ExperimentConfig(StrictDocument):
    environment: EnvironmentSpec
    noise: NoiseScheduleSpec
    algorithm: Algorithm
    horizon: int = Field(alias="T", ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    delta: float = Field(default=0.1, gt=0, lt=1)
    alpha: float | None = Field(default=None, ge=0)
    sigma_bar: float | Literal["auto"] = "auto"
    lam: float = Field(default=1.0, alias="lambda", gt=0)
    beta_scale: float = Field(default=1.0, gt=0)
    clip_predictions: bool = False
    output_dir: str | None = None

    @field_validator("seeds")
    @classmethod
    def seeds_must_be_distinct(cls, value: list[int]) -> list[int]:
        if len(set(value)) != len(value):
            raise ValueError("seeds must be distinct")
        return value

    @field_validator("sigma_bar")
    @classmethod
    def sigma_bar_must_be_positive(cls, value: float | str) -> float | str:
        if not isinstance(value, str) and not value > 0:
            raise ValueError("sigma_bar must be positive or 'auto'")
        return value

    @model_validator(mode="after")
    def algorithm_fits_environment(self) -> "ExperimentConfig":
        env = self.environment
        if self.algorithm.needs_glm and not isinstance(env, GlmEnvironmentSpec):
            raise ValueError(f"{self.algorithm} requires a GLM environment")
        if self.algorithm.needs_finite_class and not isinstance(env, FiniteEnvironmentSpec):
            raise ValueError(f"{self.algorithm} requires a finite-class environment")
        if self.algorithm is Algorithm.BASELINE_WEIGHTED_RIDGE and env.link is not LinkKind.IDENTITY:
            raise ValueError("baseline-weighted-ridge requires the identity link")
        if self.algorithm is Algorithm.ML2_GLOC and self.delta >= 0.25:
            raise ValueError("ml2-gloc requires delta < 0.25")
        return self

    def effective_alpha(self) -> float:
        return self.alpha if self.alpha is not None else self.horizon ** -2.0


def _describe(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
        for error in exc.errors()
    )


def parse_experiment_config(payload: str | dict[str, Any]) -> ExperimentConfig:
    try:
        if isinstance(payload, str):
            return ExperimentConfig.model_validate_json(payload)
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        raise ExperimentConfigError(f"invalid experiment config: {_describe(exc)}") from exc


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ExperimentConfigError(f"cannot read experiment config {path}: {exc}") from exc
    return parse_experiment_config(text)


def load_schedule_entries(path: str | Path) -> list[ScheduleEntry]:
    try:
        return SCHEDULE_FILE.validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ExperimentConfigError(f"invalid noise schedule {path}: {_describe(exc)}") from exc
    except OSError as exc:
        raise ExperimentConfigError(f"cannot read noise schedule {path}: {exc}") from exc


class CellCoverage(BaseModel):
    t: int
    level: int
    trials: int
    violations: int
    rate: float
    ci_low: float
    ci_high: float


class CoverageSummary(BaseModel):
    runs: int
    runs_with_violation: int
    any_violation_rate: float
    any_violation_ci: tuple[float, float]
    final_round_violations: int
    final_round_rate: float
    final_round_ci: tuple[float, float]
    cells: list[CellCoverage] = Field(default_factory=list)


class TheoryBounds(BaseModel):
    regret_bound: float | None = None
    gap_regret_bound: float | None = None
    online_regression_bound: float | None = None


class AggregateReport(BaseModel):
    config_echo: dict[str, Any]
    seeds: list[int]
    per_seed_final_regret: dict[str, float]
    per_seed_J: dict[str, float]
    mean_curve: list[float]
    median_curve: list[float]
    q25_curve: list[float]
    q75_curve: list[float]
    coverage: CoverageSummary | None = None
    level_occupancy: list[int]
    failures: int = 0
    failed_seeds: list[int] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
    theory: TheoryBounds = Field(default_factory=TheoryBounds)
