from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:
    from enum import Enum

    class StrEnum(str, Enum):
        """Backport of enum.StrEnum (Python 3.11+) for older interpreters."""

        __str__ = str.__str__
        __format__ = str.__format__


class NoiseKind(StrEnum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class ScheduleKind(StrEnum):
    CONSTANT = "constant"
    BURSTY = "bursty"
    DECAYING = "decaying"
    FILE = "file"


class BetaKind(StrEnum):
    SUBGAUSSIAN = "subgaussian"
    VARIANCE_AWARE = "variance_aware"
    VARIANCE_AWARE_UNION = "variance_aware_union"


class LinkKind(StrEnum):
    IDENTITY = "identity"
    LOGISTIC = "logistic"
    SCALED = "scaled"


class EnvironmentKind(StrEnum):
    FINITE = "finite"
    GLM = "glm"


class ClassGenerator(StrEnum):
    RANDOM = "random"
    GAPPED = "gapped"


class Algorithm(StrEnum):
    ML2_ERM_SUBGAUSSIAN = "ml2-erm-subgaussian"
    ML2_ERM_VARIANCE_AWARE = "ml2-erm-variance-aware"
    ML2_ERM_VARIANCE_AWARE_FIXED = "ml2-erm-variance-aware-fixed"
    ML2_GLOC = "ml2-gloc"
    BASELINE_ELUDER_UCB = "baseline-eluder-ucb"
    BASELINE_WEIGHTED_RIDGE = "baseline-weighted-ridge"
    ORACLE = "oracle"

    @property
    def needs_glm(self) -> bool:
        return self in (Algorithm.ML2_GLOC, Algorithm.BASELINE_WEIGHTED_RIDGE)

    @property
    def needs_finite_class(self) -> bool:
        return self in (
            Algorithm.ML2_ERM_SUBGAUSSIAN,
            Algorithm.ML2_ERM_VARIANCE_AWARE,
            Algorithm.ML2_ERM_VARIANCE_AWARE_FIXED,
            Algorithm.BASELINE_ELUDER_UCB,
        )


class EluderMode(StrEnum):
    EXACT = "exact"
    GREEDY = "greedy"
