from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from hetbandit.core import InvalidArgumentError, require_positive
from hetbandit.enums import LinkKind


GRID_POINTS = 10_000
GRID_TOLERANCE = 1e-9

Curve = Callable[[np.ndarray], np.ndarray]


def _identity(z: np.ndarray) -> np.ndarray:
    return z


def _unit(z: np.ndarray) -> np.ndarray:
    return np.ones_like(z)


def _half_square(z: np.ndarray) -> np.ndarray:
    return 0.5 * z * z


def _logistic_slope(z: np.ndarray) -> np.ndarray:
    p = special.expit(z)
    return p * (1.0 - p)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _curves(kind: LinkKind, scale: float) -> tuple[Curve, Curve, Curve]:
    """(h, h', m) on the certified domain, before linear extension."""
    if kind is LinkKind.IDENTITY:
        return _identity, _unit, _half_square
    if kind is LinkKind.LOGISTIC:
        return special.expit, _logistic_slope, _softplus
    return (
        lambda z: scale * z,
        lambda z: np.full_like(z, scale),
        lambda z: 0.5 * scale * z * z,
    )


@dataclass(frozen=True)
class GlmModel:
    """Link h with slope bounds [kappa, K] on (-AB, AB), extended linearly outside."""

    kind: LinkKind
    action_bound: float
    param_bound: float
    dim: int
    scale: float = 1.0
    lipschitz: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LinkKind(self.kind))
        require_positive("A", self.action_bound)
        require_positive("B", self.param_bound)
        require_positive("link scale", self.scale)
        if self.dim < 1:
            raise InvalidArgumentError(f"dimension must be at least 1, got {self.dim}")
        if self.kind is LinkKind.IDENTITY:
            lipschitz, kappa = 1.0, 1.0
        elif self.kind is LinkKind.LOGISTIC:
            lipschitz = 0.25
            kappa = float(_logistic_slope(np.array(self.domain)))
        else:
            lipschitz, kappa = self.scale, self.scale
        object.__setattr__(self, "lipschitz", lipschitz)
        object.__setattr__(self, "kappa", kappa)
        self._check_grid()

    @classmethod
    def from_spec(cls, spec) -> "GlmModel":
        return cls(
            kind=spec.link,
            action_bound=spec.action_bound,
            param_bound=spec.param_bound,
            dim=spec.d,
            scale=spec.link_scale,
        )

    @property
    def domain(self) -> float:
        return self.action_bound * self.param_bound

    def _check_grid(self) -> None:
        h, dh, _ = _curves(self.kind, self.scale)
        grid = np.linspace(-self.domain, self.domain, GRID_POINTS)
        slopes = dh(grid)
        if not math.isfinite(self.kappa) or self.kappa <= 0:
            raise InvalidArgumentError(f"link derivative floor must be positive, got {self.kappa}")
        if slopes.min() < self.kappa * (1 - GRID_TOLERANCE):
            raise InvalidArgumentError(f"link derivative drops below kappa={self.kappa} on the domain")
        if slopes.max() > self.lipschitz * (1 + GRID_TOLERANCE):
            raise InvalidArgumentError(f"link derivative exceeds K={self.lipschitz} on the domain")
        if np.any(np.diff(h(grid)) < 0):
            raise InvalidArgumentError("link is not monotone on the domain")

    def _split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        edge = self.domain
        return np.clip(z, -edge, edge), z - np.clip(z, -edge, edge)

    def link(self, z):
        h, dh, _ = _curves(self.kind, self.scale)
        z = np.asarray(z, dtype=float)
        inner, excess = self._split(z)
        return h(inner) + dh(inner) * excess

    def slope(self, z):
        _, dh, _ = _curves(self.kind, self.scale)
        inner, _ = self._split(np.asarray(z, dtype=float))
        return dh(inner)

    def antiderivative(self, z):
        h, dh, m = _curves(self.kind, self.scale)
        z = np.asarray(z, dtype=float)
        inner, excess = self._split(z)
        return m(inner) + h(inner) * excess + 0.5 * dh(inner) * excess * excess


def glm_loss(z, r, model: GlmModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, first and second z-derivative of -rz + m(z)."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    return -r * z + model.antiderivative(z), model.link(z) - r, model.slope(z)
