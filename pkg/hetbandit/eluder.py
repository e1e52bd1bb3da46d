from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hetbandit.confidence.erm import FiniteFunctionClass
from hetbandit.core import InvalidArgumentError, require_positive
from hetbandit.enums import EluderMode


log = logging.getLogger(__name__)

EXACT_LIMIT = 12

Spans = tuple[tuple[float, float], ...]


class SizeLimitError(ValueError):
    """The action universe is too large for the exact eluder search; use greedy mode."""


@dataclass(frozen=True)
class ParametricClass:
    """Functions Lip-Lipschitz in a parameter from the radius-``bound`` ball of R^dim."""

    dim: int
    bound: float
    lipschitz: float

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidArgumentError(f"dimension must be at least 1, got {self.dim}")
        require_positive("B", self.bound)
        require_positive("Lipschitz constant", self.lipschitz)


@dataclass(frozen=True)
class EluderResult:
    dimension: int
    sequence: tuple
    mode: EluderMode
    eps: float

    @property
    def is_lower_bound(self) -> bool:
        return self.mode is EluderMode.GREEDY

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "sequence": list(self.sequence), "mode": str(self.mode)}


def _pair_norms(table: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """sqrt(sum_i (f(a_i) - g(a_i))^2) for every ordered pair (f, g)."""
    if indices.size == 0:
        return np.zeros((table.shape[0], table.shape[0]))
    columns = table[:, indices]
    diff = columns[:, None, :] - columns[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _pair_gaps(table: np.ndarray, action: int) -> np.ndarray:
    values = table[:, action]
    return values[:, None] - values[None, :]


def is_eps_dependent(
    action: int,
    predecessors: Sequence[int],
    fclass: FiniteFunctionClass,
    eps: float,
) -> bool:
    """True when every pair close on ``predecessors`` differs by at most eps at ``action``.

    The condition is one-sided, f(a) - g(a) <= eps, over ordered pairs.
    """
    require_positive("eps", eps)
    indices = np.sort(fclass.check_actions(np.asarray(predecessors, dtype=int)))
    action = int(fclass.check_actions(np.array([action]))[0])
    close = _pair_norms(fclass.table, indices) <= eps
    return bool(np.all(_pair_gaps(fclass.table, action)[close] <= eps))


def width(members: Sequence[int] | np.ndarray, fclass: FiniteFunctionClass, action: int) -> float | None:
    members = np.asarray(members, dtype=int)
    if members.size == 0:
        return None
    values = fclass.table[members, action]
    return float(values.max() - values.min())


def covering_number_upper(spec: FiniteFunctionClass | ParametricClass, alpha: float) -> int:
    """Sup-norm alpha-cover size: |F| for finite classes, an axis grid over the ball otherwise."""
    require_positive("alpha", alpha)
    if isinstance(spec, FiniteFunctionClass):
        return spec.size
    per_axis = math.ceil((2.0 * spec.bound * spec.lipschitz / alpha + 1.0) * (1 - 1e-12))
    return per_axis**spec.dim


def _merge(intervals: list[tuple[float, float]]) -> Spans:
    merged: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def _intersect(left: Spans, right: Spans) -> Spans:
    out: list[tuple[float, float]] = []
    i = j = 0
    while i < len(left) and j < len(right):
        lo = max(left[i][0], right[j][0])
        hi = min(left[i][1], right[j][1])
        if lo < hi:
            out.append((lo, hi))
        if left[i][1] < right[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


class _ExactSearch:
    """Depth-first search over action sequences.

    A sequence is admissible when a single eps' >= eps makes every element
    eps'-independent of its prefix. The admissible eps' values for one element
    form a union of half-open intervals [norm, gap), so the search carries that
    union and memoizes on (prefix set, union).
    """

    def __init__(self, table: np.ndarray, actions: Sequence[int]) -> None:
        self.table = table
        self.actions = list(actions)
        self._spans: dict[tuple[int, int], Spans] = {}
        self._best: dict[tuple[int, Spans], tuple[int, ...]] = {}

    def spans(self, position: int, mask: int) -> Spans:
        key = (position, mask)
        if key not in self._spans:
            prefix = np.array(
                [self.actions[i] for i in range(len(self.actions)) if mask >> i & 1], dtype=int
            )
            norms = _pair_norms(self.table, np.sort(prefix))
            gaps = _pair_gaps(self.table, self.actions[position])
            open_pairs = gaps > norms
            self._spans[key] = _merge(list(zip(norms[open_pairs].tolist(), gaps[open_pairs].tolist())))
        return self._spans[key]

    def longest(self, mask: int, feasible: Spans) -> tuple[int, ...]:
        key = (mask, feasible)
        if key in self._best:
            return self._best[key]
        best: tuple[int, ...] = ()
        for position in range(len(self.actions)):
            if mask >> position & 1:
                continue
            narrowed = _intersect(feasible, self.spans(position, mask))
            if not narrowed:
                continue
            tail = (position,) + self.longest(mask | 1 << position, narrowed)
            if len(tail) > len(best):
                best = tail
                if len(best) == len(self.actions) - bin(mask).count("1"):
                    break
        self._best[key] = best
        return best


def _greedy(fclass: FiniteFunctionClass, actions: Sequence[int], eps: float) -> list[int]:
    sequence: list[int] = []
    grown = True
    while grown:
        grown = False
        for action in actions:
            if action not in sequence and not is_eps_dependent(action, sequence, fclass, eps):
                sequence.append(action)
                grown = True
                break
    return sequence


def eluder_dimension(
    fclass: FiniteFunctionClass,
    eps: float,
    *,
    actions: Sequence[int] | None = None,
    mode: EluderMode = EluderMode.EXACT,
) -> EluderResult:
    """Longest sequence in which every action is eps'-independent of its predecessors, eps' >= eps.

    Greedy mode appends the first eps-independent action until none is left and
    only certifies a lower bound.
    """
    require_positive("eps", eps)
    mode = EluderMode(mode)
    universe = list(range(fclass.num_actions)) if actions is None else [int(a) for a in actions]
    fclass.check_actions(np.asarray(universe, dtype=int))
    if len(set(universe)) != len(universe):
        raise InvalidArgumentError("action universe contains duplicates")
    if mode is EluderMode.EXACT:
        if len(universe) > EXACT_LIMIT:
            raise SizeLimitError(
                f"exact eluder search supports at most {EXACT_LIMIT} actions, got {len(universe)}; "
                "use greedy mode for a lower bound"
            )
        search = _ExactSearch(fclass.table, universe)
        positions = search.longest(0, ((eps, math.inf),))
        sequence = [universe[p] for p in positions]
    else:
        sequence = _greedy(fclass, universe, eps)
    log.debug("eluder dimension %s at eps=%s (%s)", len(sequence), eps, mode)
    return EluderResult(
        dimension=len(sequence),
        sequence=tuple(fclass.universe[a] for a in sequence),
        mode=mode,
        eps=eps,
    )
