import itertools
import json
from unittest import TestCase

import numpy as np

from hetbandit.confidence.erm import FiniteFunctionClass
from hetbandit.eluder import (
    ParametricClass,
    SizeLimitError,
    covering_number_upper,
    eluder_dimension,
    is_eps_dependent,
    width,
)
from hetbandit.enums import EluderMode


def _class(rows, bound: float = 1.0) -> FiniteFunctionClass:
    table = np.array(rows, dtype=float)
    return FiniteFunctionClass(tuple(range(table.shape[1])), table, bound)


def _constants() -> FiniteFunctionClass:
    return _class([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])


def _brute_force_dimension(fclass: FiniteFunctionClass, eps: float) -> int:
    """Longest admissible sequence by plain enumeration over candidate eps' values."""
    table = fclass.table
    n = fclass.num_actions
    candidates = {eps}
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            columns = table[:, list(subset)]
            diff = columns[:, None, :] - columns[None, :, :]
            norms = np.sqrt(np.sum(diff * diff, axis=-1))
            candidates.update(float(v) for v in norms.ravel() if v >= eps)

    def longest(prefix: list[int], eps_prime: float) -> int:
        best = len(prefix)
        for action in range(n):
            if action in prefix or is_eps_dependent(action, prefix, fclass, eps_prime):
                continue
            best = max(best, longest(prefix + [action], eps_prime))
        return best

    return max(longest([], eps_prime) for eps_prime in candidates)


class DependenceTests(TestCase):
    def test_single_function_is_always_dependent(self) -> None:
        fclass = _class([[0.3, 0.7]])
        self.assertTrue(is_eps_dependent(0, [], fclass, 0.5))
        self.assertTrue(is_eps_dependent(1, [0], fclass, 0.01))

    def test_constants_without_history(self) -> None:
        self.assertFalse(is_eps_dependent(0, [], _constants(), 0.5))

    def test_constants_with_history(self) -> None:
        self.assertTrue(is_eps_dependent(2, [0], _constants(), 0.5))
        self.assertTrue(is_eps_dependent(0, [1, 2], _constants(), 0.5))

    def test_more_predecessors_never_break_dependence(self) -> None:
        rng = np.random.default_rng(13)
        for _ in range(100):
            fclass = _class(rng.uniform(-1, 1, size=(5, 4)))
            order = rng.permutation(4).tolist()
            action, history = order[0], order[1:]
            eps = float(rng.uniform(0.1, 1.0))
            dependent = False
            for k in range(len(history) + 1):
                now = is_eps_dependent(action, history[:k], fclass, eps)
                self.assertTrue(now or not dependent)
                dependent = now


class EluderDimensionTests(TestCase):
    def test_single_function(self) -> None:
        self.assertEqual(eluder_dimension(_class([[0.2, 0.4, 0.6]]), 0.5).dimension, 0)

    def test_all_binary_functions_on_three_actions(self) -> None:
        rows = list(itertools.product([0.0, 1.0], repeat=3))
        self.assertEqual(eluder_dimension(_class(rows), 0.5).dimension, 3)

    def test_indicator_class_with_zero_function(self) -> None:
        for n in range(2, 7):
            rows = np.vstack([np.eye(n), np.zeros((1, n))])
            self.assertEqual(eluder_dimension(_class(rows), 0.5).dimension, n)

    def test_indicator_class_alone_stops_one_short(self) -> None:
        for n in range(2, 6):
            self.assertEqual(eluder_dimension(_class(np.eye(n)), 0.5).dimension, n - 1)

    def test_exact_search_matches_brute_force(self) -> None:
        rng = np.random.default_rng(29)
        grid = np.array([0.0, 0.5, 1.0])
        for _ in range(30):
            n_actions = int(rng.integers(2, 6))
            n_functions = int(rng.integers(2, 9))
            fclass = _class(rng.choice(grid, size=(n_functions, n_actions)))
            for eps in (0.3, 0.5):
                exact = eluder_dimension(fclass, eps)
                self.assertEqual(exact.dimension, _brute_force_dimension(fclass, eps))
                self.assertEqual(len(exact.sequence), exact.dimension)

    def test_greedy_is_a_lower_bound(self) -> None:
        rng = np.random.default_rng(31)
        for _ in range(20):
            fclass = _class(rng.uniform(-1, 1, size=(6, 6)))
            greedy = eluder_dimension(fclass, 0.4, mode=EluderMode.GREEDY)
            exact = eluder_dimension(fclass, 0.4)
            self.assertTrue(greedy.is_lower_bound)
            self.assertFalse(exact.is_lower_bound)
            self.assertLessEqual(greedy.dimension, exact.dimension)

    def test_non_increasing_in_eps(self) -> None:
        rng = np.random.default_rng(37)
        fclass = _class(rng.uniform(-1, 1, size=(8, 5)))
        dims = [eluder_dimension(fclass, eps).dimension for eps in (0.05, 0.2, 0.5, 1.0, 2.5)]
        self.assertEqual(dims, sorted(dims, reverse=True))

    def test_exact_mode_refuses_large_universe(self) -> None:
        fclass = _class(np.zeros((2, 13)))
        with self.assertRaises(SizeLimitError):
            eluder_dimension(fclass, 0.5)
        self.assertEqual(eluder_dimension(fclass, 0.5, mode=EluderMode.GREEDY).dimension, 0)

    def test_sequence_reports_universe_labels(self) -> None:
        fclass = FiniteFunctionClass(("a", "b"), np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 1.0)
        result = eluder_dimension(fclass, 0.5)
        self.assertEqual(result.dimension, 2)
        self.assertEqual(sorted(result.sequence), ["a", "b"])
        payload = json.loads(json.dumps(result.to_json()))
        self.assertEqual(payload["mode"], "exact")


class WidthAndCoverTests(TestCase):
    def test_width_examples(self) -> None:
        fclass = _class([[0.2], [0.5], [0.9]])
        self.assertEqual(width([1], fclass, 0), 0.0)
        self.assertAlmostEqual(width([0, 1, 2], fclass, 0), 0.7)
        self.assertEqual(width([0, 1], _constants(), 2), 1.0)
        self.assertIsNone(width([], fclass, 0))

    def test_width_is_at_most_twice_the_bound(self) -> None:
        rng = np.random.default_rng(41)
        fclass = _class(rng.uniform(-2, 2, size=(10, 4)), bound=2.0)
        for action in range(4):
            self.assertLessEqual(width(range(10), fclass, action), 4.0)

    def test_covering_numbers(self) -> None:
        self.assertEqual(covering_number_upper(_class(np.zeros((17, 2))), 0.3), 17)
        self.assertEqual(covering_number_upper(ParametricClass(1, 1.0, 1.0), 1.0), 3)
        self.assertEqual(covering_number_upper(ParametricClass(2, 1.0, 1.0), 0.5), 25)

    def test_covering_number_non_increasing_in_alpha(self) -> None:
        spec = ParametricClass(3, 2.0, 0.5)
        counts = [covering_number_upper(spec, alpha) for alpha in (0.01, 0.1, 0.5, 1.0, 4.0)]
        self.assertEqual(counts, sorted(counts, reverse=True))
