import json
import math
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from hetbandit.confidence.erm import (
    BetaSchedule,
    ErmSubroutine,
    FiniteFunctionClass,
    LevelStatistics,
    beta_subgaussian,
    beta_variance_aware,
    build_confidence_set,
    erm_fit,
    ucb_value,
)
from hetbandit.core import InvalidArgumentError
from hetbandit.enums import BetaKind
from hetbandit.framework import Observation


def _schedule(**overrides) -> BetaSchedule:
    params = dict(
        kind=BetaKind.SUBGAUSSIAN,
        reward_bound=1.0,
        noise_bound=1.0,
        sigma_bar=1.0,
        num_levels=1,
        delta=0.1,
        alpha=0.0,
        covering_number=10,
    )
    params.update(overrides)
    return BetaSchedule(**params)


class FiniteClassTests(TestCase):
    def test_values_above_the_bound_are_rejected(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            FiniteFunctionClass((0, 1), np.array([[0.5, 1.5]]), 1.0)

    def test_column_count_must_match_universe(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            FiniteFunctionClass((0, 1, 2), np.array([[0.5, 0.5]]), 1.0)

    def test_load_from_json_document(self) -> None:
        document = {"actions": ["left", "right"], "functions": [[0.0, 1.0], [1.0, 0.0]], "bound": 1.0}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "class.json"
            path.write_text(json.dumps(document), encoding="utf-8")
            fclass = FiniteFunctionClass.load(path)

        self.assertEqual(fclass.size, 2)
        self.assertEqual(fclass.index_of("right"), 1)
        self.assertEqual(fclass.to_document().functions, document["functions"])
        with self.assertRaises(InvalidArgumentError):
            fclass.index_of("up")


class ErmFitTests(TestCase):
    def setUp(self) -> None:
        self.fclass = FiniteFunctionClass(
            (0, 1), np.array([[1.0, 0.0], [0.5, 0.5]]), 1.0
        )

    def test_empty_data_returns_lowest_index(self) -> None:
        self.assertEqual(erm_fit([], self.fclass), 0)

    def test_lower_squared_loss_wins(self) -> None:
        data = [(0, 0.55), (1, 0.45)]
        self.assertEqual(erm_fit(data, self.fclass), 1)
        data = [(0, 0.95), (1, 0.05)]
        self.assertEqual(erm_fit(data, self.fclass), 0)

    def test_example_losses(self) -> None:
        fclass = FiniteFunctionClass((0, 1), np.array([[1.0, 0.0], [0.0, 1.0]]), 1.0)
        data = [(0, 0.8), (1, 0.25)]
        stats = LevelStatistics.from_data(data, fclass)
        losses = (fclass.table**2) @ stats.counts - 2 * fclass.table @ stats.reward_sums + stats.reward_squares
        np.testing.assert_allclose(losses, [0.04 + 0.0625, 0.64 + 0.5625])
        self.assertEqual(erm_fit(data, fclass), 0)

    def test_matches_brute_force_on_random_instances(self) -> None:
        rng = np.random.default_rng(21)
        for _ in range(200):
            n_functions, n_actions = rng.integers(1, 8), rng.integers(1, 6)
            table = rng.uniform(-1, 1, size=(n_functions, n_actions))
            fclass = FiniteFunctionClass(tuple(range(n_actions)), table, 1.0)
            data = [
                (int(rng.integers(n_actions)), float(rng.normal()))
                for _ in range(int(rng.integers(0, 15)))
            ]
            losses = [sum((table[f, a] - r) ** 2 for a, r in data) for f in range(n_functions)]
            best = min(losses)
            expected = next(f for f, loss in enumerate(losses) if loss <= best + 1e-9)
            self.assertEqual(erm_fit(data, fclass), expected)

    def test_out_of_universe_action_is_rejected(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            erm_fit([(5, 0.1)], self.fclass)


class ThresholdTests(TestCase):
    def test_subgaussian_without_cover_term(self) -> None:
        value = beta_subgaussian(1, 0, _schedule())
        self.assertAlmostEqual(value, 8 * 4 * math.log(200), places=9)
        self.assertAlmostEqual(value, 169.55, delta=0.01)

    def test_subgaussian_level_scaling(self) -> None:
        params = _schedule(num_levels=2)
        self.assertAlmostEqual(beta_subgaussian(5, 1, params), 4 * beta_subgaussian(5, 0, params))

    def test_subgaussian_cover_term(self) -> None:
        value = beta_subgaussian(100, 0, _schedule(alpha=1e-4))
        expected = 8 * 4 * math.log(200) + 0.04 * (1 + math.sqrt(4 * math.log(4 * 100 * 101 / 0.1)))
        self.assertAlmostEqual(value, expected, places=9)
        self.assertAlmostEqual(value, 169.85, delta=0.05)

    def test_variance_aware_example(self) -> None:
        params = _schedule(kind=BetaKind.VARIANCE_AWARE, noise_bound=2.0)
        self.assertAlmostEqual(beta_variance_aware(100, 0, params), 1321.6, delta=0.1)

    def test_variance_aware_with_zero_bound_keeps_variance_term(self) -> None:
        params = _schedule(kind=BetaKind.VARIANCE_AWARE, reward_bound=0.0, noise_bound=2.0)
        log_term = math.log(2 * 10 * 100**2 / 0.1)
        self.assertAlmostEqual(beta_variance_aware(100, 0, params), 16 * 4 * log_term, places=9)

    def test_union_threshold_needs_unit_bound(self) -> None:
        params = _schedule(kind=BetaKind.VARIANCE_AWARE_UNION, reward_bound=2.0)
        with self.assertRaises(InvalidArgumentError):
            beta_variance_aware(10, 0, params)

    def test_union_threshold_grows_with_t(self) -> None:
        params = _schedule(kind=BetaKind.VARIANCE_AWARE_UNION, num_levels=3)
        values = [params.threshold(t, 1) for t in (1, 10, 100, 1000)]
        self.assertEqual(values, sorted(values))

    def test_invalid_round_or_level(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            beta_subgaussian(0, 0, _schedule())
        with self.assertRaises(InvalidArgumentError):
            beta_subgaussian(1, 1, _schedule())

    def test_scale_multiplies_threshold(self) -> None:
        self.assertAlmostEqual(
            _schedule(scale=2.0).threshold(7, 0), 2 * _schedule().threshold(7, 0)
        )


class ConfidenceSetTests(TestCase):
    def setUp(self) -> None:
        self.fclass = FiniteFunctionClass(
            (0, 1, 2),
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]]),
            1.0,
        )

    def test_members_within_threshold(self) -> None:
        data = [(0, 0.0), (1, 0.0)]
        conf_set = build_confidence_set(self.fclass, data, fitted=0, beta_sq=1.5)
        self.assertEqual(conf_set.members.tolist(), [0, 1, 2])
        self.assertIn(0, conf_set)
        self.assertNotIn(3, conf_set)

    def test_sets_grow_with_threshold(self) -> None:
        rng = np.random.default_rng(3)
        data = [(int(rng.integers(3)), float(rng.normal())) for _ in range(30)]
        fitted = erm_fit(data, self.fclass)
        previous: set[int] = set()
        for beta_sq in (0.0, 0.5, 2.0, 8.0, 32.0):
            members = set(build_confidence_set(self.fclass, data, fitted, beta_sq).members.tolist())
            self.assertTrue(previous <= members)
            self.assertIn(fitted, members)
            previous = members

    def test_ucb_value(self) -> None:
        conf_set = build_confidence_set(self.fclass, [(0, 0.0), (1, 0.0)], 0, 1.5)
        self.assertEqual(ucb_value(conf_set, self.fclass, 0), 1.0)
        self.assertEqual(ucb_value(conf_set, self.fclass, 1), 0.0)

    def test_ucb_value_of_empty_set_is_none(self) -> None:
        conf_set = build_confidence_set(self.fclass, [(0, 0.0)], 0, -1.0)
        self.assertEqual(len(conf_set), 0)
        self.assertIsNone(ucb_value(conf_set, self.fclass, 0))


class ErmSubroutineTests(TestCase):
    def test_update_leaves_previous_fit_untouched(self) -> None:
        fclass = FiniteFunctionClass((0, 1), np.array([[1.0, 0.0], [0.0, 1.0]]), 1.0)
        subroutine = ErmSubroutine(fclass, _schedule())
        fit = subroutine.initial_fit(0)
        updated = subroutine.update(fit, 0, Observation(t=1, action=1, reward=1.0, sigma=0.1))
        self.assertEqual(fit.stats.size, 0)
        self.assertEqual(updated.stats.size, 1)
        self.assertEqual(updated.fitted, 1)

    def test_union_threshold_runs_on_rescaled_rewards(self) -> None:
        fclass = FiniteFunctionClass((0, 1), np.array([[2.0, 0.0], [0.0, 2.0]]), 2.0)
        schedule = _schedule(kind=BetaKind.VARIANCE_AWARE_UNION, reward_bound=2.0, noise_bound=2.0)
        subroutine = ErmSubroutine(fclass, schedule)
        self.assertEqual(subroutine.reward_scale, 2.0)
        self.assertEqual(subroutine.schedule.reward_bound, 1.0)
        self.assertEqual(subroutine.fclass.bound, 1.0)

        conf_set = subroutine.confidence_set(subroutine.initial_fit(0), 0, 1)
        np.testing.assert_allclose(subroutine.optimistic_values(conf_set, np.array([0, 1])), [2.0, 2.0])
