import math
from unittest import TestCase

from hetbandit import bounds
from hetbandit.confidence.links import GlmModel
from hetbandit.core import InvalidArgumentError, num_levels
from hetbandit.enums import LinkKind


COMMON = dict(horizon=1000, levels=3, dim_e=4.0, covering_number=20, delta=0.1, alpha=1e-6)


class RegretBoundTests(TestCase):
    def test_subgaussian_bound_grows_with_total_variance(self) -> None:
        low = bounds.subgaussian_regret_bound(
            total_variance=1.0, sigma_bar=0.01, reward_bound=1.0, noise_bound=1.0, **COMMON
        )
        high = bounds.subgaussian_regret_bound(
            total_variance=1000.0, sigma_bar=0.01, reward_bound=1.0, noise_bound=1.0, **COMMON
        )
        self.assertGreater(low, 0.0)
        self.assertGreater(high, low)

    def test_gap_bound_is_infinite_without_a_gap(self) -> None:
        for gap in (0.0, math.inf):
            value = bounds.gap_regret_bound(gap=gap, sigma_max=1.0, reward_bound=1.0, **COMMON)
            self.assertEqual(value, math.inf)

    def test_gap_bound_shrinks_with_the_gap(self) -> None:
        small = bounds.gap_regret_bound(gap=0.05, sigma_max=1.0, reward_bound=1.0, **COMMON)
        large = bounds.gap_regret_bound(gap=0.5, sigma_max=1.0, reward_bound=1.0, **COMMON)
        self.assertAlmostEqual(small / large, 10.0)

    def test_variance_aware_bound_is_finite(self) -> None:
        value = bounds.variance_aware_regret_bound(
            total_variance=10.0, sigma_bar=0.1, noise_bound=1.0, **COMMON
        )
        self.assertTrue(math.isfinite(value) and value > 0)

    def test_invalid_horizon_or_delta(self) -> None:
        with self.assertRaises(InvalidArgumentError):
            bounds.ftrl_regret_bound(0, GlmModel(LinkKind.IDENTITY, 1.0, 1.0, 2), 1.0, 0.1, 0.1)
        with self.assertRaises(InvalidArgumentError):
            bounds.ftrl_regret_bound(10, GlmModel(LinkKind.IDENTITY, 1.0, 1.0, 2), 1.0, 0.1, 1.5)

    def test_ftrl_bound_closed_form(self) -> None:
        model = GlmModel(LinkKind.IDENTITY, 1.0, 1.0, 2)
        log_term = math.log(4 * 500**2 / 0.1)
        expected = 8.0 + 4.5 * log_term**2 + 3 * 0.04 * 2 * math.log(1 + 500 / 8)
        self.assertAlmostEqual(bounds.ftrl_regret_bound(500, model, 1.0, 0.2, 0.1), expected)


class AutoSigmaBarTests(TestCase):
    def test_subgaussian_fixed_point_is_consistent(self) -> None:
        sigma_bar, levels = bounds.auto_sigma_bar_subgaussian(
            horizon=2000, noise_bound=1.0, dim_e=3.0, covering_number=20, delta=0.1
        )
        self.assertEqual(levels, num_levels(1.0, sigma_bar))
        expected = 1.0 / (3.0 * math.log(2 * 20 * levels / 0.1) * math.sqrt(2000))
        self.assertAlmostEqual(sigma_bar, expected)

    def test_subgaussian_floor_on_dimension(self) -> None:
        zero = bounds.auto_sigma_bar_subgaussian(
            horizon=100, noise_bound=1.0, dim_e=0.0, covering_number=5, delta=0.1
        )
        one = bounds.auto_sigma_bar_subgaussian(
            horizon=100, noise_bound=1.0, dim_e=1.0, covering_number=5, delta=0.1
        )
        self.assertEqual(zero, one)

    def test_glm_rule(self) -> None:
        self.assertAlmostEqual(bounds.auto_sigma_bar_glm(2.0, 4), 1.0)
        with self.assertRaises(InvalidArgumentError):
            bounds.auto_sigma_bar_glm(0.0, 4)
