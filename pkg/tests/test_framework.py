from unittest import TestCase

import numpy as np

from hetbandit.confidence.erm import BetaSchedule, ErmSubroutine, FiniteFunctionClass
from hetbandit.core import NoiseSpec
from hetbandit.enums import BetaKind
from hetbandit.framework import (
    ConfigurationError,
    EpisodeError,
    Ml2Config,
    run_episode,
    select_action_ofu,
)
from hetbandit.harness.environments import FiniteClassEnvironment


IDENTITY_CLASS = FiniteFunctionClass(
    universe=(0, 1, 2),
    table=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    bound=1.0,
)


def _environment(sigmas, noise_bound=1.0, truth=2, fclass=IDENTITY_CLASS, seed=0):
    noise = NoiseSpec(noise_bound=noise_bound, schedule=tuple(sigmas))
    return FiniteClassEnvironment(fclass, truth, noise, fclass.num_actions, np.random.default_rng(seed))


def _subroutine(config: Ml2Config, fclass=IDENTITY_CLASS) -> ErmSubroutine:
    schedule = BetaSchedule(
        kind=BetaKind.SUBGAUSSIAN,
        reward_bound=fclass.bound,
        noise_bound=config.noise_bound,
        sigma_bar=config.sigma_bar,
        num_levels=config.num_levels,
        delta=config.delta,
        alpha=config.alpha,
        covering_number=fclass.size,
    )
    return ErmSubroutine(fclass, schedule)


class RecordingSubroutine:
    """Delegates to a real subroutine and records which fits each round saw."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.updates: list[tuple[int, int]] = []
        self.seen: dict[int, list[int]] = {}

    def initial_fit(self, level):
        return self.inner.initial_fit(level)

    def update(self, fit, level, observation):
        self.updates.append((observation.t, level))
        return self.inner.update(fit, level, observation)

    def confidence_set(self, fit, level, t):
        self.seen.setdefault(t, []).append(id(fit))
        return self.inner.confidence_set(fit, level, t)

    def optimistic_values(self, conf_set, actions):
        return self.inner.optimistic_values(conf_set, actions)

    def covers(self, conf_set, truth):
        return self.inner.covers(conf_set, truth)


class SelectActionTests(TestCase):
    def test_single_level_picks_larger_value(self) -> None:
        choice = select_action_ofu(["a1", "a2"], lambda level, actions: np.array([0.2, 0.7]), 1)
        self.assertEqual(choice.index, 1)

    def test_min_over_levels_then_argmax(self) -> None:
        values = {0: np.array([0.9, 0.5]), 1: np.array([0.4, 0.5])}
        choice = select_action_ofu(["a1", "a2"], lambda level, actions: values[level], 2)
        self.assertEqual(choice.index, 1)
        np.testing.assert_allclose(choice.scores, [0.4, 0.5])

    def test_ties_go_to_lowest_index(self) -> None:
        choice = select_action_ofu([0, 1, 2], lambda level, actions: np.array([0.5, 0.5, 0.5]), 1)
        self.assertEqual(choice.index, 0)

    def test_empty_level_is_skipped(self) -> None:
        values = {0: None, 1: np.array([0.1, 0.3])}
        choice = select_action_ofu([0, 1], lambda level, actions: values[level], 2)
        self.assertEqual(choice.index, 1)
        self.assertEqual(choice.skipped_levels, 1)

    def test_all_levels_empty_is_a_configuration_error(self) -> None:
        with self.assertRaises(ConfigurationError):
            select_action_ofu([0, 1], lambda level, actions: None, 3)


class RunEpisodeTests(TestCase):
    def test_routing_example(self) -> None:
        config = Ml2Config(horizon=3, noise_bound=1.6, sigma_bar=0.1)
        env = _environment((0.05, 0.5, 1.6), noise_bound=1.6)
        trace = run_episode(env, config, _subroutine(config), np.random.default_rng(0))
        self.assertEqual([record.level for record in trace.rounds], [0, 2, 3])
        self.assertEqual(trace.level_counts(config.num_levels), [1, 0, 1, 1])

    def test_single_round_updates_exactly_one_level(self) -> None:
        config = Ml2Config(horizon=1, noise_bound=1.0, sigma_bar=0.1)
        recorder = RecordingSubroutine(_subroutine(config))
        run_episode(_environment((0.3,)), config, recorder, np.random.default_rng(0))
        self.assertEqual(recorder.updates, [(1, 1)])

    def test_untouched_levels_keep_their_fit(self) -> None:
        config = Ml2Config(horizon=30, noise_bound=1.0, sigma_bar=0.1)
        sigmas = np.random.default_rng(2).uniform(0.0, 1.0, size=30)
        recorder = RecordingSubroutine(_subroutine(config))
        run_episode(_environment(sigmas), config, recorder, np.random.default_rng(1))
        levels = config.num_levels
        for t, level in recorder.updates[:-1]:
            before = recorder.seen[t][:levels]
            after = recorder.seen[t + 1][:levels]
            for other in range(levels):
                if other != level:
                    self.assertEqual(before[other], after[other])

    def test_noiseless_run_locks_onto_the_truth(self) -> None:
        config = Ml2Config(horizon=10, noise_bound=1.0, sigma_bar=0.01)
        env = _environment([0.0] * 10)
        trace = run_episode(
            env,
            config,
            _subroutine(config),
            np.random.default_rng(0),
            coverage=lambda conf_set: 2 in conf_set,
        )
        self.assertAlmostEqual(trace.regret_cum, 2.0)
        self.assertEqual(trace.rounds[-1].regret_inst, 0.0)
        self.assertEqual(trace.coverage_violations, 0)

    def test_chosen_score_dominates_and_is_optimistic_under_coverage(self) -> None:
        config = Ml2Config(horizon=60, noise_bound=1.0, sigma_bar=0.1)
        env = _environment(np.full(60, 0.2), seed=4)
        trace = run_episode(
            env,
            config,
            _subroutine(config),
            np.random.default_rng(4),
            coverage=lambda conf_set: 2 in conf_set,
        )
        for record in trace.rounds:
            self.assertEqual(record.scores[record.action_index], max(record.scores))
            if record.all_covered:
                self.assertGreaterEqual(record.scores[record.action_index], record.optimal_value)

    def test_same_seed_gives_identical_trace(self) -> None:
        config = Ml2Config(horizon=40, noise_bound=1.0, sigma_bar=0.1)
        sigmas = np.linspace(0.0, 1.0, 40)
        first = run_episode(_environment(sigmas), config, _subroutine(config), np.random.default_rng(9))
        second = run_episode(_environment(sigmas), config, _subroutine(config), np.random.default_rng(9))
        self.assertEqual(first.rounds, second.rounds)

    def test_subroutine_failure_carries_round_index(self) -> None:
        config = Ml2Config(horizon=3, noise_bound=1.0, sigma_bar=0.1)

        class Failing(RecordingSubroutine):
            def update(self, fit, level, observation):
                if observation.t == 2:
                    raise RuntimeError("solver blew up")
                return super().update(fit, level, observation)

        with self.assertRaises(EpisodeError) as caught:
            run_episode(_environment((0.1, 0.1, 0.1)), config, Failing(_subroutine(config)), np.random.default_rng(0))
        self.assertEqual(caught.exception.round_index, 2)
