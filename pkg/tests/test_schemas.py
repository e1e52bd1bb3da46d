import json
import tempfile
from pathlib import Path
from unittest import TestCase

from hetbandit.enums import Algorithm, LinkKind
from hetbandit.schemas import (
    ExperimentConfigError,
    GlmEnvironmentSpec,
    load_experiment_config,
    load_schedule_entries,
    parse_experiment_config,
)


def _payload(**overrides) -> dict:
    payload = {
        "environment": {"kind": "finite", "generator": "random"},
        "noise": {"R": 1.0},
        "algorithm": "ml2-erm-subgaussian",
        "T": 100,
    }
    payload.update(overrides)
    return payload


GLM_ENVIRONMENT = {"kind": "glm", "d": 2, "theta_star": [0.5, 0.5], "A": 1.0, "B": 1.0}


class ExperimentConfigTests(TestCase):
    def test_defaults(self) -> None:
        config = parse_experiment_config(_payload())
        self.assertEqual(config.seeds, [0])
        self.assertEqual(config.sigma_bar, "auto")
        self.assertEqual(config.delta, 0.1)
        self.assertAlmostEqual(config.effective_alpha(), 1e-4)
        self.assertIs(config.algorithm, Algorithm.ML2_ERM_SUBGAUSSIAN)

    def test_glm_environment_is_selected_by_kind(self) -> None:
        config = parse_experiment_config(_payload(environment=GLM_ENVIRONMENT, algorithm="ml2-gloc"))
        self.assertIsInstance(config.environment, GlmEnvironmentSpec)
        self.assertIs(config.environment.link, LinkKind.IDENTITY)
        self.assertEqual(config.environment.param_bound, 1.0)

    def test_errors_name_the_field(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, r"noise\.R"):
            parse_experiment_config(_payload(noise={"R": -1.0}))
        with self.assertRaisesRegex(ExperimentConfigError, r"T: "):
            parse_experiment_config(_payload(T=0))

    def test_unknown_fields_are_rejected(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, "horizon_typo"):
            parse_experiment_config(_payload(horizon_typo=5))

    def test_algorithm_must_fit_environment(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, "requires a GLM environment"):
            parse_experiment_config(_payload(algorithm="ml2-gloc"))
        with self.assertRaisesRegex(ExperimentConfigError, "requires a finite-class environment"):
            parse_experiment_config(_payload(environment=GLM_ENVIRONMENT))

    def test_weighted_ridge_needs_identity_link(self) -> None:
        environment = dict(GLM_ENVIRONMENT, link="logistic")
        with self.assertRaisesRegex(ExperimentConfigError, "identity link"):
            parse_experiment_config(_payload(environment=environment, algorithm="baseline-weighted-ridge"))

    def test_gloc_needs_small_delta(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, "delta < 0.25"):
            parse_experiment_config(_payload(environment=GLM_ENVIRONMENT, algorithm="ml2-gloc", delta=0.3))

    def test_seeds_must_be_distinct(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, "distinct"):
            parse_experiment_config(_payload(seeds=[1, 1]))

    def test_finite_environment_needs_one_class_source(self) -> None:
        with self.assertRaisesRegex(ExperimentConfigError, "exactly one"):
            parse_experiment_config(_payload(environment={"kind": "finite"}))

    def test_actions_and_actions_path_are_exclusive(self) -> None:
        environment = dict(GLM_ENVIRONMENT, actions=[[1.0, 0.0]], actions_path="actions.json")
        with self.assertRaisesRegex(ExperimentConfigError, "at most one"):
            parse_experiment_config(_payload(environment=environment, algorithm="ml2-gloc"))

    def test_fixed_level_variance_aware_needs_a_finite_class(self) -> None:
        config = parse_experiment_config(_payload(algorithm="ml2-erm-variance-aware-fixed"))
        self.assertIs(config.algorithm, Algorithm.ML2_ERM_VARIANCE_AWARE_FIXED)
        with self.assertRaisesRegex(ExperimentConfigError, "requires a finite-class environment"):
            parse_experiment_config(_payload(environment=GLM_ENVIRONMENT, algorithm="ml2-erm-variance-aware-fixed"))

    def test_theta_star_shape_is_checked(self) -> None:
        environment = dict(GLM_ENVIRONMENT, theta_star=[0.1, 0.2, 0.3])
        with self.assertRaisesRegex(ExperimentConfigError, "theta_star"):
            parse_experiment_config(_payload(environment=environment, algorithm="ml2-gloc"))

    def test_load_from_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps(_payload(seeds=[3, 4])), encoding="utf-8")
            config = load_experiment_config(path)
            with self.assertRaisesRegex(ExperimentConfigError, "cannot read"):
                load_experiment_config(Path(tmp) / "missing.json")

        self.assertEqual(config.seeds, [3, 4])

    def test_schedule_entries(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "schedule.json"
            path.write_text(json.dumps([{"t": 0, "sigma": 0.1}]), encoding="utf-8")
            with self.assertRaisesRegex(ExperimentConfigError, r"0\.t"):
                load_schedule_entries(path)
