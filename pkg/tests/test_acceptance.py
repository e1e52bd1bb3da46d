import json
from unittest import TestCase

import numpy as np

from scripts.acceptance import CheckResult, _json_scalar


class CheckResultTests(TestCase):
    def test_numpy_verdict_becomes_a_bool(self) -> None:
        result = CheckResult("gap-direction", np.float64(1.0) < np.float64(2.0))

        self.assertIs(result.passed, True)

    def test_numpy_details_serialize(self) -> None:
        details = {"passed": np.bool_(False), "runs": np.int64(3), "rate": np.float32(0.25)}

        decoded = json.loads(json.dumps(details, default=_json_scalar))

        self.assertEqual(decoded, {"passed": False, "runs": 3, "rate": 0.25})

    def test_other_objects_still_fail(self) -> None:
        with self.assertRaises(TypeError):
            json.dumps({"value": object()}, default=_json_scalar)
