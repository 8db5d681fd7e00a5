import json
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.geometry_service import AtomicMeasure, Cube, generate
from services.harness_errors import InputError
from services.kernel_service import LipschitzProfile
from services.measure_file_service import (
    dumps_measure,
    dumps_profile,
    load_measure,
    loads_measure,
    measure_to_dict,
    profile_from_dict,
    save_measure,
)


class MeasureFileTests(unittest.TestCase):
    def test_canonical_text_is_stable(self):
        mu = generate("cantor4corner", 2)

        self.assertEqual(dumps_measure(mu, {"kind": "cantor4corner"}), dumps_measure(generate("cantor4corner", 2), {"kind": "cantor4corner"}))
        self.assertTrue(dumps_measure(mu).endswith("\n"))

    def test_complex_weights(self):
        mu = AtomicMeasure(np.array([[0.0], [1.0]]), np.array([1.0, 2 - 3j]), 0.5)
        data = measure_to_dict(mu)

        self.assertEqual(data["atoms"][0]["weight"], 1.0)
        self.assertEqual(data["atoms"][1]["weight"], [2.0, -3.0])
        again = loads_measure(json.dumps(data))
        np.testing.assert_array_equal(again.weights, mu.weights)

    def test_scalar_points_and_empty_measures(self):
        mu = loads_measure('{"resolution": 0.1, "atoms": [{"point": 0.5, "weight": 1}]}')
        self.assertEqual(mu.dim, 1)

        empty = loads_measure('{"resolution": 0.1, "dim": 3, "atoms": []}')
        self.assertEqual((empty.size, empty.dim), (0, 3))

    def test_save_and_load(self):
        mu = generate("cantor1d", 2, dim=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "nested" / "measure.json")
            save_measure(mu, path)
            loaded = load_measure(path)

        np.testing.assert_array_equal(loaded.points, mu.points)
        self.assertEqual(loaded.resolution, mu.resolution)


class MalformedInputTests(unittest.TestCase):
    def test_syntax_error_has_position(self):
        with self.assertRaises(InputError) as ctx:
            loads_measure('{\n  "resolution": 1,\n  "atoms": [,]\n}', path="m.json")

        self.assertEqual(ctx.exception.line, 3)
        self.assertTrue(ctx.exception.position.startswith("m.json:3:"))

    def test_structural_errors(self):
        bad = [
            "[]",
            '{"resolution": 1}',
            '{"resolution": 0, "atoms": []}',
            '{"resolution": true, "atoms": []}',
            '{"resolution": 1, "atoms": []}',
            '{"resolution": 1, "atoms": [{"point": [0, 1], "weight": 1}, {"point": [0], "weight": 1}]}',
            '{"resolution": 1, "atoms": [{"point": [0], "weight": "x"}]}',
            '{"resolution": 1, "atoms": [{"point": [0], "weight": true}]}',
            '{"resolution": 1, "atoms": [{"point": [], "weight": 1}]}',
            '{"resolution": 1, "atoms": [{"weight": 1}]}',
        ]
        for text in bad:
            with self.subTest(text=text):
                with self.assertRaises(InputError):
                    loads_measure(text)

    def test_missing_file(self):
        with self.assertRaises(InputError) as ctx:
            load_measure("/nonexistent/measure.json")

        self.assertEqual(ctx.exception.path, "/nonexistent/measure.json")


def test_profile_file_keeps_values():
    profile = LipschitzProfile.from_cones([(np.array([0.2, 0.3]), 0.5)], 2, 0.01).with_boundary(Cube((0.5, 0.5), 0.5), 0.1)
    again = profile_from_dict(json.loads(dumps_profile(profile)))
    points = np.random.default_rng(0).uniform(0, 1, (20, 2))

    np.testing.assert_allclose(again.evaluate(points), profile.evaluate(points))


def test_profile_file_errors():
    with pytest.raises(InputError):
        profile_from_dict({"cones": [], "dim": 0})
    with pytest.raises(InputError):
        profile_from_dict({"cones": [{"apex": [0.0]}], "dim": 1})
