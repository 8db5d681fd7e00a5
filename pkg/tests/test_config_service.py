import json
import math
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services import config_service
from services.harness_errors import ConfigError, InputError


class LoadConfigTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmpdir.cleanup)

        self.config_path = os.path.join(self.tmpdir.name, "config.json")
        patcher = mock.patch.object(config_service, "CONFIG_FILE", self.config_path)
        patcher.start()
        self.addCleanup(patcher.stop)

    def test_writes_defaults_when_missing(self):
        data = config_service.load_config()

        self.assertEqual(data["n"], 2)
        self.assertEqual(data["levels"], [2, 3, 4])
        with open(self.config_path, "r", encoding="utf-8") as fh:
            stored = json.load(fh)
        self.assertEqual(stored, data)

    def test_unknown_and_invalid_keys_are_dropped(self):
        config_service.save_config({"alpha": 0.5, "api_url": "x", "trials": "many"})

        data = config_service.load_config()
        self.assertEqual(data["alpha"], 0.5)
        self.assertNotIn("api_url", data)
        self.assertEqual(data["trials"], 100)

    def test_corrupt_file_restores_defaults(self):
        with open(self.config_path, "w", encoding="utf-8") as fh:
            fh.write("{not json")

        data = config_service.load_config()
        self.assertEqual(data["seed"], config_service.DEFAULT_SEED)

    def test_partial_ceilings_merge_over_defaults(self):
        config_service.save_config({"ceilings": {"weak_type": 7}})

        data = config_service.load_config()
        self.assertEqual(data["ceilings"]["weak_type"], 7.0)
        self.assertEqual(data["ceilings"]["cotlar_basic"], 50.0)


class BuildSuiteConfigTests(unittest.TestCase):
    def test_defaults_validate(self):
        config = config_service.build_suite_config()

        self.assertEqual(config.doubling_constant, 64.0)
        self.assertAlmostEqual(1 / config.p + 1 / config.q, 1 / config.r)

    def test_exponent_identity_is_enforced(self):
        with self.assertRaises(ConfigError):
            config_service.build_suite_config({"p": 3.0})

    def test_exponent_ranges(self):
        with self.assertRaises(ConfigError):
            config_service.build_suite_config({"p": 1.0, "q": math.inf, "r": 1.0})
        config = config_service.build_suite_config({"p": 4.0, "q": 4.0, "r": 2.0})
        self.assertEqual(config.r, 2.0)

    def test_unknown_override_raises(self):
        with self.assertRaises(ConfigError):
            config_service.build_suite_config({"nope": 1})

    def test_invalid_value_raises(self):
        with self.assertRaises(ConfigError):
            config_service.build_suite_config({"levels": "2,3"})

    def test_hypothesis_ceiling_must_be_positive(self):
        self.assertEqual(config_service.build_suite_config().hypothesis_ceiling, 1000.0)
        with self.assertRaises(ConfigError):
            config_service.build_suite_config({"hypothesis_ceiling": 0.0})

    def test_explicit_b_overrides_doubling_constant(self):
        config = config_service.build_suite_config({"b": 10})
        self.assertEqual(config.doubling_constant, 10.0)

    def test_unknown_ceiling_name_is_infinite(self):
        config = config_service.build_suite_config()
        self.assertEqual(config.ceiling("missing"), math.inf)
        self.assertEqual(config.ceiling("good_lambda"), 1.0 + 1e-9)


def test_read_config_file_reports_position(tmp_path):
    path = tmp_path / "suite.json"
    path.write_text('{\n  "m": 1,\n  oops\n}', encoding="utf-8")

    try:
        config_service.read_config_file(str(path))
    except InputError as exc:
        assert exc.line == 3
        assert exc.position.startswith(str(path))
    else:
        raise AssertionError("se esperaba InputError")


def test_read_config_file_requires_object(tmp_path):
    path = tmp_path / "suite.json"
    path.write_text("[1, 2]", encoding="utf-8")

    try:
        config_service.read_config_file(str(path))
    except InputError:
        pass
    else:
        raise AssertionError("se esperaba InputError")


def test_to_dict_roundtrips_through_build(monkeypatch, tmp_path):
    monkeypatch.setattr(config_service, "CONFIG_FILE", str(tmp_path / "config.json"))
    config = config_service.build_suite_config({"levels": [1, 2], "trials": 5})

    again = config_service.build_suite_config(base=config.to_dict())
    assert again == config


if __name__ == "__main__":
    unittest.main()
