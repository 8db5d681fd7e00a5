import math
import sys
import unittest
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services import check_service
from services.check_service import (
    CHECKS,
    CheckDefinition,
    CheckReport,
    LevelResult,
    build_check_kernel,
    build_instance,
    check_names,
    check_seed,
    level_set_sup,
    make_context,
    run_check,
    stability_floor,
    stability_ratio,
)
from services.config_service import SuiteConfig, build_suite_config
from services.geometry_service import AtomicMeasure, Cube
from services.harness_errors import BudgetError, ConfigError, InputError, PreconditionError, SuppressionError
from services.square_function_service import qualifies
from services.suite_service import run_suite

CONFIG = SuiteConfig(levels=(1, 2), trials=10, mc_trials=200)

EXPECTED_CHECKS = {
    "cotlar_adapted",
    "weak_to_strong",
    "improved_testing",
    "cotlar_basic",
    "weak_type",
    "good_lambda",
    "small_boundary_pairing",
    "improved_size",
    "suppression_bound",
    "basic_integral",
    "truncation_comparison",
    "separation",
    "suppression_comparison",
    "basic_bound",
    "bad_probability",
    "bad_square_function",
    "square_function_norms",
    "mz_randomization",
    "fefferman_stein",
    "paraproduct",
    "t1_testing",
    "bv_quadrature",
    "martingale_identities",
    "cz_decomposition",
    "whitney_cover",
}


def _install(monkeypatch, measure, *, stability=False, per_level=True, scales_ceiling=False):
    definition = CheckDefinition("demo", measure, stability, per_level, "prueba", scales_ceiling)
    monkeypatch.setitem(check_service.CHECKS, "demo", definition)


def _measure(name, config=CONFIG, level=2, **kwargs):
    return CHECKS[name].measure(make_context(config, name, level, **kwargs))


class LevelSetTests(unittest.TestCase):
    def test_sup_over_atom_values(self):
        # lambda -> 2^-: 2 * mu({v >= 2}) = 4
        self.assertEqual(level_set_sup(np.array([3.0, 1.0, 2.0]), np.ones(3), 1.0), 4.0)

    def test_ties_share_their_mass(self):
        self.assertEqual(level_set_sup(np.array([2.0, 2.0]), np.ones(2), 1.0), 4.0)

    def test_mass_power(self):
        self.assertAlmostEqual(level_set_sup(np.array([1.0]), np.array([4.0]), 2.0, 0.5), 2.0)

    def test_nonpositive_values(self):
        self.assertEqual(level_set_sup(np.array([0.0, -1.0]), np.ones(2), 1.0), 0.0)
        self.assertEqual(level_set_sup(np.array([]), np.array([]), 1.0), 0.0)


class StabilityTests(unittest.TestCase):
    def test_largest_consecutive_factor(self):
        self.assertEqual(stability_ratio({1: 1.0, 2: 2.0, 3: 1.5}), 2.0)

    def test_negligible_constants_are_skipped(self):
        self.assertIsNone(stability_ratio({1: 1e-12, 2: 1.0}))
        self.assertIsNone(stability_ratio({1: 1.0}))

    def test_non_finite_is_unstable(self):
        self.assertEqual(stability_ratio({1: math.inf, 2: 1.0}), math.inf)

    def test_floor_follows_the_ceiling(self):
        # 1e-5 es ruido para un techo de 50
        self.assertIsNone(stability_ratio({1: 1e-5, 2: 1.0}, stability_floor(50.0)))
        self.assertEqual(stability_floor(math.inf), 1e-9)
        self.assertEqual(stability_floor(1e-10), 1e-9)


class FieldTests(unittest.TestCase):
    def test_same_values_at_every_level(self):
        points = np.array([[0.1, 0.2], [0.7, 0.4], [0.9, 0.95]])
        coarse = make_context(CONFIG, "cotlar_basic", 1)
        fine = make_context(CONFIG, "cotlar_basic", 2)

        np.testing.assert_array_equal(coarse.field("f", points=points), fine.field("f", points=points))
        self.assertFalse(np.array_equal(coarse.field("f", points=points), coarse.field("g", points=points)))

    def test_values_stay_in_range(self):
        ctx = make_context(CONFIG, "good_lambda", 2)
        signed = ctx.field("f")
        positive = ctx.field("f", low=0.0)

        self.assertEqual(signed.shape, (16,))
        self.assertTrue(np.all((signed >= -1.0) & (signed <= 1.0)))
        self.assertTrue(np.all((positive >= 0.0) & (positive <= 1.0)))

    def test_stream_ignores_the_level(self):
        first = make_context(CONFIG, "paraproduct", 1).stream("grid").integers(1000, size=4)
        second = make_context(CONFIG, "paraproduct", 2).stream("grid").integers(1000, size=4)

        np.testing.assert_array_equal(first, second)

    def test_field_without_instance_needs_points(self):
        ctx = make_context(CONFIG, "bad_probability", None)
        with self.assertRaises(ValueError):
            ctx.field("f")


class ConstructedInstanceTests(unittest.TestCase):
    def test_cotlar_adapted_single_atom(self):
        mu = AtomicMeasure(np.array([[0.3, 0.6]]), np.array([1.0]), 0.01)
        result = _measure("cotlar_adapted", level=None, mu=mu)

        self.assertEqual(result.constant, 0.0)

    def test_cotlar_adapted_reports_tau_curve(self):
        result = _measure("cotlar_adapted")
        taus = [tau for tau, _ in result.detail["curve"]]
        values = [value for _, value in result.detail["curve"]]

        self.assertEqual(taus, [0.25, 0.125, 0.0625])
        self.assertGreater(result.constant, 0.0)
        self.assertEqual(result.constant, values[0])
        self.assertTrue(result.verdict)
        self.assertEqual(result.hypothesis, result.detail["weak_testing_constant"])
        self.assertLess(result.detail["delta"], 3 * 4.0**-2)

    def test_weak_type_vanishes_for_zero_kernel(self):
        config = replace(CONFIG, trials=3)
        kernel = build_check_kernel(config).scaled(0.0)
        result = _measure("weak_type", config, kernel=kernel)

        self.assertEqual(result.constant, 0.0)

    def test_weak_type_ignores_atom_order(self):
        config = replace(CONFIG, trials=3)
        mu = build_instance(config, 2)
        order = np.random.default_rng(3).permutation(mu.size)
        shuffled = AtomicMeasure(mu.points[order], mu.weights[order], mu.resolution)

        first = _measure("weak_type", config, mu=mu).constant
        second = _measure("weak_type", config, mu=shuffled).constant
        self.assertGreater(first, 0.0)
        self.assertEqual(second, pytest.approx(first, rel=1e-9))

    def test_good_lambda_zero_kernel_is_vacuous(self):
        kernel = build_check_kernel(CONFIG).scaled(0.0)
        result = _measure("good_lambda", kernel=kernel)

        self.assertEqual(result.constant, 0.0)
        self.assertEqual(result.trials, 0)
        self.assertTrue(result.verdict)

    def test_small_boundary_pairing_single_shell_atom(self):
        # Q centrado en (0.12125, 0.02125) con semilado 0.105: un átomo adentro y otro en 2Q fuera de Q
        mu = AtomicMeasure(np.array([[0.1, 0.1], [0.3, 0.1]]), np.array([1.0, 1.0]), 0.01)
        result = _measure("small_boundary_pairing", level=None, mu=mu)

        self.assertEqual(result.detail["inside"], 1)
        self.assertEqual(result.detail["shell"], 1)
        # K = 1 / 0.2^2 contra t mu(2Q) = 64 * 2
        self.assertAlmostEqual(result.constant, 25.0 / 128.0)

    def test_small_boundary_pairing_sees_cantor_atoms(self):
        result = _measure("small_boundary_pairing")

        # un hijo de nivel 2 en Q y sus tres hermanos en 2Q
        self.assertEqual(result.detail["inside"], 1)
        self.assertEqual(result.detail["shell"], 3)
        self.assertGreater(result.constant, 0.0)

    def test_improved_testing_full_strip_is_zero(self):
        result = _measure("improved_testing", replace(CONFIG, eta_grid=(1.0,)))

        self.assertEqual(result.constant, 0.0)
        self.assertIsNotNone(result.hypothesis)

    def test_qualifying_cube_found_at_level_four(self):
        mu = build_instance(CONFIG, 4)
        cube = check_service._qualifying_cube(mu, CONFIG)

        self.assertFalse(qualifies(mu, Cube((0.5, 0.5), 0.5), CONFIG.doubling_constant, CONFIG.t))
        self.assertGreater(cube.halfside, 0.5)
        self.assertTrue(qualifies(mu, cube, CONFIG.doubling_constant, CONFIG.t))

    def test_bad_square_function_reads_goodness_flag(self):
        config = replace(CONFIG, trials=2, goodness_strict=False)
        result = _measure("bad_square_function", config)

        self.assertIs(result.detail["goodness_strict"], False)
        self.assertIn("mean", result.detail["bad_part_norm"])


class RegistryTests(unittest.TestCase):
    def test_every_check_is_registered(self):
        self.assertEqual(set(check_names()), EXPECTED_CHECKS)

    def test_seed_tuple(self):
        self.assertEqual(check_seed(CONFIG, "weak_type", 3), (CONFIG.seed, zlib.crc32(b"weak_type"), 3))
        self.assertEqual(check_seed(CONFIG, "bad_probability", None)[-1], 0)

    def test_unknown_check(self):
        with self.assertRaises(ConfigError):
            run_check("no_existe", CONFIG)

    def test_resolution_floor(self):
        with self.assertRaises(BudgetError):
            build_instance(replace(CONFIG, resolution_floor=0.1), 4)
        self.assertEqual(build_instance(CONFIG, 2).size, 16)


class ReportTests(unittest.TestCase):
    def test_to_dict_is_json_safe(self):
        report = CheckReport("demo", math.nan, np.array([1.0, 2.0]), 0, None, 7, math.inf, per_level={2: np.float64(0.5)})
        data = report.to_dict()

        self.assertIsNone(data["pass"])
        self.assertEqual(data["constant"], "nan")
        self.assertEqual(data["ceiling"], "inf")
        self.assertEqual(data["witness"], [1.0, 2.0])
        self.assertEqual(data["per_level"], {"2": 0.5})
        self.assertNotIn("skipped", data)
        self.assertEqual(replace(report, skipped="motivo").to_dict()["skipped"], "motivo")


def test_real_check_is_reproducible():
    config = replace(CONFIG, levels=(2,))
    first = run_check("martingale_identities", config)
    second = run_check("martingale_identities", config)

    assert first.to_dict() == second.to_dict()
    assert first.passed is True
    assert first.constant < 1e-10
    assert set(first.detail) == {"level_2"}


def test_worst_level_and_stability(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(float(ctx.level), {"level": ctx.level}, trials=2), stability=True)
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 5.0}))

    assert report.constant == 2.0
    assert report.witness == {"level": 2}
    assert report.trials == 4
    assert report.stability == 2.0
    assert report.passed is True
    assert report.per_level == {1: 1.0, 2: 2.0}


def test_stability_factor_fails_the_check(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(10.0 ** ctx.level), stability=True)
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 1e3}))

    assert report.stability == 10.0
    assert report.passed is False


def test_false_verdict_fails_the_check(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(0.0, verdict=ctx.level == 1))
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 1.0}))

    assert report.passed is False


def test_global_check_runs_once(monkeypatch):
    calls = []

    def measure(ctx):
        calls.append(ctx.mu)
        return LevelResult(0.5, detail={"x": 1})

    _install(monkeypatch, measure, per_level=False)
    report = run_check("demo", CONFIG)

    assert calls == [None]
    assert report.detail == {"result": {"x": 1}}
    assert report.per_level == {}


def test_precondition_skips(monkeypatch):
    def measure(ctx):
        raise PreconditionError("sin cubo de borde pequeño")

    _install(monkeypatch, measure)
    report = run_check("demo", CONFIG)

    assert report.passed is None
    assert report.skipped == "sin cubo de borde pequeño"
    assert math.isnan(report.constant)


def test_numerical_failure_is_reported(monkeypatch):
    def measure(ctx):
        raise SuppressionError("no converge")

    _install(monkeypatch, measure)
    report = run_check("demo", CONFIG)

    assert report.passed is False
    assert report.detail["error"]["code"] == "construction_failed"


def test_input_errors_propagate(monkeypatch):
    def measure(ctx):
        raise InputError("medida inválida")

    _install(monkeypatch, measure)
    with pytest.raises(InputError):
        run_check("demo", CONFIG)


def test_skips_are_per_level(monkeypatch):
    def measure(ctx):
        if ctx.level == 1:
            raise PreconditionError("sin cubo doblante en el nivel 1")
        return LevelResult(0.5)

    _install(monkeypatch, measure)
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 1.0}))

    assert report.passed is True
    assert report.skipped is None
    assert report.per_level == {2: 0.5}
    assert report.detail["level_1"] == {"skipped": "sin cubo doblante en el nivel 1"}


def test_ceiling_scales_with_measured_hypothesis(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(30.0, hypothesis=4.0), scales_ceiling=True)
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 10.0}))

    assert report.passed is True
    assert report.ceiling == 40.0
    assert report.detail["level_2"]["hypothesis"] == 4.0
    assert report.detail["level_2"]["ceiling"] == 40.0


def test_fixed_ceiling_ignores_hypothesis(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(30.0, hypothesis=4.0))
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 10.0}))

    assert report.passed is False
    assert report.ceiling == 10.0


def test_hypothesis_above_its_ceiling_skips(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(1.0, hypothesis=5e3))
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 10.0}))

    assert report.passed is None
    assert "supera su techo" in report.skipped


def test_non_finite_hypothesis_skips(monkeypatch):
    _install(monkeypatch, lambda ctx: LevelResult(1.0, hypothesis=math.inf if ctx.level == 1 else 1.0))
    report = run_check("demo", replace(CONFIG, ceilings={"demo": 10.0}))

    assert report.per_level == {2: 1.0}
    assert "no es finita" in report.detail["level_1"]["skipped"]


def test_default_config_passes_on_level_two():
    report = run_suite(build_suite_config({"levels": [2]}))

    assert report.failures() == []
    assert len(report.checks) == len(EXPECTED_CHECKS)
