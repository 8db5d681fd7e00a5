import math
import sys
import unittest
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.geometry_service import AtomicMeasure, Cube, generate
from services.harness_errors import PreconditionError
from services.square_function_service import (
    ScaleQuadrature,
    build_family,
    bv,
    bv_profile,
    bv_reference,
    theta_bound_ratio,
    theta_t,
    t1_testing_statistic,
    verify_sq_kernel,
)

FAMILY = build_family(1.0, 1.0)


def _atom(coord, resolution=0.5):
    return AtomicMeasure(np.array([[coord]], dtype=float), np.ones(1), resolution)


def _theta_hand(t):
    return t**2 / ((t + 1) ** 2 * (t + 2) ** 2)


class ThetaTests(unittest.TestCase):
    def test_two_atom_value(self):
        self.assertAlmostEqual(theta_t(FAMILY, _atom(1.0), _atom(2.0), [0.0], 1.0).real, 1.0 / 36.0)

    def test_pointwise_family_matches_sum(self):
        self.assertAlmostEqual(FAMILY(0.7, [0.0], [1.0], [2.0]), theta_t(FAMILY, _atom(1.0), _atom(2.0), [0.0], 0.7))

    def test_scale_must_be_positive(self):
        with self.assertRaises(ValueError):
            theta_t(FAMILY, _atom(1.0), _atom(2.0), [0.0], 0.0)
        with self.assertRaises(ValueError):
            build_family(1.0, 1.0, decay=0.0)

    def test_bound_ratio_is_finite(self):
        ratio = theta_bound_ratio(FAMILY, _atom(1.0), _atom(2.0), [0.0], 1.0)

        self.assertTrue(0.0 < ratio < math.inf)


class QuadratureTests(unittest.TestCase):
    def setUp(self):
        self.quad = ScaleQuadrature(1e-3, 1e3, 8)

    def test_matches_adaptive_reference(self):
        value = bv(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad)
        reference = bv_reference(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad)

        self.assertLess(abs(value - reference), 0.01 * reference)

    def test_cutoff_never_increases(self):
        full = bv(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad)
        for cutoff in (1e-4, 0.5, 2.0, 10.0):
            self.assertLessEqual(bv(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad.truncated(cutoff)), full + 1e-15)
        self.assertEqual(bv(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad.truncated(1e-4)), 0.0)

    def test_profile_reports_decay(self):
        result = bv_profile(FAMILY, _atom(1.0), _atom(2.0), [0.0], self.quad)

        self.assertTrue(result.convergent)
        self.assertEqual(result.nodes, len(self.quad.nodes()))
        self.assertLess(result.lower_tail, 1e-10)
        self.assertLess(result.upper_tail, 1e-10)

    def test_refined_grid(self):
        self.assertEqual(self.quad.refined().per_octave, 16)
        self.assertGreater(len(self.quad.refined().nodes()), len(self.quad.nodes()))

    def test_window_validation(self):
        with self.assertRaises(ValueError):
            ScaleQuadrature(1.0, 1.0)
        with self.assertRaises(ValueError):
            ScaleQuadrature(0.1, 1.0, per_octave=2)

    def test_window_from_measure(self):
        mu = generate("cantor1d", 2, dim=1)
        quad = ScaleQuadrature.for_measure(mu)

        self.assertEqual(quad.t_min, mu.resolution)
        self.assertAlmostEqual(quad.t_max, 16.0 * mu.diameter())


class KernelAuditTests(unittest.TestCase):
    def test_size_ratio_is_one(self):
        audit = verify_sq_kernel(FAMILY, 2, 1e-3, 1.0, samples=500, seed=3)

        self.assertAlmostEqual(audit.ratios["size"], 1.0)
        for name in ("x_holder", "y_holder", "z_holder"):
            self.assertTrue(math.isfinite(audit.ratios[name]))
        self.assertEqual(len(audit.witnesses["size"]), 3)


class TestingStatisticTests(unittest.TestCase):
    def setUp(self):
        self.mu = generate("cantor4corner", 2)
        self.unit = Cube((0.5, 0.5), 0.5)

    def test_empty_cube(self):
        self.assertIsNone(t1_testing_statistic(FAMILY, self.mu, Cube((5.0, 5.0), 0.5), None, 1.0))

    def test_all_exceptional(self):
        value = t1_testing_statistic(FAMILY, self.mu, self.unit, np.ones(self.mu.size, dtype=bool), 1.0)

        self.assertEqual(value, 0.0)

    def test_statistic_is_positive(self):
        value = t1_testing_statistic(FAMILY, self.mu, self.unit, None, 1.0)

        self.assertGreater(value, 0.0)
        self.assertTrue(math.isfinite(value))

    def test_precondition(self):
        with self.assertRaises(PreconditionError):
            t1_testing_statistic(FAMILY, self.mu, self.unit, None, 1.0, beta=0.5, c1=1.0)


@given(st.floats(min_value=1e-2, max_value=1e2))
@settings(max_examples=50, deadline=None)
def test_theta_closed_form(t):
    assert theta_t(FAMILY, _atom(1.0), _atom(2.0), [0.0], t).real == pytest.approx(_theta_hand(t))
