import sys
import unittest
from pathlib import Path

import numpy as np

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.decomposition_service import (
    VerificationReport,
    cz_decompose,
    level_set_region,
    verify_cz,
    verify_whitney,
    whitney,
)
from services.geometry_service import AtomicMeasure, Cube, CubeUnion, generate
from services.harness_errors import PreconditionError


def _spike(mu, value=20.0, where=0):
    f = np.zeros(mu.size)
    f[where] = value
    return mu.density(f)


class CZDecompositionTests(unittest.TestCase):
    def setUp(self):
        self.mu = generate("cantor1d", 3, dim=1)
        self.nu = _spike(self.mu)

    def test_threshold_is_a_precondition(self):
        # 2^(n+1) ||nu|| / ||mu|| = 4 * 2.5
        with self.assertRaises(PreconditionError):
            cz_decompose(self.nu, self.mu, 10.0)

    def test_spike_is_covered_and_verified(self):
        decomposition = cz_decompose(self.nu, self.mu, 12.0)

        self.assertEqual(len(decomposition.cubes), 1)
        self.assertTrue(decomposition.cubes[0].mask(self.nu.points[:1])[0])
        report = verify_cz(decomposition, self.nu, self.mu)
        self.assertTrue(report.passed, report.failures())

    def test_good_part_vanishes_off_the_support(self):
        decomposition = cz_decompose(self.nu, self.mu, 12.0)

        covered = decomposition.cubes[0].mask(self.mu.points)
        np.testing.assert_allclose(decomposition.f[~covered], 0.0)

    def test_high_level_selects_nothing(self):
        decomposition = cz_decompose(self.nu, self.mu, 1e4)

        self.assertEqual(decomposition.cubes, [])
        self.assertAlmostEqual(decomposition.f[0].real, 20.0)
        self.assertTrue(verify_cz(decomposition, self.nu, self.mu).passed)

    def test_beta_has_zero_mass_on_ancestor(self):
        decomposition = cz_decompose(self.nu, self.mu, 12.0)

        self.assertLess(abs(decomposition.beta_mass(self.nu, self.mu, 0)), 1e-12)
        self.assertIn("max_overlap", decomposition.to_dict())

    def test_rejects_signed_reference(self):
        signed = self.mu.density(np.where(np.arange(self.mu.size) % 2, 1.0, -1.0))
        with self.assertRaises(ValueError):
            cz_decompose(self.nu, signed, 50.0)


class WhitneyTests(unittest.TestCase):
    def setUp(self):
        self.mu = generate("random", count=200, seed=11)
        self.omega = CubeUnion((Cube((0.5, 0.5), 0.5),))

    def test_cover_properties(self):
        cover = whitney(self.omega, self.mu, 64.0)
        report = verify_whitney(cover, self.omega, self.mu, 64.0)
        passed = {entry.name: entry.passed for entry in report.entries}

        self.assertTrue(cover.cubes)
        self.assertGreaterEqual(cover.R, 10.0)
        for name in ("inside", "bounded_overlap", "disjoint_interiors", "refined_nested", "refined_disjoint"):
            self.assertTrue(passed[name], name)

    def test_escape_factor_below_twenty(self):
        # la dyádica que contiene el centro queda con lado 1/16 y escapa recién con 15 Q
        mu = AtomicMeasure(np.array([[0.5, 0.5]]), np.array([1.0]), 0.01)
        cover = whitney(self.omega, mu, 64.0)
        report = verify_whitney(cover, self.omega, mu, 64.0)

        self.assertEqual(len(cover.cubes), 1)
        self.assertEqual(cover.cubes[0].halfside, 1 / 32)
        self.assertTrue(self.omega.contains_cube(cover.cubes[0].scaled(14.0)))
        self.assertGreater(cover.R, 20.0)
        escape = next(entry for entry in report.entries if entry.name == "escape")
        self.assertTrue(escape.passed)
        self.assertEqual(escape.value, cover.R)

    def test_cubes_carry_mass(self):
        cover = whitney(self.omega, self.mu, 64.0)

        for cube in cover.cubes:
            self.assertGreater(self.mu.mass(cube).real, 0.0)

    def test_empty_region(self):
        cover = whitney(CubeUnion(()), self.mu, 64.0)

        self.assertEqual(cover.cubes, [])
        self.assertFalse(cover.stalled)

    def test_level_set_region_surrounds_atoms(self):
        mask = np.zeros(self.mu.size, dtype=bool)
        mask[:5] = True
        region = level_set_region(self.mu, mask, 0.5)

        self.assertTrue(region.mask(self.mu.points[:5]).all())


def test_verification_report_collects_failures():
    report = VerificationReport("demo")
    report.add("ok", True, 1.0)
    report.add("ko", False, 2.0, 1.0, "detalle")

    assert not report.passed
    assert report.failures() == ["ko"]
    assert report.to_dict()["entries"][1] == {"name": "ko", "passed": False, "value": 2.0, "bound": 1.0, "detail": "detalle"}
