import math
import sys
import unittest
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.dyadic_service import GoodnessParams, GoodStatus, grid_from_seed, standard_grid
from services.geometry_service import Cube, generate
from services.harness_errors import AccretivityError, GridWindowError
from services.kernel_service import build_kernel
from services.martingale_service import (
    AccretiveSystem,
    DyadicTree,
    GoodnessFilter,
    TestbedDomain,
    bad_part_norm_mc,
    grid_window,
    lp_norm,
    mean_estimate,
    mz_randomization_ratio,
    paraproduct_ratio,
    principal_cubes,
    project,
    square_function_norms,
)

DOMAIN = TestbedDomain(Cube((0.5, 0.5), 1.0))


def _tree(seed=3, level=3):
    mu = generate("cantor4corner", level)
    grid = grid_from_seed(seed, *grid_window(mu, DOMAIN), mu.dim)
    return DyadicTree(mu, grid, DOMAIN)


class DomainTests(unittest.TestCase):
    def test_top_scale(self):
        self.assertEqual(DOMAIN.u0, -2)
        self.assertEqual(DOMAIN.top_level, 2)
        self.assertEqual(TestbedDomain(Cube((0.5,), 0.5)).u0, -3)

    def test_rejects_nonpositive_lambda(self):
        with self.assertRaises(ValueError):
            TestbedDomain(Cube((0.5,), 0.5), 0.0)

    def test_window_must_hold_top(self):
        mu = generate("cantor4corner", 2)
        with self.assertRaises(GridWindowError):
            DyadicTree(mu, standard_grid(0, 1, 2), DOMAIN)


class TreeTests(unittest.TestCase):
    def setUp(self):
        self.tree = _tree()

    def test_separates_atoms(self):
        self.assertTrue(self.tree.separated)
        self.assertTrue(self.tree.covered.all())
        self.assertEqual(self.tree.count(self.tree.fine), self.tree.mu.size)

    def test_masses_are_conserved(self):
        for k in self.tree.levels:
            self.assertAlmostEqual(float(self.tree.mass[k].sum()), 1.0)

    def test_parent_ids_point_to_containing_cube(self):
        k = self.tree.top + 1
        parents = self.tree.refs(k - 1)
        for i, ref in enumerate(self.tree.refs(k)):
            parent = parents[self.tree.parent_ids(k)[i]]
            self.assertEqual(self.tree.grid.parent(ref), parent)

    def test_unknown_cube(self):
        ref = self.tree.grid.cube_containing([5.0, 5.0], self.tree.top)
        with self.assertRaises(ValueError):
            self.tree.ref_id(ref)


class AccretiveSystemTests(unittest.TestCase):
    def setUp(self):
        self.tree = _tree()
        rng = np.random.default_rng(8)
        self.f = rng.uniform(-1, 1, self.tree.mu.size)
        self.b = np.exp(1j * rng.uniform(-0.5, 0.5, self.tree.mu.size))

    def test_reconstruction_with_accretive_b(self):
        system = AccretiveSystem(self.tree, self.b)
        result = system.reconstruct(self.f)

        self.assertLess(result.remainder, 1e-10)
        self.assertEqual(result.leaked, 0)
        self.assertLess(system.reconstruct_star(self.f).remainder, 1e-10)

    def test_expectation_of_b_is_one(self):
        system = AccretiveSystem(self.tree, self.b)
        for ref in self.tree.cubes():
            self.assertAlmostEqual(abs(system.expectation(self.b, ref) - 1.0), 0.0)

    def test_plain_differences_are_orthogonal(self):
        system = AccretiveSystem(self.tree)
        weights = self.tree.mu.real_weights
        energy = sum(lp_norm(system.level_difference(k, self.f), weights, 2.0) ** 2 for k in system.difference_levels())

        self.assertAlmostEqual(energy, lp_norm(self.f, weights, 2.0) ** 2)

    def test_square_function_constants_for_constant_b(self):
        norms = square_function_norms(AccretiveSystem(self.tree), self.f, 2.0)

        self.assertAlmostEqual(norms.lower, 1.0)
        self.assertAlmostEqual(norms.upper, 1.0)

    def test_delta_is_localised(self):
        system = AccretiveSystem(self.tree, self.b)
        ref = self.tree.refs(self.tree.top)[0]

        delta = system.delta(self.f, ref)
        self.assertTrue(np.all(delta[~self.tree.cube_mask(ref)] == 0))
        with self.assertRaises(ValueError):
            system.difference(self.f, self.tree.refs(self.tree.top)[0])
        with self.assertRaises(ValueError):
            system.martingale("X", self.f, ref)

    def test_accretivity_bounds(self):
        with self.assertRaises(AccretivityError):
            AccretiveSystem(self.tree, c_b=2.0)
        with self.assertRaises(AccretivityError):
            AccretiveSystem(self.tree, C_b=0.5)
        system = AccretiveSystem(self.tree, self.b)
        self.assertGreater(system.c_b, 0.0)
        self.assertAlmostEqual(system.C_b, 1.0)


class ProjectionTests(unittest.TestCase):
    def test_good_and_bad_parts_split_the_reconstruction(self):
        tree = _tree(seed=4)
        system = AccretiveSystem(tree)
        f = np.random.default_rng(1).uniform(-1, 1, tree.mu.size)
        other = grid_from_seed(5, tree.grid.k_min, tree.grid.k_max, 2)

        parts = project(system, f, GoodnessFilter((other,), GoodnessParams(0.5, 1)))
        np.testing.assert_allclose(parts.good + parts.bad, system.reconstruct(f).values, atol=1e-12)
        self.assertEqual(sum(parts.counts.values()), sum(tree.count(k) for k in system.difference_levels()))

    def test_indeterminate_counts_as_bad_only_when_strict(self):
        grid = standard_grid(0, 4, 1)
        cube = Cube((0.5,), 0.5)
        params = GoodnessParams(0.5, 4)

        self.assertEqual(GoodnessFilter((grid,), params).status(cube), GoodStatus.INDETERMINATE)
        self.assertTrue(GoodnessFilter((grid,), params).is_bad(cube))
        self.assertFalse(GoodnessFilter((grid,), params, strict=False).is_bad(cube))


def test_principal_cubes_for_constant_function():
    tree = _tree()
    cubes = principal_cubes(tree, np.ones(tree.mu.size))

    assert len(cubes.family) == tree.count(tree.top)
    assert cubes.stopping_bound == pytest.approx(1.0)
    assert cubes.carleson_constant == pytest.approx(1.0)


def test_principal_cubes_stop_on_concentration():
    tree = _tree()
    top_labels = tree.labels(tree.top)
    crowded = int(np.argmax(np.bincount(top_labels)[top_labels]))
    phi = np.zeros(tree.mu.size)
    phi[crowded] = 1.0

    cubes = principal_cubes(tree, phi)
    assert len(cubes.family) > tree.count(tree.top)
    assert cubes.stopping_bound <= 2.0
    assert all(cubes.parent[ref] is None for ref in cubes.family if ref.level == tree.top)


def test_paraproduct_ratio_is_finite():
    tree = _tree()
    rng = np.random.default_rng(2)
    ratio = paraproduct_ratio(AccretiveSystem(tree), rng.uniform(0, 1, tree.mu.size), rng.uniform(-1, 1, tree.mu.size), 2.0)

    assert 0.0 <= ratio < math.inf


def test_randomization_ratio_single_term_is_one():
    mu = generate("cantor1d", 2, dim=1)
    rng = np.random.default_rng(6)
    fs, gs, hs = (rng.uniform(-1, 1, (1, mu.size)) for _ in range(3))

    ratio = mz_randomization_ratio(build_kernel("scalar", 1.0), mu, fs, gs, hs, 2.0, 2.0, 1.0)
    assert ratio == pytest.approx(1.0)


def test_mean_estimate():
    estimate = mean_estimate([1.0, 2.0, 3.0])

    assert estimate.mean == 2.0
    assert estimate.stderr == pytest.approx(1.0 / math.sqrt(3))
    assert mean_estimate([]).trials == 0


def test_lp_norm_sup():
    assert lp_norm(np.array([1.0, -3.0, 5.0]), np.array([1.0, 1.0, 0.0]), math.inf) == 3.0


def test_bad_part_estimate_is_deterministic():
    mu = generate("cantor4corner", 2)
    f = np.ones(mu.size)
    params = GoodnessParams(0.5, 1)

    first = bad_part_norm_mc(mu, f, DOMAIN, params, 3, np.random.default_rng(12))
    second = bad_part_norm_mc(mu, f, DOMAIN, params, 3, np.random.default_rng(12))
    assert first == second
    assert first.trials == 3
    assert first.mean >= 0.0


def test_strict_goodness_counts_undecided_cubes_as_bad():
    mu = generate("cantor4corner", 2)
    f = np.cos(7.0 * mu.points[:, 0]) + mu.points[:, 1]
    params = GoodnessParams(0.5, 1)

    strict = bad_part_norm_mc(mu, f, DOMAIN, params, 4, np.random.default_rng(5))
    lax = bad_part_norm_mc(mu, f, DOMAIN, params, 4, np.random.default_rng(5), strict=False)
    assert strict.mean >= lax.mean - 1e-12
