import sys
import unittest
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.dyadic_service import grid_from_seed
from services.geometry_service import Cube, generate
from services.harness_errors import GridWindowError
from services.martingale_service import AccretiveSystem, DyadicTree, TestbedDomain, grid_window
from services.surgery_service import (
    bad_level_mask,
    bad_region_mask,
    bad_square_function_mc,
    common_pieces,
    surgery_exponent,
    surgery_partition,
)

UNIT = Cube((0.5, 0.5), 0.5)
OFFSET = 2


class ExponentTests(unittest.TestCase):
    def test_bracket(self):
        for theta in (0.25, 0.3, 0.9):
            j = surgery_exponent(theta, 20)
            self.assertLessEqual(2.0 ** (-21) * theta, 2.0**j)
            self.assertLess(2.0**j, 2.0 ** (-20) * theta)

    def test_theta_range(self):
        with self.assertRaises(ValueError):
            surgery_exponent(1.0)


class PartitionTests(unittest.TestCase):
    def setUp(self):
        self.mu = generate("random", count=200, seed=3)
        self.grid4 = grid_from_seed(1, 0, 6, 2)

    def test_triple_surgery_is_a_partition(self):
        part = surgery_partition(self.mu, "triple", [UNIT, UNIT, UNIT], 0.25, self.grid4, offset=OFFSET)
        audit = part.audit()

        self.assertTrue(audit.exact)
        self.assertEqual(audit.piece_count, len(part.pieces))
        self.assertFalse(part.sep.any())
        self.assertTrue(part.boundary.any())
        self.assertTrue(part.delta.any())

    def test_interior_pieces_are_certified(self):
        part = surgery_partition(self.mu, "triple", [UNIT, UNIT, UNIT], 0.25, self.grid4, offset=OFFSET)

        shared = common_pieces(part, part)
        self.assertEqual(len(shared), len(part.pieces))
        self.assertTrue(all(piece.certified for piece in shared))

    def test_disjoint_cubes_leave_no_pieces(self):
        left, right = Cube((0.25, 0.5), 0.25), Cube((0.75, 0.5), 0.25)
        part = surgery_partition(self.mu, "triple", [left, right, right], 0.25, self.grid4, offset=OFFSET)

        self.assertTrue(part.audit().exact)
        self.assertEqual(part.pieces, [])
        np.testing.assert_array_equal(part.sep | part.boundary, left.mask(self.mu.points))

    def test_pair_surgery_is_a_partition(self):
        part = surgery_partition(self.mu, "pair", [UNIT, UNIT], 0.25, self.grid4, t_small=1e6, offset=OFFSET)

        self.assertTrue(part.audit().exact)
        for piece in part.pieces:
            self.assertTrue(piece.region.closed)

    def test_argument_errors(self):
        with self.assertRaises(ValueError):
            surgery_partition(self.mu, "triple", [UNIT, UNIT], 0.25, self.grid4, offset=OFFSET)
        with self.assertRaises(ValueError):
            surgery_partition(self.mu, "pair", [UNIT, UNIT], 0.25, self.grid4, offset=OFFSET)
        with self.assertRaises(GridWindowError):
            surgery_partition(self.mu, "triple", [UNIT, UNIT, UNIT], 0.25, self.grid4)

    def test_to_dict_lists_parts(self):
        part = surgery_partition(self.mu, "triple", [UNIT, UNIT, UNIT], 0.25, self.grid4, offset=OFFSET)
        data = part.to_dict()

        listed = len(data["sep"]) + len(data["boundary"]) + sum(len(p["atoms"]) for p in data["pieces"])
        self.assertEqual(listed, self.mu.size)


def test_bad_level_mask_grows_with_spread():
    rng = np.random.default_rng(4)
    points = rng.uniform(0, 1, (50, 2))
    grids = [grid_from_seed(s, -2, 8, 2) for s in (1, 2, 3)]

    narrow = bad_level_mask(points, 0.25, grids, 0.25, offset=OFFSET)
    wide = bad_level_mask(points, 0.25, grids, 0.25, spread=1, offset=OFFSET)
    assert np.all(wide[narrow])
    assert bad_level_mask(np.zeros((0, 2)), 0.25, grids, 0.25, offset=OFFSET).shape == (0,)


def test_bad_region_only_inside_cube():
    mu = generate("uniform_cube", count=64, dim=2)
    grids = [grid_from_seed(s, -2, 8, 2) for s in (1, 2, 3)]
    cube = Cube((0.25, 0.25), 0.25)

    mask = bad_region_mask(mu, cube, grids, 0.25, offset=OFFSET)
    assert not np.any(mask & ~cube.mask(mu.points))


def test_bad_square_function_is_below_full_square_function():
    mu = generate("cantor4corner", 2)
    domain = TestbedDomain(Cube((0.5, 0.5), 1.0))
    tree = DyadicTree(mu, grid_from_seed(3, *grid_window(mu, domain), 2), domain)
    f = np.random.default_rng(2).uniform(-1, 1, mu.size)

    estimate = bad_square_function_mc(AccretiveSystem(tree), f, 0.25, 4, np.random.default_rng(5), offset=OFFSET)
    assert estimate.trials == 4
    assert 0.0 <= estimate.mean <= 1.0 + 1e-12
    assert estimate.mean == pytest.approx(
        bad_square_function_mc(AccretiveSystem(tree), f, 0.25, 4, np.random.default_rng(5), offset=OFFSET).mean
    )
