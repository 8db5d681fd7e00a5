"""Surgery of a dyadic cube against one or two other cubes.

The atoms of the base cube are split into a separated part, a boundary
part and pieces cut out by a fine auxiliary grid Q whose cubes have side
2^{j(theta)} l(K), where 2^{-offset-1} theta <= 2^{j(theta)} < 2^{-offset} theta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .dyadic_service import CubeRef, DyadicGrid, grid_from_seed, skeleton_distance
from .geometry_service import AtomicMeasure, Cube, boundary_gap, find_small_boundary_between
from .harness_errors import GridWindowError
from .martingale_service import AccretiveSystem, MeanEstimate, lp_norm, mean_estimate

logger = logging.getLogger(__name__)

SurgeryMode = Literal["triple", "pair"]


def surgery_exponent(theta: float, offset: int = 20) -> int:
    """j(theta) with 2^{-offset-1} theta <= 2^j < 2^{-offset} theta."""
    if not 0 < theta < 1:
        raise ValueError("theta debe estar en (0, 1)")
    return math.ceil(math.log2(theta) - offset - 1)


def _level_of(side: float) -> int:
    level = -math.log2(side)
    if abs(level - round(level)) > 1e-9:
        raise ValueError(f"el lado {side:g} no es potencia de dos")
    return int(round(level))


def _closed_inside(inner: Cube, outer: Cube) -> bool:
    return bool(np.all(inner.lower >= outer.lower - 1e-15) and np.all(inner.upper <= outer.upper + 1e-15))


@dataclass(frozen=True, eq=False)
class SurgeryPiece:
    cube: CubeRef
    region: Cube
    atoms: np.ndarray
    is_cube: bool
    five_fold_inside: bool

    def to_dict(self) -> dict:
        return {
            "cube": self.cube.to_dict(),
            "region": self.region.to_dict(),
            "atoms": [int(i) for i in self.atoms],
            "is_cube": self.is_cube,
            "five_fold_inside": self.five_fold_inside,
        }


@dataclass(frozen=True)
class PartitionAudit:
    exact: bool
    overlaps: int
    missing: int
    piece_count: int


@dataclass(frozen=True, eq=False)
class SurgeryPartition:
    mode: SurgeryMode
    theta: float
    base: np.ndarray
    sep: np.ndarray
    boundary: np.ndarray
    pieces: list[SurgeryPiece] = field(default_factory=list)

    @property
    def delta(self) -> np.ndarray:
        mask = np.zeros_like(self.base)
        for piece in self.pieces:
            mask[piece.atoms] = True
        return mask

    def audit(self) -> PartitionAudit:
        """Every atom of the base cube lands in exactly one part."""
        hits = self.sep.astype(int) + self.boundary.astype(int)
        for piece in self.pieces:
            hits[piece.atoms] += 1
        overlaps = int(np.count_nonzero(hits > 1))
        missing = int(np.count_nonzero(self.base & (hits == 0)))
        stray = int(np.count_nonzero(~self.base & (hits > 0)))
        return PartitionAudit(overlaps == 0 and missing == 0 and stray == 0, overlaps, missing + stray, len(self.pieces))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "theta": self.theta,
            "sep": [int(i) for i in np.flatnonzero(self.sep)],
            "boundary": [int(i) for i in np.flatnonzero(self.boundary)],
            "pieces": [piece.to_dict() for piece in self.pieces],
        }


def surgery_partition(
    mu: AtomicMeasure,
    mode: SurgeryMode,
    cubes: Sequence[Cube],
    theta: float,
    grid4: DyadicGrid,
    *,
    base_index: int = 0,
    t_small: float | None = None,
    offset: int = 20,
) -> SurgeryPartition:
    """Split the atoms of ``cubes[base_index]``.

    ``cubes`` is (I, J, K) in triple mode and (I, K) in pair mode; the
    auxiliary cubes have side 2^{j(theta)} l(K) with K the last cube.
    """
    cubes = list(cubes)
    if mode == "triple" and len(cubes) != 3:
        raise ValueError("la cirugía triple necesita tres cubos")
    if mode == "pair":
        if len(cubes) != 2:
            raise ValueError("la cirugía de pares necesita dos cubos")
        if t_small is None:
            raise ValueError("la cirugía de pares necesita el parámetro t de borde pequeño")
    base_cube = cubes[base_index]
    others = [c for i, c in enumerate(cubes) if i != base_index]
    level = _level_of(cubes[-1].side) - surgery_exponent(theta, offset)
    if not grid4.k_min <= level <= grid4.k_max:
        raise GridWindowError(f"nivel de cirugía {level} fuera de [{grid4.k_min}, {grid4.k_max}]")

    points = mu.points
    base = base_cube.mask(points)
    common = base.copy()
    for c in others:
        common &= c.mask(points)
    boundary = np.zeros(mu.size, dtype=bool)
    pieces: list[SurgeryPiece] = []
    if not base.any():
        return SurgeryPartition(mode, theta, base, base.copy(), boundary, pieces)

    idx = grid4.index_array(points, level)
    members = np.flatnonzero(base)
    rows, inverse = np.unique(idx[members], axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    refs = [CubeRef(level, tuple(int(v) for v in row), grid4.grid_id) for row in rows]
    geoms = [grid4.geometry(ref) for ref in refs]

    near = np.zeros(len(refs), dtype=bool)
    for c in others:
        gaps = np.array([boundary_gap(q, c) for q in geoms])
        near |= gaps < theta * c.side / 2
    boundary[members] = near[inverse]

    in_common = common[members]
    regions: dict[int, Cube] = {}
    for g in np.unique(inverse[in_common & ~boundary[members]]):
        q = geoms[g]
        if mode == "triple":
            regions[g] = q.scaled(1 - theta).with_closed(True)
        else:
            lo, hi = (1 - theta) * q.halfside, (1 - theta / 2) * q.halfside
            regions[g] = find_small_boundary_between(mu, q.center, lo, hi, t_small).with_closed(True)

    if mode == "triple":
        inner_gap = np.array([geoms[g].boundary_distance(points[i][None, :])[0] for i, g in zip(members, inverse)])
        thin = inner_gap < theta * np.array([geoms[g].side for g in inverse])
        boundary[members] |= in_common & thin
    else:
        outside = np.array(
            [g in regions and not regions[g].mask(points[i][None, :])[0] for i, g in zip(members, inverse)]
        )
        boundary[members] |= in_common & outside

    sep = base & ~boundary & ~common
    rest = base & ~boundary & common
    for g in np.unique(inverse[rest[members]]):
        atoms = members[(inverse == g) & rest[members]]
        region = regions[g]
        is_cube = all(_closed_inside(region, c) for c in cubes)
        five = all(_closed_inside(region.scaled(5.0), c) for c in cubes) if is_cube else False
        pieces.append(SurgeryPiece(refs[g], region, atoms, is_cube, five))
    return SurgeryPartition(mode, theta, base, sep, boundary, pieces)


@dataclass(frozen=True)
class CommonPiece:
    cube: CubeRef
    certified: bool


def common_pieces(*partitions: SurgeryPartition) -> list[CommonPiece]:
    """Pieces cut by the same auxiliary cube in every partition; certified when they are cubes L with 5L inside."""
    if not partitions:
        return []
    shared = set.intersection(*({p.cube for p in part.pieces} for part in partitions))
    out = []
    for ref in sorted(shared, key=lambda r: r.index):
        found = [next(p for p in part.pieces if p.cube == ref) for part in partitions]
        out.append(CommonPiece(ref, all(p.is_cube and p.five_fold_inside for p in found)))
    return out


def bad_level_mask(
    points: np.ndarray,
    side: float,
    grids: Sequence[DyadicGrid],
    theta: float,
    *,
    spread: int = 0,
    offset: int = 20,
) -> np.ndarray:
    """Points within theta l of the boundary of some cube of comparable side.

    ``grids`` holds the two companion grids followed by the auxiliary grid;
    comparable means within a factor 2^spread of ``side`` (of 2^{j(theta)}
    side for the auxiliary grid).
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    base_level = _level_of(side)
    aux_level = base_level - surgery_exponent(theta, offset)
    bad = np.zeros(len(points), dtype=bool)
    for i, grid in enumerate(grids):
        centre = aux_level if i == len(grids) - 1 else base_level
        for k in range(centre - spread, centre + spread + 1):
            cell = 2.0 ** (-k)
            bad |= skeleton_distance(points, points, grid.shift(k), cell) < theta * cell
    return bad


def bad_region_mask(
    mu: AtomicMeasure,
    cube: Cube,
    grids: Sequence[DyadicGrid],
    theta: float,
    *,
    spread: int = 0,
    offset: int = 20,
) -> np.ndarray:
    """Atoms of I_bad for the cube I."""
    inside = cube.mask(mu.points)
    out = np.zeros(mu.size, dtype=bool)
    if inside.any():
        out[inside] = bad_level_mask(mu.points[inside], cube.side, grids, theta, spread=spread, offset=offset)
    return out


def bad_square_function_mc(
    system: AccretiveSystem,
    f: np.ndarray,
    theta: float,
    trials: int,
    rng: np.random.Generator,
    *,
    spread: int = 0,
    offset: int = 20,
    p: float = 2.0,
) -> MeanEstimate:
    """Average over the companion grids of ||(sum_I |D_I f|^2 1_{I_bad})^{1/2}||_p / ||f||_p."""
    tree = system.tree
    mu = tree.mu
    weights = mu.real_weights
    norm_f = lp_norm(f, weights, p)
    k_min = tree.top - spread - 1
    k_max = tree.fine - surgery_exponent(theta, offset) + spread + 1
    samples = []
    ratios = [system.ratio_level(k, f) for k in range(tree.top + 1, tree.fine + 1)]
    for _ in range(trials):
        grids = [grid_from_seed(rng, k_min, k_max, mu.dim) for _ in range(3)]
        total = np.zeros(mu.size)
        previous = np.zeros(mu.size, dtype=complex)
        for k, current in zip(range(tree.top + 1, tree.fine + 1), ratios):
            bad = bad_level_mask(mu.points, 2.0 ** (-k), grids, theta, spread=spread, offset=offset)
            total += np.where(bad & tree.covered, np.abs(current - previous) ** 2, 0.0)
            previous = current
        samples.append(lp_norm(np.sqrt(total), weights, p) / norm_f if norm_f > 0 else 0.0)
    return mean_estimate(samples)
