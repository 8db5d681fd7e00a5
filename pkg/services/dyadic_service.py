"""Randomly shifted dyadic grids over a finite scale window.

A grid at level k has cubes of side 2^{-k}: ``x_k + 2^{-k}(l + [0,1)^n)``
with the shift ``x_k = sum_{j>k} omega_j 2^{-j}``, the series cut at
``j = k_max + 16``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry_service import Cube, as_point, as_points
from .harness_errors import GridWindowError

logger = logging.getLogger(__name__)

SHIFT_TAIL = 16


@dataclass(frozen=True)
class CubeRef:
    level: int
    index: tuple[int, ...]
    grid_id: str = ""

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def to_dict(self) -> dict:
        return {"level": self.level, "index": list(self.index)}


class DyadicGrid:
    """Shifted dyadic grid; ``bits[i]`` holds omega_j for j = k_min + 1 + i."""

    def __init__(self, bits: np.ndarray, k_min: int, k_max: int):
        if k_max < k_min:
            raise ValueError("k_max debe ser >= k_min")
        bits = np.asarray(bits, dtype=np.int8)
        expected = k_max + SHIFT_TAIL - k_min
        if bits.ndim != 2 or bits.shape[0] != expected:
            raise ValueError(f"se esperaban {expected} filas de bits de desplazamiento")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("los bits de desplazamiento deben ser 0 o 1")
        bits.setflags(write=False)
        self.bits = bits
        self.k_min = int(k_min)
        self.k_max = int(k_max)
        self.dim = bits.shape[1]
        j = np.arange(k_min + 1, k_max + SHIFT_TAIL + 1)
        terms = bits * (2.0 ** (-j))[:, None]
        tail = np.cumsum(terms[::-1], axis=0)[::-1]
        # tail[k - k_min] = suma_{j > k} omega_j 2^{-j}
        self._shifts = tail[: k_max - k_min + 1]
        self.grid_id = self.seed_hex()

    def _check(self, k: int) -> None:
        if not self.k_min <= k <= self.k_max:
            raise GridWindowError(f"nivel {k} fuera de [{self.k_min}, {self.k_max}]")

    def shift(self, k: int) -> np.ndarray:
        self._check(k)
        return self._shifts[k - self.k_min]

    def index_array(self, points: np.ndarray, k: int) -> np.ndarray:
        points = as_points(points, self.dim)
        return np.floor((points - self.shift(k)) * 2.0**k).astype(np.int64)

    def cube_containing(self, x, k: int) -> CubeRef:
        idx = self.index_array(as_point(x, self.dim)[None, :], k)[0]
        return CubeRef(k, tuple(int(v) for v in idx), self.grid_id)

    def geometry(self, ref: CubeRef) -> Cube:
        side = 2.0 ** (-ref.level)
        lower = np.asarray(ref.index, dtype=float) * side + self.shift(ref.level)
        return Cube(tuple(lower + side / 2), side / 2)

    def ancestor(self, ref: CubeRef, generations: int) -> CubeRef:
        if generations < 0:
            raise ValueError("generations debe ser >= 0")
        if generations == 0:
            return ref
        return self.cube_containing(self.geometry(ref).center_array, ref.level - generations)

    def parent(self, ref: CubeRef) -> CubeRef:
        return self.ancestor(ref, 1)

    def children(self, ref: CubeRef) -> list[CubeRef]:
        k = ref.level + 1
        self._check(k)
        cube = self.geometry(ref)
        quarter = cube.halfside / 2
        corners = np.array(np.meshgrid(*([[0, 1]] * self.dim), indexing="ij")).reshape(self.dim, -1).T
        centers = cube.lower + quarter + corners * cube.halfside
        return [CubeRef(k, tuple(int(v) for v in row), self.grid_id) for row in self.index_array(centers, k)]

    def seed_hex(self) -> str:
        flat = self.bits.reshape(-1)
        value = 0
        for i in np.flatnonzero(flat):
            value |= 1 << int(i)
        return format(value, "x")

    @classmethod
    def from_hex(cls, seed: str, k_min: int, k_max: int, dim: int) -> "DyadicGrid":
        try:
            value = int(seed, 16)
        except ValueError as exc:
            raise ValueError(f"semilla de grilla inválida: {seed!r}") from exc
        rows = k_max + SHIFT_TAIL - k_min
        flat = np.array([(value >> i) & 1 for i in range(rows * dim)], dtype=np.int8)
        if value >> (rows * dim):
            raise ValueError("la semilla de la grilla tiene bits fuera de la ventana")
        return cls(flat.reshape(rows, dim), k_min, k_max)

    def to_dict(self) -> dict:
        return {"seed": self.grid_id, "k_min": self.k_min, "k_max": self.k_max, "dim": self.dim}

    def __repr__(self) -> str:
        return f"DyadicGrid(seed={self.grid_id}, window=[{self.k_min}, {self.k_max}], dim={self.dim})"


def grid_from_seed(seed: int | str | np.random.Generator, k_min: int, k_max: int, dim: int) -> DyadicGrid:
    """Hex strings encode the bits; integers and generators draw them at random."""
    if isinstance(seed, str):
        return DyadicGrid.from_hex(seed, k_min, k_max, dim)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(k_max + SHIFT_TAIL - k_min, dim), dtype=np.int8)
    return DyadicGrid(bits, k_min, k_max)


def standard_grid(k_min: int, k_max: int, dim: int) -> DyadicGrid:
    return DyadicGrid(np.zeros((k_max + SHIFT_TAIL - k_min, dim), dtype=np.int8), k_min, k_max)


@dataclass(frozen=True)
class GoodnessParams:
    gamma: float = 0.5
    sigma: int = 4

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma debe estar en (0, 1)")
        if self.sigma < 1:
            raise ValueError("sigma debe ser un entero positivo")


class GoodStatus(str, Enum):
    GOOD = "good"
    BAD = "bad"
    INDETERMINATE = "indeterminate"


def skeleton_distance(lower: np.ndarray, upper: np.ndarray, shift: np.ndarray, side: float) -> np.ndarray:
    """Distance from the box [lower, upper] to the hyperplanes shift_i + side Z.

    Broadcasts over leading axes; the last axis is the coordinate.
    """
    a = (lower - shift) / side
    b = (upper - shift) / side
    crosses = np.ceil(a) <= b
    gap = np.minimum(a - np.floor(a), np.ceil(b) - b) * side
    per_axis = np.where(crosses, 0.0, gap)
    return per_axis.min(axis=-1)


def is_good(cube: Cube, other: DyadicGrid, params: GoodnessParams) -> GoodStatus:
    """Test d(Q, boundary of R) > l(Q)^gamma l(R)^{1-gamma} over every R of
    ``other`` with l(R) >= 2^sigma l(Q) inside the window.

    Scales coarser than the window are out of reach; when no required scale
    lies in the window the status is INDETERMINATE.
    """
    side = cube.side
    k_top = math.floor(-math.log2(side) - params.sigma + 1e-9)
    if k_top < other.k_min:
        logger.debug("cubo de lado %g sin escalas de referencia en la ventana", side)
        return GoodStatus.INDETERMINATE
    for k in range(other.k_min, min(k_top, other.k_max) + 1):
        big = 2.0 ** (-k)
        threshold = side**params.gamma * big ** (1 - params.gamma)
        if skeleton_distance(cube.lower, cube.upper, other.shift(k), big) <= threshold:
            return GoodStatus.BAD
    return GoodStatus.GOOD


def d_QR(q: Cube, r: Cube, gamma: float) -> float:
    """max(2 sqrt(n) l(Q), l(Q)^gamma l(R)^{1-gamma})."""
    return max(2 * math.sqrt(q.dim) * q.side, q.side**gamma * r.side ** (1 - gamma))


@dataclass(frozen=True)
class MCEstimate:
    p: float
    stderr: float
    low: float
    high: float
    trials: int

    def to_dict(self) -> dict:
        return {"p": self.p, "stderr": self.stderr, "low": self.low, "high": self.high, "trials": self.trials}


def mc_estimate(hits: np.ndarray) -> MCEstimate:
    trials = len(hits)
    p = float(np.mean(hits))
    stderr = math.sqrt(max(p * (1 - p), 0.0) / trials)
    return MCEstimate(p, stderr, max(0.0, p - 1.96 * stderr), min(1.0, p + 1.96 * stderr), trials)


def bad_probability_mc(
    depth: int, gamma: float, sigma: int, trials: int, seed: int | np.random.Generator, dim: int = 1
) -> MCEstimate:
    """Fraction of random shifts for which the unit cube [0,1)^n is bad.

    The reference scales are l(R) = 2^{sigma}, ..., 2^{sigma + depth}.
    """
    if trials < 100:
        raise ValueError("bad_probability_mc necesita al menos 100 ensayos")
    if depth < 0:
        raise ValueError("depth debe ser >= 0")
    params = GoodnessParams(gamma, sigma)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k_min, k_top = -sigma - depth, -params.sigma
    rows = SHIFT_TAIL - k_min
    bits = rng.integers(0, 2, size=(trials, rows, dim))
    j = np.arange(k_min + 1, SHIFT_TAIL + 1)
    tail = np.cumsum((bits * (2.0 ** (-j))[None, :, None])[:, ::-1], axis=1)[:, ::-1]
    lower, upper = np.zeros(dim), np.ones(dim)
    bad = np.zeros(trials, dtype=bool)
    for k in range(k_min, k_top + 1):
        big = 2.0 ** (-k)
        dist = skeleton_distance(lower, upper, tail[:, k - k_min, :], big)
        bad |= dist <= big ** (1 - gamma)
    return mc_estimate(bad)
