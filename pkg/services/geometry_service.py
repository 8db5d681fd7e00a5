"""Points, cubes, balls and finite atomic measures.

Measures are finite atom sets with complex weights and a mandatory
resolution scale r_min. Suprema over balls or cubes are taken over the
breakpoint families induced by atom distances, evaluated as right limits.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .harness_errors import BudgetError, DecompositionError, SmallBoundaryError, SubResolutionError

logger = logging.getLogger(__name__)

GENERATOR_KINDS = ("cantor4corner", "cantor1d", "uniform_cube", "random")

# holgura relativa para comparaciones de masas acumuladas
_REL_SLACK = 1e-12


class Region(Protocol):
    def mask(self, points: np.ndarray) -> np.ndarray: ...


def as_points(points: Iterable | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Return a (N, n) float array; scalars and 1-d input become 1-d points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"se esperaban puntos de dimensión {dim}, llegaron de {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("las coordenadas deben ser finitas")
    return arr


def as_point(x: Iterable | float, dim: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if dim is not None and arr.shape != (dim,):
        raise ValueError(f"se esperaba un punto de dimensión {dim}")
    return arr


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube; half-open [c-h, c+h) unless ``closed``."""

    center: tuple[float, ...]
    halfside: float
    closed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.halfside > 0:
            raise ValueError("halfside debe ser positivo")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def side(self) -> float:
        return 2.0 * self.halfside

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def lower(self) -> np.ndarray:
        return self.center_array - self.halfside

    @property
    def upper(self) -> np.ndarray:
        return self.center_array + self.halfside

    def scaled(self, factor: float) -> "Cube":
        return Cube(self.center, self.halfside * factor, self.closed)

    def with_closed(self, closed: bool) -> "Cube":
        return Cube(self.center, self.halfside, closed)

    def mask(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return np.zeros(len(pts), dtype=bool)
        lo, hi = self.lower, self.upper
        if self.closed:
            return np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.all((pts >= lo) & (pts < hi), axis=1)

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the boundary of the cube."""
        pts = np.asarray(points, dtype=float)
        offset = np.abs(pts - self.center_array)
        inside = np.all(offset <= self.halfside, axis=1)
        gap_in = np.min(self.halfside - offset, axis=1) if len(pts) else np.zeros(0)
        gap_out = np.linalg.norm(np.maximum(offset - self.halfside, 0.0), axis=1)
        return np.where(inside, gap_in, gap_out)

    def contains_cube(self, other: "Cube") -> bool:
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def interiors_overlap(self, other: "Cube") -> bool:
        return bool(np.all((self.lower < other.upper) & (other.lower < self.upper)))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "halfside": self.halfside, "closed": self.closed}


@dataclass(frozen=True)
class Ball:
    """Open ball B(center, radius)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def mask(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return np.zeros(len(pts), dtype=bool)
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) < self.radius


@dataclass(frozen=True)
class BoundaryStrip:
    """{x in 2Q : dist(x, dQ) <= width * l(Q)}."""

    cube: Cube
    width: float

    def mask(self, points: np.ndarray) -> np.ndarray:
        inside = self.cube.scaled(2.0).mask(points)
        near = self.cube.boundary_distance(points) <= self.width * self.cube.side
        return inside & near


@dataclass(frozen=True, eq=False)
class CubeUnion:
    """Bounded open region given as a finite union of open cubes."""

    cubes: tuple[Cube, ...]

    def __post_init__(self):
        object.__setattr__(self, "cubes", tuple(self.cubes))
        if self.cubes:
            lo = np.array([c.lower for c in self.cubes])
            hi = np.array([c.upper for c in self.cubes])
        else:
            lo = hi = np.zeros((0, 0))
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @classmethod
    def around_points(cls, points: np.ndarray, radius: float) -> "CubeUnion":
        return cls(tuple(Cube(tuple(p), radius) for p in np.asarray(points, dtype=float)))

    @property
    def is_empty(self) -> bool:
        return not self.cubes

    def mask(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.is_empty or pts.size == 0:
            return np.zeros(len(pts), dtype=bool)
        inside = (pts[:, None, :] > self._lo[None]) & (pts[:, None, :] < self._hi[None])
        return np.any(np.all(inside, axis=2), axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self._lo.min(axis=0), self._hi.max(axis=0)

    def contains_box(self, lo: np.ndarray, hi: np.ndarray) -> bool:
        """Whether the box [lo, hi] lies in the union, decided on the compressed cell grid."""
        if self.is_empty:
            return False
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        hit = np.all((self._lo < hi) & (self._hi > lo), axis=1)
        if not hit.any():
            return False
        blo, bhi = self._lo[hit], self._hi[hit]
        mids = []
        for axis in range(len(lo)):
            cuts = np.concatenate(([lo[axis], hi[axis]], blo[:, axis], bhi[:, axis]))
            cuts = np.unique(np.clip(cuts, lo[axis], hi[axis]))
            if len(cuts) < 2:
                return False
            mids.append((cuts[:-1] + cuts[1:]) / 2.0)
        cells = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, len(lo))
        covered = np.any(
            np.all((cells[:, None, :] > blo[None]) & (cells[:, None, :] < bhi[None]), axis=2), axis=1
        )
        return bool(covered.all())

    def contains_cube(self, cube: Cube) -> bool:
        return self.contains_box(cube.lower, cube.upper)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite set of atoms with complex weights and a resolution scale."""

    points: np.ndarray
    weights: np.ndarray
    resolution: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        wts = np.asarray(self.weights, dtype=complex).reshape(-1)
        if len(pts) != len(wts):
            raise ValueError("puntos y pesos deben tener la misma longitud")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(wts)):
            raise ValueError("los átomos deben tener coordenadas y pesos finitos")
        if not self.resolution > 0:
            raise ValueError("la resolución debe ser positiva")
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "resolution", float(self.resolution))

    @classmethod
    def empty(cls, dim: int, resolution: float = 1.0) -> "AtomicMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), resolution)

    @classmethod
    def from_atoms(
        cls, atoms: Sequence[tuple[Sequence[float] | float, complex]], resolution: float, dim: int | None = None
    ) -> "AtomicMeasure":
        if not atoms:
            return cls.empty(dim or 1, resolution)
        pts = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in atoms])
        return cls(pts, np.array([w for _, w in atoms], dtype=complex), resolution)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def nonneg(self) -> bool:
        return bool(np.all(self.weights.imag == 0) and np.all(self.weights.real >= 0))

    @property
    def real_weights(self) -> np.ndarray:
        return self.weights.real

    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def abs(self) -> "AtomicMeasure":
        return AtomicMeasure(self.points, np.abs(self.weights), self.resolution)

    def with_weights(self, weights: np.ndarray) -> "AtomicMeasure":
        return AtomicMeasure(self.points, weights, self.resolution)

    def density(self, values: np.ndarray) -> "AtomicMeasure":
        """The measure f dmu for f given on the atoms."""
        return AtomicMeasure(self.points, np.asarray(values, dtype=complex) * self.weights, self.resolution)

    def scaled(self, factor: complex) -> "AtomicMeasure":
        return AtomicMeasure(self.points, self.weights * factor, self.resolution)

    def restrict(self, region: Region | np.ndarray) -> "AtomicMeasure":
        mask = region if isinstance(region, np.ndarray) else region.mask(self.points)
        return AtomicMeasure(self.points[mask], self.weights[mask], self.resolution)

    def mass(self, region: Region | np.ndarray) -> complex:
        mask = region if isinstance(region, np.ndarray) else region.mask(self.points)
        return complex(self.weights[mask].sum())

    def diameter(self) -> float:
        if self.size < 2:
            return 0.0
        return float(pdist(self.points).max())

    def require_scale(self, r: float, what: str = "scale") -> None:
        if r < self.resolution * (1 - _REL_SLACK):
            raise SubResolutionError(f"{what} {r:g} por debajo de la resolución {self.resolution:g}")


@dataclass(frozen=True)
class GrowthCertificate:
    m: float
    r_min: float
    constant: float
    center: tuple[float, ...] | None = None
    radius: float | None = None


def total_variation(nu: AtomicMeasure) -> float:
    return nu.total_variation()


def set_mass(nu: AtomicMeasure, region: Region) -> complex:
    return nu.mass(region)


def ball_candidates(dists: np.ndarray, r_min: float) -> tuple[np.ndarray, np.ndarray]:
    """Candidate radii for a supremum over open balls with r >= r_min.

    Each atom distance d >= r_min is a right-limit candidate (atoms at
    distance <= d counted); r_min itself is a strict candidate (atoms at
    distance < r_min counted).
    """
    above = np.unique(dists[dists >= r_min])
    if r_min > 0:
        radii = np.concatenate(([r_min], above))
        inclusive = np.concatenate(([False], np.ones(len(above), dtype=bool)))
    else:
        radii, inclusive = above, np.ones(len(above), dtype=bool)
    return radii, inclusive


def masses_at(dists: np.ndarray, weights: np.ndarray, radii: np.ndarray, inclusive: np.ndarray) -> np.ndarray:
    """Cumulative weight within each radius (inclusive or strict)."""
    order = np.argsort(dists, kind="stable")
    sorted_d = dists[order]
    cum = np.concatenate(([0.0], np.cumsum(weights[order])))
    right = np.searchsorted(sorted_d, radii, side="right")
    left = np.searchsorted(sorted_d, radii, side="left")
    return cum[np.where(inclusive, right, left)]


def growth_constant(
    mu: AtomicMeasure, m: float, r_min: float | None = None, query_points: np.ndarray | None = None
) -> GrowthCertificate:
    """Exact sup of mu(B(x,r))/r^m over atom (and query) centers and r >= r_min."""
    if not mu.nonneg:
        raise ValueError("growth_constant necesita una medida no negativa")
    r_min = mu.resolution if r_min is None else float(r_min)
    mu.require_scale(r_min, "r_min")
    if mu.size == 0:
        return GrowthCertificate(m, r_min, 0.0)
    centers = mu.points if query_points is None else np.vstack([mu.points, as_points(query_points, mu.dim)])
    dists = cdist(centers, mu.points)
    weights = mu.real_weights
    best, best_center, best_radius = 0.0, None, None
    for i, row in enumerate(dists):
        radii, inclusive = ball_candidates(row, r_min)
        values = masses_at(row, weights, radii, inclusive) / radii**m
        j = int(np.argmax(values))
        if values[j] > best:
            best, best_center, best_radius = float(values[j]), tuple(centers[i]), float(radii[j])
    return GrowthCertificate(m, r_min, best, best_center, best_radius)


def is_doubling(mu: AtomicMeasure, cube: Cube, alpha: float, beta: float) -> bool:
    if not (alpha > 1 and beta > 0):
        raise ValueError("la doblez necesita alpha > 1 y beta > 0")
    big = mu.mass(cube.scaled(alpha)).real
    small = mu.mass(cube).real
    return bool(big <= beta * small * (1 + _REL_SLACK))


def _strip_profile(mu: AtomicMeasure, cube: Cube) -> tuple[np.ndarray, np.ndarray, float]:
    """Breakpoints lambda_i of the boundary strip and the strip mass at each."""
    inside = cube.scaled(2.0).mask(mu.points)
    total = float(mu.real_weights[inside].sum())
    if not inside.any():
        return np.zeros(0), np.zeros(0), 0.0
    lam = cube.boundary_distance(mu.points[inside]) / cube.side
    order = np.argsort(lam, kind="stable")
    lam_sorted = lam[order]
    cum = np.cumsum(mu.real_weights[inside][order])
    ends = np.searchsorted(lam_sorted, lam_sorted, side="right") - 1
    return lam_sorted, cum[ends], total


def has_small_boundary(mu: AtomicMeasure, cube: Cube, t: float) -> bool:
    """Exact t-small boundary test over the strip breakpoints."""
    if t <= 0:
        raise ValueError("t debe ser positivo")
    lam, strip, total = _strip_profile(mu, cube)
    if len(lam) == 0:
        return True
    return bool(np.all(strip <= t * lam * total * (1 + _REL_SLACK)))


def small_boundary_constant(mu: AtomicMeasure, cube: Cube) -> float:
    """Least t for which the cube has t-small boundary (inf when an atom sits on the boundary)."""
    lam, strip, total = _strip_profile(mu, cube)
    if len(lam) == 0 or total <= 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(strip > 0, strip / (lam * total), 0.0)
    return float(np.max(ratios))


def _scan_small_boundary(
    mu: AtomicMeasure, center: np.ndarray, halfsides: np.ndarray, t: float
) -> Cube:
    offending = []
    for h in halfsides:
        cube = Cube(tuple(center), float(h))
        lam, strip, total = _strip_profile(mu, cube)
        bad = strip > t * lam * total * (1 + _REL_SLACK)
        if not bad.any():
            return cube
        # el punto de quiebre de la franja con mayor exceso para este lado
        excess = strip[bad] - t * lam[bad] * total
        offending.append(float(lam[bad][int(np.argmax(excess))]))
    raise SmallBoundaryError(
        f"no hay cubo de borde {t:g}-pequeño en {tuple(center)} con lado en [{halfsides[0]:g}, {halfsides[-1]:g}]",
        breakpoints=offending,
    )


def find_small_boundary_cube(
    mu: AtomicMeasure, x: Sequence[float], eps: float, t: float, c_n: float, steps: int = 64
) -> Cube:
    """Cube R centered at x with B(x,eps) in R in B(x, c_n eps) and t-small boundary."""
    center = as_point(x, mu.dim)
    mu.require_scale(eps, "eps")
    h_max = c_n * eps / math.sqrt(mu.dim)
    if h_max < eps:
        raise ValueError("c_n debe superar sqrt(n)")
    return _scan_small_boundary(mu, center, np.geomspace(eps, h_max, steps), t)


def find_small_boundary_between(
    mu: AtomicMeasure, center: Sequence[float], h_lo: float, h_hi: float, t: float, steps: int = 32
) -> Cube:
    """Concentric cube with halfside in [h_lo, h_hi] and t-small boundary."""
    return _scan_small_boundary(mu, as_point(center), np.linspace(h_lo, h_hi, steps), t)


def smallest_big_doubling_ancestor(
    mu: AtomicMeasure, cube: Cube, m: float, *, require_mass: bool = False, max_steps: int = 200
) -> tuple[Cube, int]:
    """Least k >= 0 with mu(6^{k+1}Q) <= 6^{m+1} mu(6^k Q); returns (6^k Q, k)."""
    if not mu.nonneg:
        raise ValueError("los ancestros doblantes necesitan una medida no negativa")
    bound = 6.0 ** (m + 1)
    total = float(mu.real_weights.sum())
    if require_mass and total <= 0:
        raise ValueError("la medida no tiene masa")
    for k in range(max_steps):
        current = cube.scaled(6.0**k)
        here = mu.mass(current).real
        bigger = mu.mass(current.scaled(6.0)).real
        if require_mass and here <= 0:
            continue
        if bigger <= bound * here * (1 + _REL_SLACK):
            return current, k
    raise DecompositionError(f"la búsqueda de ancestro doblante no terminó en {max_steps} pasos")


def cube_distance(q: Cube, r: Cube) -> float:
    gap = np.abs(q.center_array - r.center_array) - q.halfside - r.halfside
    return float(np.linalg.norm(np.maximum(gap, 0.0)))


def long_distance(q: Cube, r: Cube) -> float:
    return cube_distance(q, r) + q.side + r.side


def boundary_gap(inner: Cube, outer: Cube) -> float:
    """Distance from the closed cube ``inner`` to the boundary of ``outer``."""
    lo, hi = inner.lower, inner.upper
    olo, ohi = outer.lower, outer.upper
    if np.all(lo >= olo) and np.all(hi <= ohi):
        return float(min(np.min(lo - olo), np.min(ohi - hi)))
    separated = np.maximum(np.maximum(olo - hi, lo - ohi), 0.0)
    if np.any(separated > 0):
        return float(np.linalg.norm(separated))
    return 0.0


def doubling_ancestor_integral(mu: AtomicMeasure, cube: Cube, ancestor: Cube, m: float) -> float:
    """Sum of w/|x - c_Q|^m over atoms of R minus Q."""
    mask = ancestor.mask(mu.points) & ~cube.mask(mu.points)
    if not mask.any():
        return 0.0
    d = np.linalg.norm(mu.points[mask] - cube.center_array, axis=1)
    return float(np.sum(mu.real_weights[mask] / d**m))


def min_separation(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.inf
    return float(pdist(points).min())


def _cantor(level: int, dim: int, ratio: float) -> tuple[np.ndarray, float]:
    centers = np.full((1, dim), 0.5)
    side = 1.0
    offsets = np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))
    for _ in range(level):
        child = side * ratio
        shift = (side - child) / 2.0
        centers = (centers[:, None, :] + shift * offsets[None, :, :]).reshape(-1, dim)
        side = child
    return centers, side


def generate(
    kind: str,
    level: int | None = None,
    count: int | None = None,
    seed: int = 0,
    dim: int = 2,
    max_atoms: int = 4096,
) -> AtomicMeasure:
    """Normalized nonnegative test measure; deterministic in (kind, level/count, seed)."""
    if kind not in GENERATOR_KINDS:
        raise ValueError(f"tipo de generador desconocido: {kind}")
    if kind in ("cantor4corner", "cantor1d"):
        if level is None or level < 0:
            raise ValueError("los generadores de Cantor necesitan un nivel no negativo")
        branching = 4 if kind == "cantor4corner" else 2
        if branching**level > max_atoms:
            raise BudgetError(f"{branching ** level} átomos exceden el presupuesto de {max_atoms}")
        if kind == "cantor4corner":
            points, side = _cantor(level, 2, 0.25)
        else:
            points, side = _cantor(level, 1, 1.0 / 3.0)
        weights = np.full(len(points), 1.0 / len(points))
        return AtomicMeasure(points, weights, side)

    if count is None or count < 1:
        raise ValueError("count debe ser positivo")
    if count > max_atoms:
        raise BudgetError(f"{count} átomos exceden el presupuesto de {max_atoms}")
    if kind == "uniform_cube":
        per_axis = int(round(count ** (1.0 / dim)))
        if per_axis**dim != count:
            raise ValueError(f"uniform_cube necesita un count que sea potencia {dim}-ésima exacta")
        axis = (np.arange(per_axis) + 0.5) / per_axis
        points = np.array(list(itertools.product(axis, repeat=dim)))
        return AtomicMeasure(points, np.full(count, 1.0 / count), 1.0 / per_axis)

    rng = np.random.default_rng(seed)
    points = rng.random((count, dim))
    separation = min_separation(points)
    resolution = 1.0 if not math.isfinite(separation) else max(separation, 1e-9)
    return AtomicMeasure(points, np.full(count, 1.0 / count), resolution)
