"""Maximal functions over finite atomic measures.

All suprema are taken over breakpoint radii evaluated as right limits, so
they are exact for atom-centered queries. The non-centered function uses
candidate centers (atoms and the query point) and is a certified lower bound
of the continuum supremum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Literal

import numpy as np

from .geometry_service import AtomicMeasure, as_point, as_points, ball_candidates, masses_at

if TYPE_CHECKING:
    from .dyadic_service import DyadicGrid

logger = logging.getLogger(__name__)

MaximalName = Literal["radial_m", "centered_ball", "centered_cube", "noncentered_5B", "dyadic"]


@dataclass(frozen=True)
class MaximalKind:
    kind: MaximalName
    s: float = math.inf
    bilinear: bool = False

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s debe ser positivo")


def _distances(points: np.ndarray, x: np.ndarray, cube: bool = False) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    offset = points - x
    if cube:
        return np.max(np.abs(offset), axis=1)
    return np.linalg.norm(offset, axis=1)


def radial(
    nu: AtomicMeasure, x, m: float, r_min: float | None = None, nu2: AtomicMeasure | None = None
) -> float:
    """M_m nu(x) = sup_r |nu|(B(x,r))/r^m, or the bilinear product over a common ball."""
    x = as_point(x, nu.dim)
    r_min = nu.resolution if r_min is None else float(r_min)
    nu.require_scale(r_min, "r_min")
    measures = [nu] if nu2 is None else [nu, nu2]
    dists = [_distances(v.points, x) for v in measures]
    radii, inclusive = ball_candidates(np.concatenate(dists), r_min)
    if len(radii) == 0:
        return 0.0
    value = np.ones(len(radii))
    for v, d in zip(measures, dists):
        value = value * masses_at(d, np.abs(v.weights), radii, inclusive)
    return float(np.max(value / radii ** (m * len(measures))))


def centered(
    mu: AtomicMeasure,
    nu: AtomicMeasure,
    x,
    *,
    cube: bool = False,
    r_min: float | None = None,
    nu2: AtomicMeasure | None = None,
) -> float:
    """M_mu nu(x) over centered open balls (or open cubes Q(x,r) when ``cube``)."""
    x = as_point(x, mu.dim)
    r_min = mu.resolution if r_min is None else float(r_min)
    mu.require_scale(r_min, "r_min")
    measures = [nu] if nu2 is None else [nu, nu2]
    d_mu = _distances(mu.points, x, cube)
    dists = [_distances(v.points, x, cube) for v in measures]
    radii, inclusive = ball_candidates(np.concatenate([d_mu, *dists]), r_min)
    if len(radii) == 0:
        return 0.0
    base = masses_at(d_mu, mu.real_weights, radii, inclusive)
    value = np.ones(len(radii))
    for v, d in zip(measures, dists):
        num = masses_at(d, np.abs(v.weights), radii, inclusive)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = value * np.where(base > 0, num / base, 0.0)
    return float(np.max(value))


class NoncenteredMaximal:
    """Precomputed N_mu nu = sup over balls B containing x of |nu|(B)/mu(5B)."""

    def __init__(
        self,
        mu: AtomicMeasure,
        nu: AtomicMeasure,
        r_min: float | None = None,
        extra_centers: np.ndarray | None = None,
        dilation: float = 5.0,
    ):
        self.mu = mu
        self.nu = nu
        self.dilation = dilation
        self.r_min = mu.resolution if r_min is None else float(r_min)
        mu.require_scale(self.r_min, "r_min")
        blocks = [mu.points, nu.points]
        if extra_centers is not None:
            blocks.append(as_points(extra_centers, mu.dim))
        self.centers = np.unique(np.vstack(blocks), axis=0) if sum(len(b) for b in blocks) else np.zeros((0, mu.dim))
        self._radii, self._suffix = self._tabulate(self.centers)

    def _tabulate(self, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows_r, rows_s = [], []
        abs_nu = np.abs(self.nu.weights)
        for c in centers:
            d_nu = _distances(self.nu.points, c)
            d_mu = _distances(self.mu.points, c) / self.dilation
            radii = np.unique(np.concatenate([d_nu, d_mu]))
            inclusive = np.ones(len(radii), dtype=bool)
            num = masses_at(d_nu, abs_nu, radii, inclusive)
            den = masses_at(d_mu, self.mu.real_weights, radii, inclusive)
            with np.errstate(divide="ignore", invalid="ignore"):
                avg = np.where(den > 0, num / den, 0.0)
            rows_r.append(radii)
            rows_s.append(np.maximum.accumulate(avg[::-1])[::-1])
        width = max((len(r) for r in rows_r), default=0)
        radii = np.full((len(centers), width), np.inf)
        suffix = np.zeros((len(centers), width))
        for i, (r, s) in enumerate(zip(rows_r, rows_s)):
            radii[i, : len(r)] = r
            suffix[i, : len(s)] = s
        return radii, suffix

    def _query(self, x: np.ndarray, centers: np.ndarray, radii: np.ndarray, suffix: np.ndarray) -> float:
        if len(centers) == 0 or radii.shape[1] == 0:
            return 0.0
        lower = np.maximum(np.linalg.norm(centers - x, axis=1), self.r_min)
        # el límite por derecha en ``lower`` es el valor en el último quiebre <= lower
        idx = np.maximum(np.sum(radii <= lower[:, None], axis=1) - 1, 0)
        return float(np.max(suffix[np.arange(len(centers)), idx]))

    def __call__(self, x) -> float:
        x = as_point(x, self.mu.dim)
        value = self._query(x, self.centers, self._radii, self._suffix)
        if len(self.centers) and np.any(np.all(self.centers == x, axis=1)):
            return value
        radii, suffix = self._tabulate(x[None, :])
        return max(value, self._query(x, x[None, :], radii, suffix))

    def at(self, points: np.ndarray) -> np.ndarray:
        return np.array([self(p) for p in as_points(points, self.mu.dim)])


def noncentered(mu: AtomicMeasure, nu: AtomicMeasure, x, r_min: float | None = None, extra_centers=None) -> float:
    return NoncenteredMaximal(mu, nu, r_min, extra_centers)(x)


def dyadic(mu: AtomicMeasure, nu: AtomicMeasure, x, grid: "DyadicGrid", levels: Iterable[int] | None = None) -> float:
    """sup over grid cubes Q containing x of |nu|(Q)/mu(Q)."""
    x = as_point(x, mu.dim)
    levels = range(grid.k_min, grid.k_max + 1) if levels is None else levels
    best = 0.0
    for k in levels:
        ref = grid.cube_containing(x, k)
        cube = grid.geometry(ref)
        base = mu.mass(cube).real
        if base > 0:
            best = max(best, float(np.abs(nu.weights)[cube.mask(nu.points)].sum()) / base)
    return best


def maximal(
    kind: MaximalKind,
    mu: AtomicMeasure,
    x,
    f: np.ndarray | None = None,
    g: np.ndarray | None = None,
    *,
    nu: AtomicMeasure | None = None,
    nu2: AtomicMeasure | None = None,
    m: float | None = None,
    grid: "DyadicGrid | None" = None,
    r_min: float | None = None,
) -> float:
    """Dispatch to the maximal function named by ``kind``.

    The numerator is either a measure ``nu`` or a function ``f`` on the atoms
    of ``mu`` (in which case nu = |f|^s dmu). The bilinear flag takes ``g`` or
    ``nu2`` as the second factor.
    """
    s = kind.s
    power = 1.0 if math.isinf(s) else s

    def _numerator(values, measure):
        if measure is not None:
            if not math.isinf(s):
                raise ValueError("la adaptación a s necesita una función sobre los átomos")
            return measure
        if values is None:
            raise ValueError("maximal necesita f o nu")
        return mu.density(np.abs(np.asarray(values)) ** power)

    first = _numerator(f, nu)
    second = _numerator(g, nu2) if kind.bilinear else None

    if kind.kind == "radial_m":
        if m is None:
            raise ValueError("la maximal radial necesita m")
        value = radial(first, x, m, r_min, second)
    elif kind.kind in ("centered_ball", "centered_cube"):
        value = centered(mu, first, x, cube=kind.kind == "centered_cube", r_min=r_min, nu2=second)
    elif kind.kind == "noncentered_5B":
        if second is not None:
            raise ValueError("la maximal no centrada es lineal")
        value = noncentered(mu, first, x, r_min)
    elif kind.kind == "dyadic":
        if grid is None:
            raise ValueError("la maximal diádica necesita una grilla")
        value = dyadic(mu, first, x, grid)
        if second is not None:
            value *= dyadic(mu, second, x, grid)
    else:
        raise ValueError(f"tipo de maximal desconocido: {kind.kind}")
    return value if math.isinf(s) else value ** (1.0 / s)


@dataclass(frozen=True)
class BasicIntegralBound:
    lhs: float
    rhs: float
    ratio: float


def basic_integral_bound(
    nu1: AtomicMeasure, nu2: AtomicMeasure, x, t: float, m: float, alpha: float, r_min: float | None = None
) -> BasicIntegralBound:
    """Sum |w||v| / (t + |x-y| + |x-z|)^{2m+alpha} against t^{-alpha} M_m(nu1, nu2)(x)."""
    x = as_point(x, nu1.dim)
    nu1.require_scale(t, "t")
    dy = _distances(nu1.points, x)
    dz = _distances(nu2.points, x)
    if len(dy) == 0 or len(dz) == 0:
        return BasicIntegralBound(0.0, 0.0, 0.0)
    weights = np.abs(nu1.weights)[:, None] * np.abs(nu2.weights)[None, :]
    lhs = float(np.sum(weights / (t + dy[:, None] + dz[None, :]) ** (2 * m + alpha)))
    rhs = t ** (-alpha) * radial(nu1, x, m, r_min, nu2)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return BasicIntegralBound(lhs, rhs, ratio)


def fefferman_stein_ratio(mu: AtomicMeasure, family: np.ndarray, p: float, m: float) -> float:
    """||(sum_k M_{mu,m}(g_k)^2)^{1/2}||_p / ||(sum_k g_k^2)^{1/2}||_p."""
    family = np.atleast_2d(np.asarray(family, dtype=float))
    weights = mu.real_weights
    maximal_rows = np.array(
        [[radial(mu.density(np.abs(g)), x, m) for x in mu.points] for g in family]
    )
    lhs = np.sum(np.sqrt(np.sum(maximal_rows**2, axis=0)) ** p * weights) ** (1.0 / p)
    rhs = np.sum(np.sqrt(np.sum(family**2, axis=0)) ** p * weights) ** (1.0 / p)
    return float(lhs / rhs) if rhs > 0 else 0.0


def weak_type_noncentered_ratio(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """sup over level breakpoints of lambda mu({N nu > lambda}) / |nu|({N nu > lambda})."""
    table = NoncenteredMaximal(mu, nu)
    on_mu = table.at(mu.points) if mu.size else np.zeros(0)
    on_nu = table.at(nu.points) if nu.size else np.zeros(0)
    levels = np.unique(np.concatenate([on_mu, on_nu]))
    levels = levels[levels > 0]
    best = 0.0
    abs_nu = np.abs(nu.weights)
    for v in levels:
        mass_mu = float(mu.real_weights[on_mu >= v].sum())
        mass_nu = float(abs_nu[on_nu >= v].sum())
        if mass_nu > 0:
            best = max(best, v * mass_mu / mass_nu)
        elif mass_mu > 0:
            logger.warning("nivel %g sin masa de nu con masa de mu positiva", v)
            return math.inf
    return best
