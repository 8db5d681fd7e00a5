"""Truncated bilinear operators evaluated as exact finite sums.

Every truncation keeps the pairs whose key is strictly larger than epsilon.
The key of a pair (y, z) seen from x is max(|x-y|, |x-z|) for the ``max``
truncation and sqrt(|x-y|^2 + |x-z|^2) for the ``ball`` one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Protocol

import numpy as np

from .geometry_service import AtomicMeasure, Region, as_point, as_points
from .kernel_service import BilinearKernel, SuppressedKernel
from .maximal_service import centered, radial

logger = logging.getLogger(__name__)

TruncationMode = Literal["max", "ball"]


@dataclass(frozen=True)
class TruncationSpec:
    mode: TruncationMode = "max"
    eps: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("max", "ball"):
            raise ValueError(f"modo de truncación desconocido: {self.mode}")
        if self.eps < 0 or self.delta < 0:
            raise ValueError("eps y delta deben ser no negativos")

    def flag_resolution(self, resolution: float) -> bool:
        """True (and a warning) when eps is a positive scale below the resolution."""
        if 0 < self.eps < resolution:
            logger.warning("epsilon %g por debajo de la resolución %g", self.eps, resolution)
            return True
        return False


def _pair_keys(nu1: AtomicMeasure, nu2: AtomicMeasure, x: np.ndarray, mode: TruncationMode) -> np.ndarray:
    dy = np.linalg.norm(nu1.points - x, axis=1)
    dz = np.linalg.norm(nu2.points - x, axis=1)
    if mode == "max":
        return np.maximum(dy[:, None], dz[None, :])
    return np.sqrt(dy[:, None] ** 2 + dz[None, :] ** 2)


def _pair_terms(kernel: BilinearKernel, nu1: AtomicMeasure, nu2: AtomicMeasure, x: np.ndarray) -> np.ndarray:
    return kernel.pair_matrix(x, nu1.points, nu2.points) * nu1.weights[:, None] * nu2.weights[None, :]


def apply_truncated(
    kernel: BilinearKernel, nu1: AtomicMeasure, nu2: AtomicMeasure, x, spec: TruncationSpec | None = None
) -> complex:
    """T_eps(nu1, nu2)(x) as the double sum over kept atom pairs."""
    spec = spec or TruncationSpec()
    x = as_point(x, nu1.dim)
    if nu1.size == 0 or nu2.size == 0:
        return 0j
    spec.flag_resolution(min(nu1.resolution, nu2.resolution))
    keep = _pair_keys(nu1, nu2, x, spec.mode) > spec.eps
    if not keep.any():
        return 0j
    return complex(_pair_terms(kernel, nu1, nu2, x)[keep].sum())


@dataclass(frozen=True, eq=False)
class TruncationProfile:
    """Unique ascending keys u_i and suffix sums S_i = T_eps for eps in [u_{i-1}, u_i)."""

    keys: np.ndarray
    sums: np.ndarray

    def value_at(self, eps: float | np.ndarray) -> np.ndarray:
        """T_eps for each eps: the suffix sum of the first key > eps."""
        idx = np.searchsorted(self.keys, np.asarray(eps, dtype=float), side="right")
        padded = np.concatenate([self.sums, [0j]])
        return padded[idx]


def truncation_profile(
    kernel: BilinearKernel, nu1: AtomicMeasure, nu2: AtomicMeasure, x, mode: TruncationMode = "max"
) -> TruncationProfile:
    x = as_point(x, nu1.dim)
    if nu1.size == 0 or nu2.size == 0:
        return TruncationProfile(np.zeros(0), np.zeros(0, dtype=complex))
    keys = _pair_keys(nu1, nu2, x, mode).reshape(-1)
    terms = _pair_terms(kernel, nu1, nu2, x).reshape(-1)
    # clave 0 es el par diagonal, nunca se conserva para eps >= 0
    live = keys > 0
    keys, terms = keys[live], terms[live]
    unique, inverse = np.unique(keys, return_inverse=True)
    grouped = np.bincount(inverse, weights=terms.real, minlength=len(unique)) + 1j * np.bincount(
        inverse, weights=terms.imag, minlength=len(unique)
    )
    sums = np.cumsum(grouped[::-1])[::-1]
    return TruncationProfile(unique, sums)


def truncation_batch(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    fs: np.ndarray,
    gs: np.ndarray,
    delta: float = 0.0,
    at: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """|T_delta(f dmu, g dmu)| and sup_{eps > delta} |T_eps(f dmu, g dmu)| at atoms of mu.

    ``fs`` and ``gs`` hold one function per row; ``at`` selects the atoms to
    evaluate at (all by default). Max truncation only: with the atoms sorted
    by distance to x, the pairs dropped at eps form a leading block of the
    pair matrix, so all breakpoints come from two triangular products.
    Returns two arrays of shape (rows, len(at)).
    """
    if delta < 0:
        raise ValueError("delta debe ser no negativo")
    fs = np.atleast_2d(np.asarray(fs))
    gs = np.atleast_2d(np.asarray(gs))
    if fs.shape != gs.shape or fs.shape[1] != mu.size:
        raise ValueError("fs y gs deben tener una fila por función y una columna por átomo")
    idx = np.arange(mu.size) if at is None else np.asarray(at, dtype=int).reshape(-1)
    plain = np.zeros((len(fs), len(idx)))
    sharp = np.zeros((len(fs), len(idx)))
    if mu.size == 0:
        return plain, sharp
    for col, i in enumerate(idx):
        x = mu.points[i]
        dist = np.linalg.norm(mu.points - x, axis=1)
        order = np.argsort(dist, kind="stable")
        ds = dist[order]
        pts, w = mu.points[order], mu.weights[order]
        kw = kernel.pair_matrix(x, pts, pts) * w[:, None] * w[None, :]
        f, g = fs[:, order], gs[:, order]
        # B_j = sum_{a, b <= j} f_a kw_ab g_b, grown one row and one column at a time
        rows = g @ np.tril(kw).T
        cols = f @ np.triu(kw, 1)
        block = np.cumsum(f * rows + g * cols, axis=1)
        total = block[:, -1:]
        unique = np.unique(ds)
        ends = np.searchsorted(ds, unique, side="right") - 1
        # T_eps para eps en [u_k, u_{k+1}) conserva los pares fuera del bloque de u_k
        values = np.abs(total - block[:, ends])
        k = int(np.searchsorted(unique, delta, side="right")) - 1
        plain[:, col] = values[:, k] if k >= 0 else np.abs(total[:, 0])
        reach = np.append(unique[1:], math.inf) > delta
        sharp[:, col] = values[:, reach].max(axis=1)
    return plain, sharp


@dataclass(frozen=True, eq=False)
class MaximalTruncation:
    value: float
    breakpoint: float | None
    keys: np.ndarray
    values: np.ndarray


def maximal_truncation_exact(
    kernel: BilinearKernel,
    nu1: AtomicMeasure,
    nu2: AtomicMeasure,
    x,
    delta: float = 0.0,
    mode: TruncationMode = "max",
) -> MaximalTruncation:
    """sup_{eps > delta} |T_eps(nu1, nu2)(x)|, attained at a breakpoint."""
    if delta < 0:
        raise ValueError("delta debe ser no negativo")
    profile = truncation_profile(kernel, nu1, nu2, x, mode)
    values = np.abs(profile.sums)
    # T_eps para eps en (delta, u_i) con u_i > delta es S_i
    above = profile.keys > delta
    if not above.any():
        return MaximalTruncation(0.0, None, profile.keys, values)
    candidates = np.where(above, values, -1.0)
    i = int(np.argmax(candidates))
    return MaximalTruncation(float(values[i]), float(profile.keys[i]), profile.keys, values)


def maximal_truncation_grid(
    kernel: BilinearKernel,
    nu1: AtomicMeasure,
    nu2: AtomicMeasure,
    x,
    delta: float,
    eps_grid: np.ndarray | None = None,
    per_octave: int = 8,
) -> float:
    """max |T_eps| over a geometric eps grid above delta; never exceeds the exact sup."""
    profile = truncation_profile(kernel, nu1, nu2, x)
    if len(profile.keys) == 0:
        return 0.0
    if eps_grid is None:
        lo = max(delta, nu1.resolution * 1e-3, 1e-300)
        hi = float(profile.keys[-1])
        if hi <= lo:
            return 0.0
        count = max(2, int(math.ceil(math.log2(hi / lo) * per_octave)) + 1)
        eps_grid = np.geomspace(lo, hi, count)
    eps_grid = np.asarray(eps_grid, dtype=float)
    eps_grid = eps_grid[eps_grid > delta]
    if len(eps_grid) == 0:
        return 0.0
    return float(np.max(np.abs(profile.value_at(eps_grid))))


def trilinear_form(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    f: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    spec: TruncationSpec | None = None,
) -> complex:
    """<T_eps(f dmu, g dmu), h>_mu."""
    nu1, nu2 = mu.density(f), mu.density(g)
    weights = np.asarray(h, dtype=complex) * mu.weights
    total = 0j
    for x, w in zip(mu.points, weights):
        if w != 0:
            total += w * apply_truncated(kernel, nu1, nu2, x, spec)
    return total


def trilinear_form_naive(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    f: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    eps: float = 0.0,
) -> complex:
    """Three nested loops over the atoms; reference for the vectorised sums."""
    total = 0j
    pts, w = mu.points, mu.weights
    for i in range(mu.size):
        for j in range(mu.size):
            for k in range(mu.size):
                key = max(np.linalg.norm(pts[i] - pts[j]), np.linalg.norm(pts[i] - pts[k]))
                if key <= eps or key == 0:
                    continue
                total += kernel(pts[i], pts[j], pts[k]) * f[j] * g[k] * h[i] * w[i] * w[j] * w[k]
    return total


class PairPredicate(Protocol):
    def mask(self, ys: np.ndarray, zs: np.ndarray) -> np.ndarray: ...


class AllPairs:
    def mask(self, ys, zs):
        return np.ones((len(ys), len(zs)), dtype=bool)


class NoPairs:
    def mask(self, ys, zs):
        return np.zeros((len(ys), len(zs)), dtype=bool)


@dataclass(frozen=True)
class ProductSet:
    """E x F; a missing factor means the whole space."""

    first: Region | None = None
    second: Region | None = None

    def mask(self, ys, zs):
        a = np.ones(len(ys), dtype=bool) if self.first is None else self.first.mask(ys)
        b = np.ones(len(zs), dtype=bool) if self.second is None else self.second.mask(zs)
        return a[:, None] & b[None, :]


@dataclass(frozen=True)
class Complement:
    inner: PairPredicate

    def mask(self, ys, zs):
        return ~self.inner.mask(ys, zs)


@dataclass(frozen=True)
class Intersection:
    parts: tuple[PairPredicate, ...]

    def mask(self, ys, zs):
        out = np.ones((len(ys), len(zs)), dtype=bool)
        for part in self.parts:
            out &= part.mask(ys, zs)
        return out


@dataclass(frozen=True, eq=False)
class SeparatedFrom:
    """Pairs with inf over x in A of max(|x-y|, |x-z|) >= distance."""

    anchors: np.ndarray
    distance: float

    def mask(self, ys, zs):
        anchors = as_points(self.anchors, ys.shape[1] if len(ys) else None)
        if len(anchors) == 0:
            return np.ones((len(ys), len(zs)), dtype=bool)
        dy = np.linalg.norm(ys[None, :, :] - anchors[:, None, :], axis=2)
        dz = np.linalg.norm(zs[None, :, :] - anchors[:, None, :], axis=2)
        keys = np.maximum(dy[:, :, None], dz[:, None, :]).min(axis=0)
        return keys >= self.distance


def pair_restricted_form(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    region: PairPredicate,
    f: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
) -> complex:
    """<T(1_B f (x) g), h>_mu without truncation."""
    if mu.size == 0:
        return 0j
    nu1, nu2 = mu.density(f), mu.density(g)
    keep = region.mask(mu.points, mu.points)
    weights = np.asarray(h, dtype=complex) * mu.weights
    total = 0j
    for x, w in zip(mu.points, weights):
        if w == 0 or not keep.any():
            continue
        total += w * complex(_pair_terms(kernel, nu1, nu2, x)[keep].sum())
    return total


def _ratio(num: float, den: float, what: str) -> float:
    if den > 0:
        return num / den
    if num == 0:
        return 0.0
    logger.warning("%s: denominador nulo con numerador %g", what, num)
    return math.inf


def compare_truncations(
    kernel: BilinearKernel, nu1: AtomicMeasure, nu2: AtomicMeasure, x, eps: float
) -> float:
    """|T_eps - T~_eps| / (M_m nu1(x) M_m nu2(x))."""
    x = as_point(x, nu1.dim)
    nu1.require_scale(eps, "eps")
    diff = abs(
        apply_truncated(kernel, nu1, nu2, x, TruncationSpec("max", eps))
        - apply_truncated(kernel, nu1, nu2, x, TruncationSpec("ball", eps))
    )
    m = kernel.params.m
    den = radial(nu1, x, m) * radial(nu2, x, m) if nu1.size and nu2.size else 0.0
    return _ratio(diff, den, "comparación de truncaciones")


def basic_bound_ratio(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    f: np.ndarray,
    g: np.ndarray,
    x,
    eps: float,
    p1: float,
    p2: float,
) -> float:
    """sum_{key > eps} |K f g| against eps^{-m(1/p1+1/p2)} ||f||_p1 ||g||_p2."""
    x = as_point(x, mu.dim)
    mu.require_scale(eps, "eps")
    nu1, nu2 = mu.density(f), mu.density(g)
    keep = _pair_keys(nu1, nu2, x, "max") > eps
    lhs = float(np.abs(_pair_terms(kernel, nu1, nu2, x))[keep].sum()) if mu.size else 0.0
    w = mu.real_weights
    norm_f = float(np.sum(np.abs(f) ** p1 * w) ** (1.0 / p1))
    norm_g = float(np.sum(np.abs(g) ** p2 * w) ** (1.0 / p2))
    m = kernel.params.m
    rhs = eps ** (-m * (1.0 / p1 + 1.0 / p2)) * norm_f * norm_g
    return _ratio(lhs, rhs, "cota básica")


def suppression_comparison_ratio(
    kernel: SuppressedKernel,
    mu: AtomicMeasure,
    f: np.ndarray,
    g: np.ndarray,
    x,
    r_min: float | None = None,
) -> float:
    """(T_{Phi,#}(f,g)(x) - T_{#,Phi(x)}(f,g)(x))_+ / (M_mu f(x) M_mu g(x))."""
    x = as_point(x, mu.dim)
    r_min = mu.resolution if r_min is None else r_min
    nu1, nu2 = mu.density(f), mu.density(g)
    suppressed = maximal_truncation_exact(kernel, nu1, nu2, x, r_min).value
    plain = maximal_truncation_exact(kernel.base, nu1, nu2, x, max(kernel.profile(x), r_min)).value
    excess = max(suppressed - plain, 0.0)
    den = centered(mu, nu1, x, r_min=r_min) * centered(mu, nu2, x, r_min=r_min)
    return _ratio(excess, den, "comparación con supresión")


def separation_ratio(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    anchors: np.ndarray,
    f: np.ndarray,
    g: np.ndarray,
    h0: np.ndarray,
    t: float,
) -> float:
    """|<T(1_B f (x) g), h0>| against t^{-alpha} sum M_{mu,m}(f,g)|h0| dmu.

    ``h0`` must have mu-mean zero and be supported on ``anchors``; B is the
    set of pairs at max-distance >= t d(A) from the anchors.
    """
    if t < 2:
        raise ValueError("t debe ser al menos 2")
    anchors = as_points(anchors, mu.dim)
    h0 = np.asarray(h0, dtype=complex)
    mean = complex(np.sum(h0 * mu.weights))
    if abs(mean) > 1e-9 * max(1.0, float(np.sum(np.abs(h0) * mu.real_weights))):
        raise ValueError("h0 debe tener media cero")
    diameter = float(np.max(np.linalg.norm(anchors[:, None] - anchors[None, :], axis=2))) if len(anchors) > 1 else 0.0
    region = SeparatedFrom(anchors, t * diameter)
    lhs = abs(pair_restricted_form(kernel, mu, region, f, g, h0))
    nu1, nu2 = mu.density(f), mu.density(g)
    m, alpha = kernel.params.m, kernel.params.alpha
    support = np.abs(h0) > 0
    rhs = t ** (-alpha) * sum(
        radial(nu1, x, m, nu2=nu2) * abs(v) * w
        for x, v, w in zip(mu.points[support], h0[support], mu.real_weights[support])
    )
    return _ratio(lhs, rhs, "separación")
