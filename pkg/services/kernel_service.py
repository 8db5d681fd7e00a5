"""Bilinear Calderón-Zygmund kernels, suppressed kernels and Lipschitz profiles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .geometry_service import Cube, as_points
from .harness_errors import DiagonalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelParams:
    m: float
    alpha: float = 1.0
    constant: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m debe ser positivo")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha debe estar en (0, 1]")


def _triples(x, y, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y, z = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (x, y, z))
    return np.broadcast_arrays(x, y, z)


class BilinearKernel:
    """K(x, y, z) off the full diagonal x = y = z."""

    name = "kernel"

    def __init__(self, params: KernelParams):
        self.params = params

    def _evaluate(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x, y, z) -> np.ndarray:
        x, y, z = _triples(x, y, z)
        d = np.linalg.norm(x - y, axis=-1) + np.linalg.norm(x - z, axis=-1)
        if np.any(d == 0):
            raise DiagonalError("núcleo evaluado en x = y = z")
        return self._evaluate(x, y, z)

    def __call__(self, x, y, z) -> complex:
        return complex(self.evaluate(x, y, z).reshape(-1)[0])

    def pair_matrix(self, x: np.ndarray, ys: np.ndarray, zs: np.ndarray) -> np.ndarray:
        """K(x, y_j, z_k) for all pairs; diagonal pairs are set to zero."""
        n1, n2 = len(ys), len(zs)
        out = np.zeros((n1, n2), dtype=complex)
        if n1 == 0 or n2 == 0:
            return out
        dim = ys.shape[1]
        yy = np.broadcast_to(ys[:, None, :], (n1, n2, dim))
        zz = np.broadcast_to(zs[None, :, :], (n1, n2, dim))
        dy = np.linalg.norm(ys - x, axis=1)
        dz = np.linalg.norm(zs - x, axis=1)
        off = (dy[:, None] + dz[None, :]) > 0
        if off.any():
            count = int(off.sum())
            xx = np.broadcast_to(x, (count, dim))
            out[off] = self._evaluate(xx, yy[off], zz[off])
        return out

    def scaled(self, factor: complex) -> "BilinearKernel":
        return ScaledKernel(self, factor)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params})"


class ScalarModelKernel(BilinearKernel):
    """C (|x-y| + |x-z|)^{-2m}."""

    name = "scalar"

    def _evaluate(self, x, y, z):
        d = np.linalg.norm(x - y, axis=-1) + np.linalg.norm(x - z, axis=-1)
        return (self.params.constant * d ** (-2.0 * self.params.m)).astype(complex)


class AntisymmetricKernel(BilinearKernel):
    """C ((y - x) . e) / (|x-y| + |x-z|)^{2m+1}."""

    name = "antisymmetric"

    def __init__(self, params: KernelParams, direction: np.ndarray | None = None):
        super().__init__(params)
        self.direction = None if direction is None else np.asarray(direction, dtype=float)

    def _evaluate(self, x, y, z):
        e = self.direction
        if e is None:
            e = np.zeros(x.shape[-1])
            e[0] = 1.0
        d = np.linalg.norm(x - y, axis=-1) + np.linalg.norm(x - z, axis=-1)
        return (self.params.constant * ((y - x) @ (e / np.linalg.norm(e))) / d ** (2.0 * self.params.m + 1)).astype(
            complex
        )


class ScaledKernel(BilinearKernel):
    def __init__(self, base: BilinearKernel, factor: complex):
        super().__init__(KernelParams(base.params.m, base.params.alpha, base.params.constant * abs(factor)))
        self.base = base
        self.factor = factor
        self.name = f"{base.name}*{factor}"

    def _evaluate(self, x, y, z):
        return self.factor * self.base._evaluate(x, y, z)

    def pair_matrix(self, x, ys, zs):
        return self.factor * self.base.pair_matrix(x, ys, zs)


class AdjointKernel(BilinearKernel):
    """K^{1*}(x,y,z) = K(y,x,z) and K^{2*}(x,y,z) = K(z,y,x)."""

    def __init__(self, base: BilinearKernel, which: int):
        if which not in (1, 2):
            raise ValueError("which debe ser 1 o 2")
        super().__init__(base.params)
        self.base = base
        self.which = which
        self.name = f"{base.name}^{which}*"

    def _evaluate(self, x, y, z):
        if self.which == 1:
            return self.base._evaluate(y, x, z)
        return self.base._evaluate(z, y, x)


def adjoint_kernel(kernel: BilinearKernel, which: int) -> BilinearKernel:
    if isinstance(kernel, AdjointKernel) and kernel.which == which:
        return kernel.base
    return AdjointKernel(kernel, which)


def build_kernel(name: str, m: float, alpha: float = 1.0, constant: float = 1.0) -> BilinearKernel:
    params = KernelParams(m, alpha, constant)
    if name == "scalar":
        return ScalarModelKernel(params)
    if name == "antisymmetric":
        return AntisymmetricKernel(params)
    raise ValueError(f"núcleo desconocido: {name}")


@dataclass(frozen=True, eq=False)
class LipschitzProfile:
    """Phi(x) = max(floor, max_i (h_i - |x - a_i|)_+, boundary term)."""

    apexes: np.ndarray
    heights: np.ndarray
    floor: float = 0.0
    boundary: Cube | None = None
    boundary_level: float = 0.0

    def __post_init__(self):
        apexes = np.asarray(self.apexes, dtype=float)
        heights = np.asarray(self.heights, dtype=float).reshape(-1)
        if apexes.ndim == 1:
            apexes = apexes.reshape(len(heights), -1) if len(heights) else apexes.reshape(0, 1)
        if len(apexes) != len(heights):
            raise ValueError("se necesita una altura por vértice")
        if np.any(heights < 0) or self.floor < 0 or self.boundary_level < 0:
            raise ValueError("las piezas del perfil deben ser no negativas")
        apexes.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "apexes", apexes)
        object.__setattr__(self, "heights", heights)

    @classmethod
    def zero(cls, dim: int) -> "LipschitzProfile":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_cones(cls, cones: list[tuple[np.ndarray, float]], dim: int, floor: float = 0.0) -> "LipschitzProfile":
        if not cones:
            return cls(np.zeros((0, dim)), np.zeros(0), floor)
        return cls(np.array([np.atleast_1d(a) for a, _ in cones], dtype=float), np.array([h for _, h in cones]), floor)

    @property
    def cone_count(self) -> int:
        return len(self.heights)

    def evaluate(self, points) -> np.ndarray:
        pts = as_points(points, self.apexes.shape[1])
        values = np.full(len(pts), float(self.floor))
        if self.cone_count:
            cones = np.max(self.heights[None, :] - cdist(pts, self.apexes), axis=1)
            values = np.maximum(values, cones)
        if self.boundary is not None and self.boundary_level > 0:
            values = np.maximum(values, self.boundary_level - self.boundary.boundary_distance(pts))
        return np.maximum(values, 0.0)

    def __call__(self, x) -> float:
        return float(self.evaluate(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def zero_mask(self, points) -> np.ndarray:
        return self.evaluate(points) == 0

    def with_floor(self, floor: float) -> "LipschitzProfile":
        return LipschitzProfile(self.apexes, self.heights, max(self.floor, floor), self.boundary, self.boundary_level)

    def with_boundary(self, cube: Cube, lambda0: float) -> "LipschitzProfile":
        return LipschitzProfile(self.apexes, self.heights, self.floor, cube, lambda0 * cube.side)

    def pruned(self) -> "LipschitzProfile":
        """Drop cones dominated by another cone."""
        if self.cone_count < 2:
            return self
        gap = cdist(self.apexes, self.apexes)
        reach = self.heights[None, :] - gap
        np.fill_diagonal(reach, -np.inf)
        order = np.arange(self.cone_count)
        # un cono se conserva salvo que otro lo cubra; en empates queda el de menor índice
        covered = (reach > self.heights[:, None]) | ((reach == self.heights[:, None]) & (order[None, :] < order[:, None]))
        keep = ~np.any(covered, axis=1)
        return LipschitzProfile(self.apexes[keep], self.heights[keep], self.floor, self.boundary, self.boundary_level)

    def to_dict(self) -> dict:
        data = {
            "dim": int(self.apexes.shape[1]),
            "cones": [{"apex": list(map(float, a)), "height": float(h)} for a, h in zip(self.apexes, self.heights)],
            "floor": float(self.floor),
            "boundary": None,
        }
        if self.boundary is not None:
            data["boundary"] = {
                "center": list(self.boundary.center),
                "halfside": self.boundary.halfside,
                "level": float(self.boundary_level),
            }
        return data


def lipschitz_audit(profile: LipschitzProfile, a: np.ndarray, b: np.ndarray) -> float:
    """Worst slope |Phi(a_i) - Phi(b_i)| / |a_i - b_i| over the sample pairs."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    gap = np.linalg.norm(a - b, axis=1)
    keep = gap > 0
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(profile.evaluate(a[keep]) - profile.evaluate(b[keep])) / gap[keep]))


class SuppressedKernel(BilinearKernel):
    """K_Phi = A_Phi K with A_Phi = d^{3b}/(d^{3b} + Phi(x)^b Phi(y)^b Phi(z)^b)."""

    def __init__(self, base: BilinearKernel, profile: LipschitzProfile):
        super().__init__(base.params)
        self.base = base
        self.profile = profile
        self.beta = max(1.0, 2.0 * base.params.m / 3.0)
        self.name = f"{base.name}[Phi]"

    def _suppression(self, d, phi_x, phi_y, phi_z) -> np.ndarray:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            ratio = (phi_x * phi_y * phi_z) ** self.beta / d ** (3.0 * self.beta)
        return 1.0 / (1.0 + np.nan_to_num(ratio, nan=0.0, posinf=np.inf))

    def a_phi(self, x, y, z) -> np.ndarray:
        x, y, z = _triples(x, y, z)
        d = np.linalg.norm(x - y, axis=-1) + np.linalg.norm(x - z, axis=-1)
        if np.any(d == 0):
            raise DiagonalError("A_Phi evaluado en x = y = z")
        dim = x.shape[-1]
        flat = [v.reshape(-1, dim) for v in (x, y, z)]
        phi = [self.profile.evaluate(v).reshape(d.shape) for v in flat]
        return self._suppression(d, *phi)

    def _evaluate(self, x, y, z):
        d = np.linalg.norm(x - y, axis=-1) + np.linalg.norm(x - z, axis=-1)
        phi = [self.profile.evaluate(v) for v in (x, y, z)]
        return self._suppression(d, *phi) * self.base._evaluate(x, y, z)

    def pair_matrix(self, x, ys, zs):
        base = self.base.pair_matrix(x, ys, zs)
        if base.size == 0:
            return base
        dy = np.linalg.norm(ys - x, axis=1)
        dz = np.linalg.norm(zs - x, axis=1)
        d = dy[:, None] + dz[None, :]
        phi_x = self.profile.evaluate(np.atleast_2d(x))[0]
        phi_y = self.profile.evaluate(ys)[:, None]
        phi_z = self.profile.evaluate(zs)[None, :]
        factor = np.where(d > 0, self._suppression(np.where(d > 0, d, 1.0), phi_x, phi_y, phi_z), 0.0)
        return factor * base


def eval_a_phi(kernel: SuppressedKernel, x, y, z) -> float:
    return float(kernel.a_phi(x, y, z).reshape(-1)[0])


def eval_suppressed(kernel: SuppressedKernel, x, y, z) -> complex:
    return kernel(x, y, z)


@dataclass(frozen=True)
class KernelSampler:
    """Scale-stratified sampler over [r_min, diameter]."""

    dim: int
    r_min: float
    diameter: float
    samples: int = 2000
    seed: int = 0
    threshold_every: int = 10


@dataclass
class KernelAudit:
    ratios: dict[str, float]
    samples: int
    skipped: int
    threshold_samples: int
    key_comparison: float | None = None
    witnesses: dict[str, list[float]] = field(default_factory=dict)

    def passed(self, ceiling: float) -> bool:
        return all(value <= ceiling for value in self.ratios.values())


def _directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    raw = rng.standard_normal((count, dim))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return raw / norms


def sample_triples(sampler: KernelSampler) -> dict[str, np.ndarray]:
    """Base triples plus admissible perturbations for the three Hölder conditions."""
    rng = np.random.default_rng(sampler.seed)
    count, dim = sampler.samples, sampler.dim
    scale = np.exp(rng.uniform(math.log(sampler.r_min), math.log(max(sampler.diameter, sampler.r_min)), count))
    x = rng.uniform(0.0, sampler.diameter, (count, dim))
    a = rng.uniform(0.0, 1.0, count)
    b = rng.uniform(0.0, 1.0, count)
    top = np.maximum(np.maximum(a, b), 1e-12)
    y = x + (scale * a / top)[:, None] * _directions(rng, count, dim)
    z = x + (scale * b / top)[:, None] * _directions(rng, count, dim)
    reach = np.maximum(np.linalg.norm(x - y, axis=1), np.linalg.norm(x - z, axis=1)) / 2.0
    rho = rng.uniform(0.0, 1.0, count)
    threshold = np.zeros(count, dtype=bool)
    threshold[:: sampler.threshold_every] = True
    rho[threshold] = 1.0
    steps = {}
    for key in ("x", "y", "z"):
        steps[key] = (reach * rho)[:, None] * _directions(rng, count, dim)
    return {"x": x, "y": y, "z": z, "hx": steps["x"], "hy": steps["y"], "hz": steps["z"], "threshold": threshold}


def verify_kernel_conditions(kernel: BilinearKernel, sampler: KernelSampler) -> KernelAudit:
    """Worst sampled ratio |LHS| / RHS for size, Hölder and (suppressed) improved size."""
    s = sample_triples(sampler)
    x, y, z = s["x"], s["y"], s["z"]
    m, alpha = kernel.params.m, kernel.params.alpha
    d = np.linalg.norm(x - y, axis=1) + np.linalg.norm(x - z, axis=1)
    valid = d > 0
    perturbed = {
        "x_holder": (x + s["hx"], y, z, s["hx"]),
        "y_holder": (x, y + s["hy"], z, s["hy"]),
        "z_holder": (x, y, z + s["hz"], s["hz"]),
    }
    for xp, yp, zp, _ in perturbed.values():
        dp = np.linalg.norm(xp - yp, axis=1) + np.linalg.norm(xp - zp, axis=1)
        valid &= dp > 0
    skipped = int((~valid).sum())
    x, y, z, d = x[valid], y[valid], z[valid], d[valid]
    ratios: dict[str, float] = {}
    witnesses: dict[str, list[float]] = {}

    def _record(name: str, values: np.ndarray, points: np.ndarray) -> None:
        if len(values) == 0:
            ratios[name] = 0.0
            return
        i = int(np.argmax(values))
        ratios[name] = float(values[i])
        witnesses[name] = [float(v) for v in points[i]]

    base = kernel._evaluate(x, y, z)
    _record("size", np.abs(base) * d ** (2 * m), x)
    for name, (xp, yp, zp, h) in perturbed.items():
        h = h[valid]
        moved = kernel._evaluate(xp[valid], yp[valid], zp[valid])
        step = np.linalg.norm(h, axis=1)
        rhs = step**alpha / d ** (2 * m + alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(step > 0, np.abs(moved - base) / rhs, 0.0)
        _record(name, values, x)

    key = None
    if isinstance(kernel, SuppressedKernel):
        phi = [kernel.profile.evaluate(v) for v in (x, y, z)]
        _record("improved_size", np.abs(base) * (d + phi[0] + phi[1] + phi[2]) ** (2 * m), x)
        beta = kernel.beta
        product = (phi[0] * phi[1] * phi[2]) ** beta
        powers = phi[0] ** (3 * beta) + phi[1] ** (3 * beta) + phi[2] ** (3 * beta)
        d3 = d ** (3 * beta)
        key = float(np.min((d3 + product) / (d3 + powers))) if len(d) else None

    threshold = int(s["threshold"][valid].sum())
    if skipped:
        logger.debug("%d muestras degeneradas del núcleo omitidas", skipped)
    return KernelAudit(ratios, int(valid.sum()), skipped, threshold, key, witnesses)
