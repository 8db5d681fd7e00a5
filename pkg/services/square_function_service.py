"""Bilinear vertical square functions.

theta_t(nu1, nu2)(x) is the double sum of s_t(x, y, z) w_y v_z and
BV = (int |theta_t|^2 dt/t)^{1/2}, integrated in log t over a finite scale
window. There are no truncations here, so no maximal or suppressed layer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry_service import AtomicMeasure, Cube, as_point, has_small_boundary, is_doubling
from .harness_errors import PreconditionError
from .kernel_service import KernelParams
from .maximal_service import radial

logger = logging.getLogger(__name__)


class SquareKernelFamily:
    """s_t(x, y, z) for t > 0."""

    name = "family"

    def __init__(self, params: KernelParams):
        self.params = params

    def _evaluate(self, t: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, t, x, y, z) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("t debe ser positivo")
        x, y, z = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (x, y, z))
        x, y, z = np.broadcast_arrays(x, y, z)
        return self._evaluate(np.broadcast_to(t, x.shape[:-1]), x, y, z)

    def __call__(self, t: float, x, y, z) -> complex:
        return complex(self.evaluate(t, x, y, z).reshape(-1)[0])

    def theta_many(
        self, ts: np.ndarray, x: np.ndarray, ys: np.ndarray, zs: np.ndarray, w: np.ndarray, v: np.ndarray
    ) -> np.ndarray:
        """theta_t for every t in ``ts``."""
        out = np.zeros(len(ts), dtype=complex)
        if len(ys) == 0 or len(zs) == 0:
            return out
        dim = ys.shape[1]
        yy = np.broadcast_to(ys[:, None, :], (len(ys), len(zs), dim))
        zz = np.broadcast_to(zs[None, :, :], (len(ys), len(zs), dim))
        xx = np.broadcast_to(x, yy.shape)
        weights = w[:, None] * v[None, :]
        for i, t in enumerate(ts):
            out[i] = np.sum(self._evaluate(np.full(weights.shape, t), xx, yy, zz) * weights)
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params})"


class ProductFamily(SquareKernelFamily):
    """t^{2a} / ((t+|x-y|)^{m+a} (t+|x-z|)^{m+a}) with a = ``decay`` (alpha by default)."""

    name = "product"

    def __init__(self, params: KernelParams, decay: float | None = None):
        super().__init__(params)
        self.decay = params.alpha if decay is None else float(decay)
        if not self.decay > 0:
            raise ValueError("decay debe ser positivo")

    def _factor(self, t, d):
        m, a = self.params.m, self.decay
        return t**a / (t + d) ** (m + a)

    def _evaluate(self, t, x, y, z):
        dy = np.linalg.norm(x - y, axis=-1)
        dz = np.linalg.norm(x - z, axis=-1)
        return (self.params.constant * self._factor(t, dy) * self._factor(t, dz)).astype(complex)

    def theta_many(self, ts, x, ys, zs, w, v):
        if len(ys) == 0 or len(zs) == 0:
            return np.zeros(len(ts), dtype=complex)
        ts = np.asarray(ts, dtype=float)[:, None]
        first = self._factor(ts, np.linalg.norm(ys - x, axis=1)[None, :]) @ w
        second = self._factor(ts, np.linalg.norm(zs - x, axis=1)[None, :]) @ v
        return self.params.constant * first * second


def build_family(m: float, alpha: float = 1.0, constant: float = 1.0, decay: float | None = None) -> ProductFamily:
    return ProductFamily(KernelParams(m, alpha, constant), decay)


@dataclass(frozen=True)
class ScaleQuadrature:
    """Logarithmic t-grid over [t_min, t_max]; ``cutoff`` is the A of BV^A."""

    t_min: float
    t_max: float
    per_octave: int = 8
    cutoff: float | None = None

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError("se necesita 0 < t_min < t_max")
        if self.per_octave < 4:
            raise ValueError("al menos 4 puntos por octava")

    @classmethod
    def for_measure(
        cls, mu: AtomicMeasure, per_octave: int = 8, tmax_factor: float = 16.0, cutoff: float | None = None
    ) -> "ScaleQuadrature":
        """t_min = resolution and t_max = tmax_factor * diameter."""
        top = max(tmax_factor * mu.diameter(), 2 * mu.resolution)
        return cls(mu.resolution, top, per_octave, cutoff)

    def nodes(self) -> np.ndarray:
        count = int(math.ceil(math.log2(self.t_max / self.t_min) * self.per_octave)) + 1
        return np.geomspace(self.t_min, self.t_max, max(count, 2))

    def refined(self) -> "ScaleQuadrature":
        return ScaleQuadrature(self.t_min, self.t_max, 2 * self.per_octave, self.cutoff)

    def truncated(self, cutoff: float) -> "ScaleQuadrature":
        return ScaleQuadrature(self.t_min, self.t_max, self.per_octave, cutoff)


def theta_t(family: SquareKernelFamily, nu1: AtomicMeasure, nu2: AtomicMeasure, x, t: float) -> complex:
    if not t > 0:
        raise ValueError("t debe ser positivo")
    x = as_point(x, nu1.dim)
    return complex(family.theta_many(np.array([float(t)]), x, nu1.points, nu2.points, nu1.weights, nu2.weights)[0])


@dataclass(frozen=True)
class BVResult:
    value: float
    lower_tail: float
    upper_tail: float
    convergent: bool
    nodes: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "lower_tail": self.lower_tail,
            "upper_tail": self.upper_tail,
            "convergent": self.convergent,
            "nodes": self.nodes,
        }


def _log_integral(ts: np.ndarray, values: np.ndarray, cutoff: float | None) -> float:
    """Trapezoid rule in log t for values >= 0, clipped at ``cutoff`` by linear interpolation."""
    u = np.log(ts)
    if cutoff is not None:
        if cutoff <= ts[0]:
            return 0.0
        if cutoff < ts[-1]:
            end = math.log(cutoff)
            keep = u < end
            u = np.append(u[keep], end)
            values = np.append(values[keep], np.interp(end, np.log(ts), values))
    return float(integrate.trapezoid(values, u))


def bv_profile(family: SquareKernelFamily, nu1: AtomicMeasure, nu2: AtomicMeasure, x, quad: ScaleQuadrature) -> BVResult:
    """BV (or BV^A) by quadrature, with the tail estimates outside the window."""
    x = as_point(x, nu1.dim)
    ts = quad.nodes()
    theta = family.theta_many(ts, x, nu1.points, nu2.points, nu1.weights, nu2.weights)
    squares = np.abs(theta) ** 2
    value = math.sqrt(max(_log_integral(ts, squares, quad.cutoff), 0.0))
    m, a = family.params.m, family.params.alpha
    # |theta_t| ~ t^{2a} debajo de los átomos y ~ t^{-2m} más allá
    lower_tail = float(squares[0]) / (4 * a)
    upper_tail = 0.0 if quad.cutoff is not None and quad.cutoff < quad.t_max else float(squares[-1]) / (4 * m)
    convergent = True
    step = max(1, quad.per_octave)
    if len(ts) > step and squares[0] > 0 and squares[0] >= squares[step]:
        convergent = False
        logger.warning("BV: |theta_t| no decae hacia t_min = %g", quad.t_min)
    if upper_tail > 0 and len(ts) > step and squares[-1] >= squares[-1 - step]:
        convergent = False
        logger.warning("BV: |theta_t| no decae hacia t_max = %g", quad.t_max)
    if upper_tail > 0:
        logger.debug("BV: estimación de cola superior %g", upper_tail)
    return BVResult(value, lower_tail, upper_tail, convergent, len(ts))


def bv(family: SquareKernelFamily, nu1: AtomicMeasure, nu2: AtomicMeasure, x, quad: ScaleQuadrature) -> float:
    return bv_profile(family, nu1, nu2, x, quad).value


def bv_reference(
    family: SquareKernelFamily, nu1: AtomicMeasure, nu2: AtomicMeasure, x, quad: ScaleQuadrature
) -> float:
    """Adaptive quadrature of the same integral, used as an oracle."""
    x = as_point(x, nu1.dim)
    top = quad.t_max if quad.cutoff is None else min(quad.t_max, quad.cutoff)
    if top <= quad.t_min:
        return 0.0

    def integrand(u: float) -> float:
        value = family.theta_many(np.array([math.exp(u)]), x, nu1.points, nu2.points, nu1.weights, nu2.weights)[0]
        return abs(value) ** 2

    value, _ = integrate.quad(integrand, math.log(quad.t_min), math.log(top), limit=400, epsabs=0.0, epsrel=1e-10)
    return math.sqrt(max(value, 0.0))


def theta_bound_ratio(
    family: SquareKernelFamily, nu1: AtomicMeasure, nu2: AtomicMeasure, x, t: float, r_min: float | None = None
) -> float:
    """|theta_t(nu1, nu2)(x)| / (M_m nu1(x) M_m nu2(x)) with radii at least max(t, r_min)."""
    x = as_point(x, nu1.dim)
    value = abs(theta_t(family, nu1, nu2, x, t))
    floor = max(t, nu1.resolution if r_min is None else r_min)
    m = family.params.m
    den = radial(nu1, x, m, floor) * radial(nu2, x, m, floor) if nu1.size and nu2.size else 0.0
    if den > 0:
        return value / den
    return 0.0 if value == 0 else math.inf


@dataclass
class SquareAudit:
    ratios: dict[str, float]
    samples: int
    witnesses: dict[str, list[float]] = field(default_factory=dict)

    def passed(self, ceiling: float) -> bool:
        return all(value <= ceiling for value in self.ratios.values())


def verify_sq_kernel(
    family: SquareKernelFamily, dim: int, r_min: float, diameter: float, samples: int = 2000, seed: int = 0
) -> SquareAudit:
    """Worst sampled ratio for the size and the three Hölder conditions (steps below t/2)."""
    rng = np.random.default_rng(seed)
    m, a = family.params.m, family.params.alpha
    t = np.exp(rng.uniform(math.log(r_min), math.log(max(diameter, r_min * 2)), samples))
    x = rng.uniform(0.0, diameter, (samples, dim))
    reach = np.exp(rng.uniform(math.log(r_min), math.log(max(diameter, r_min * 2)), (samples, 2)))

    def _direction() -> np.ndarray:
        raw = rng.standard_normal((samples, dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return raw / norms

    y = x + reach[:, :1] * _direction()
    z = x + reach[:, 1:] * _direction()
    rho = rng.uniform(0.0, 1.0, samples)
    rho[::10] = 1.0 - 1e-9
    steps = {key: (rho * t / 2)[:, None] * _direction() for key in ("x", "y")}

    def _rhs(xx, yy, zz):
        return (t + np.linalg.norm(xx - yy, axis=1)) ** (m + a) * (t + np.linalg.norm(xx - zz, axis=1)) ** (m + a)

    ratios: dict[str, float] = {}
    witnesses: dict[str, list[float]] = {}

    def _record(name: str, values: np.ndarray) -> None:
        i = int(np.argmax(values))
        ratios[name] = float(values[i])
        witnesses[name] = [float(t[i]), *map(float, x[i])]

    base = family.evaluate(t, x, y, z)
    _record("size", np.abs(base) * _rhs(x, y, z) / t ** (2 * a))
    moves = {
        "x_holder": ((x + steps["x"], y, z), (x, y, z), steps["x"]),
        "y_holder": ((x, y + steps["y"], z), (x, y, z), steps["y"]),
        # la condición en z reusa los sorteos de y con y, z intercambiados
        "z_holder": ((x, z, y + steps["y"]), (x, z, y), steps["y"]),
    }
    for name, (moved, origin, h) in moves.items():
        diff = np.abs(family.evaluate(t, *moved) - family.evaluate(t, *origin))
        size = np.linalg.norm(h, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(size > 0, diff * _rhs(*origin) / (t**a * size**a), 0.0)
        _record(name, values)
    return SquareAudit(ratios, samples, witnesses)


def qualifies(mu: AtomicMeasure, cube: Cube, beta: float, c1: float) -> bool:
    """(2, beta)-doubling with c1-small boundary."""
    return is_doubling(mu, cube, 2.0, beta) and has_small_boundary(mu, cube, c1)


def t1_testing_statistic(
    family: SquareKernelFamily,
    mu: AtomicMeasure,
    cube: Cube,
    exceptional: np.ndarray | None,
    l: float,
    *,
    per_octave: int = 8,
    beta: float | None = None,
    c1: float | None = None,
) -> float | None:
    """sup_lambda lambda^l mu({x in Q minus H_Q : BV^{l(Q)}(1_Q, 1_Q)(x) > lambda}) / mu(Q).

    None when mu(Q) = 0.
    """
    if not l > 0:
        raise ValueError("l debe ser positivo")
    if beta is not None and c1 is not None and not qualifies(mu, cube, beta, c1):
        raise PreconditionError("el cubo no es doblante con frontera pequeña")
    inside = cube.mask(mu.points)
    base = float(mu.real_weights[inside].sum())
    if base <= 0:
        logger.debug("cubo sin masa, estadístico omitido")
        return None
    exceptional = np.zeros(mu.size, dtype=bool) if exceptional is None else np.asarray(exceptional, dtype=bool)
    region = inside & ~exceptional
    if not region.any():
        return 0.0
    local = mu.restrict(inside)
    quad = ScaleQuadrature(mu.resolution, max(cube.side, 2 * mu.resolution), per_octave, cube.side)
    values = np.array([bv(family, local, local, x, quad) for x in mu.points[region]])
    weights = mu.real_weights[region]
    best = 0.0
    for level in np.unique(values):
        if level <= 0:
            continue
        best = max(best, level**l * float(weights[values >= level].sum()) / base)
    return best
