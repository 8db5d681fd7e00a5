"""Calderón-Zygmund decomposition of measures and the Whitney covering.

Both constructions are judged by their verifiers: any output passing the
property checks is usable downstream.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry_service import (
    AtomicMeasure,
    Cube,
    CubeUnion,
    doubling_ancestor_integral,
    has_small_boundary,
    is_doubling,
    small_boundary_constant,
    smallest_big_doubling_ancestor,
)
from .harness_errors import DecompositionError, PreconditionError, WhitneyError

logger = logging.getLogger(__name__)

_REL_SLACK = 1e-12
# factor de escape informado: el menor que escapa, llevado por encima de 20
ESCAPE_FACTOR = 21.0


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    value: float
    bound: float | None = None
    detail: str | None = None

    def to_dict(self) -> dict:
        data = {"name": self.name, "passed": self.passed, "value": self.value}
        if self.bound is not None:
            data["bound"] = self.bound
        if self.detail:
            data["detail"] = self.detail
        return data


@dataclass
class VerificationReport:
    subject: str
    entries: list[PropertyCheck] = field(default_factory=list)

    def add(self, name: str, passed: bool, value: float, bound: float | None = None, detail: str | None = None):
        self.entries.append(PropertyCheck(name, bool(passed), float(value), bound, detail))

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    def failures(self) -> list[str]:
        return [entry.name for entry in self.entries if not entry.passed]

    def to_dict(self) -> dict:
        return {"subject": self.subject, "passed": self.passed, "entries": [e.to_dict() for e in self.entries]}


def _cheb(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    return np.max(np.abs(points - center), axis=1)


def _location_map(nu: AtomicMeasure, mu: AtomicMeasure) -> tuple[np.ndarray, np.ndarray, int]:
    """Shared location ids for the atoms of nu and mu."""
    both = np.vstack([nu.points, mu.points]) if nu.size + mu.size else np.zeros((0, mu.dim))
    _, inverse = np.unique(both, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    count = int(inverse.max()) + 1 if len(inverse) else 0
    return inverse[: nu.size], inverse[nu.size :], count


@dataclass(frozen=True, eq=False)
class CZDecomposition:
    lam: float
    cubes: list[Cube]
    f: np.ndarray
    ancestors: list[Cube]
    ancestor_steps: list[int]
    alpha: np.ndarray
    overlap: np.ndarray

    def weights(self, nu: AtomicMeasure, i: int) -> np.ndarray:
        """w_i = 1_{Q_i} / sum_k 1_{Q_k} on the atoms of nu."""
        inside = self.cubes[i].mask(nu.points)
        counts = self._counts(nu.points)
        return np.where(inside, 1.0 / np.maximum(counts, 1), 0.0)

    def _counts(self, points: np.ndarray) -> np.ndarray:
        counts = np.zeros(len(points))
        for cube in self.cubes:
            counts += cube.mask(points)
        return counts

    def phi(self, mu: AtomicMeasure, i: int) -> np.ndarray:
        return self.alpha[i] * self.ancestors[i].mask(mu.points)

    def beta_mass(self, nu: AtomicMeasure, mu: AtomicMeasure, i: int) -> complex:
        """beta_i(R_i) = int_{R_i} w_i dnu - int phi_i dmu."""
        on_r = self.ancestors[i].mask(nu.points)
        w = self.weights(nu, i)
        return complex(np.sum((w * nu.weights)[on_r]) - np.sum(self.phi(mu, i) * mu.weights))

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "cubes": [c.to_dict() for c in self.cubes],
            "ancestors": [r.to_dict() for r in self.ancestors],
            "ancestor_steps": list(self.ancestor_steps),
            "alpha": [[float(a.real), float(a.imag)] for a in self.alpha],
            "max_overlap": int(self.overlap.max()) if len(self.overlap) else 0,
        }


def _candidate_halfside(nu_d: np.ndarray, nu_w: np.ndarray, mu_d: np.ndarray, mu_w: np.ndarray, thr: float) -> float | None:
    """Halfside h of the closed centered cube: the last interval with |nu|(Q) > thr mu(2Q), pushed to half its right end."""
    breaks = np.unique(np.concatenate([nu_d, mu_d / 2.0, [0.0]]))
    nu_mass = np.array([nu_w[nu_d <= b].sum() for b in breaks])
    mu_mass = np.array([mu_w[mu_d <= 2.0 * b].sum() for b in breaks])
    positive = nu_mass > thr * mu_mass * (1 + _REL_SLACK)
    if not positive.any():
        return None
    i = int(np.flatnonzero(positive)[-1])
    if i == len(breaks) - 1:
        raise DecompositionError("|nu|(Q) > thr mu(2Q) persiste más allá de todos los átomos")
    return max(float(breaks[i]), float(breaks[i + 1]) / 2.0)


def cz_decompose(nu: AtomicMeasure, mu: AtomicMeasure, lam: float, m: float = 1.0) -> CZDecomposition:
    """Cubes Q_i, good part f, doubling ancestors R_i and constants alpha_i at level lam."""
    if not mu.nonneg:
        raise ValueError("mu debe ser no negativa")
    n = mu.dim
    total_mu = float(mu.real_weights.sum())
    threshold = 2 ** (n + 1) * nu.total_variation() / total_mu if total_mu > 0 else math.inf
    if not lam > threshold:
        raise PreconditionError(f"lambda = {lam:g} debe superar 2^(n+1)||nu||/||mu|| = {threshold:g}")
    thr = lam / 2 ** (n + 1)
    abs_nu = np.abs(nu.weights)
    candidates: list[tuple[float, int]] = []
    for j in np.flatnonzero(abs_nu > 0):
        p = nu.points[j]
        h = _candidate_halfside(_cheb(nu.points, p), abs_nu, _cheb(mu.points, p), mu.real_weights, thr)
        if h is not None:
            candidates.append((h, int(j)))

    cubes: list[Cube] = []
    for h, j in sorted(candidates, key=lambda c: (-c[0], c[1])):
        p = nu.points[j]
        if any(c.mask(p[None, :])[0] for c in cubes):
            continue
        cubes.append(Cube(tuple(p), h, closed=True))

    covered_mu = np.zeros(mu.size, dtype=bool)
    for cube in cubes:
        covered_mu |= cube.mask(mu.points)
    nu_loc, mu_loc, count = _location_map(nu, mu)
    nu_at = np.zeros(count, dtype=complex)
    np.add.at(nu_at, nu_loc, nu.weights)
    mu_at = np.zeros(count)
    np.add.at(mu_at, mu_loc, mu.real_weights)
    f = np.zeros(mu.size, dtype=complex)
    off = ~covered_mu & (mu_at[mu_loc] > 0)
    f[off] = nu_at[mu_loc[off]] / mu_at[mu_loc[off]]

    ancestors, steps, alpha = [], [], []
    decomposition = CZDecomposition(lam, cubes, f, [], [], np.zeros(0, dtype=complex), np.zeros(0))
    for i, cube in enumerate(cubes):
        try:
            r, k = smallest_big_doubling_ancestor(mu, cube, m, require_mass=True)
        except (RuntimeError, ValueError) as exc:
            raise DecompositionError(f"el cubo {i} no tiene ancestro doblante con masa positiva") from exc
        ancestors.append(r)
        steps.append(k)
        integral = complex(np.sum(decomposition.weights(nu, i) * nu.weights))
        alpha.append(integral / mu.mass(r).real)
    overlap = decomposition._counts(np.vstack([nu.points, mu.points])) if cubes else np.zeros(0)
    logger.debug("CZ: %d cubos, solapamiento máximo %d", len(cubes), int(overlap.max()) if len(overlap) else 0)
    return CZDecomposition(lam, cubes, f, ancestors, steps, np.array(alpha, dtype=complex), overlap)


def _maximality_violation(nu: AtomicMeasure, mu: AtomicMeasure, cube: Cube, thr: float) -> float:
    """max over eta > 2 of |nu|(eta Q) - thr mu(2 eta Q), as right limits."""
    c = cube.center_array
    h = cube.halfside
    d_nu = _cheb(nu.points, c)
    d_mu = _cheb(mu.points, c)
    abs_nu = np.abs(nu.weights)
    top = max(float(d_nu.max()) if len(d_nu) else 0.0, float(d_mu.max()) if len(d_mu) else 0.0)
    grid = [2.0**j for j in range(2, max(2, math.ceil(math.log2(max(top / h, 4.0)))) + 2)]
    etas = np.unique(np.concatenate([[2.0], grid, d_nu[d_nu / h > 2] / h]))
    worst = -math.inf
    for eta in etas:
        lhs = abs_nu[d_nu <= eta * h].sum()
        rhs = thr * mu.real_weights[d_mu <= 2 * eta * h].sum()
        worst = max(worst, float(lhs - rhs * (1 + _REL_SLACK)))
    return worst


def verify_cz(
    decomposition: CZDecomposition,
    nu: AtomicMeasure,
    mu: AtomicMeasure,
    m: float = 1.0,
    overlap_bound: float | None = None,
    b_bound: float | None = None,
) -> VerificationReport:
    """Re-check every decomposition property, beta_i(R_i) = 0 and the ancestor doubling from the raw inputs."""
    report = VerificationReport("cz_decomposition")
    n = mu.dim
    lam = decomposition.lam
    thr = lam / 2 ** (n + 1)
    abs_nu = np.abs(nu.weights)
    cubes = decomposition.cubes

    high = [abs_nu[q.mask(nu.points)].sum() - thr * mu.mass(q.scaled(2.0)).real for q in cubes]
    report.add("selected_density", all(v > 0 for v in high), min(high, default=0.0), 0.0)
    excess = [_maximality_violation(nu, mu, q, thr) for q in cubes]
    report.add("maximal_cubes", all(v <= 0 for v in excess), max(excess, default=0.0), 0.0)

    covered_nu = np.zeros(nu.size, dtype=bool)
    covered_mu = np.zeros(mu.size, dtype=bool)
    for q in cubes:
        covered_nu |= q.mask(nu.points)
        covered_mu |= q.mask(mu.points)
    nu_loc, mu_loc, count = _location_map(nu, mu)
    mu_at = np.zeros(count)
    np.add.at(mu_at, mu_loc, mu.real_weights)
    nu_off = np.zeros(count, dtype=complex)
    np.add.at(nu_off, nu_loc[~covered_nu], nu.weights[~covered_nu])
    f_at = np.zeros(count, dtype=complex)
    np.add.at(f_at, mu_loc[~covered_mu], decomposition.f[~covered_mu] * mu.real_weights[~covered_mu])
    mismatch = float(np.max(np.abs(nu_off - f_at))) if count else 0.0
    scale = max(nu.total_variation(), 1e-300)
    sup_f = float(np.max(np.abs(decomposition.f[~covered_mu]))) if (~covered_mu).any() else 0.0
    report.add("good_part_density", mismatch <= 1e-12 * scale, mismatch, 1e-12 * scale)
    report.add("good_part_bound", sup_f <= lam * (1 + _REL_SLACK), sup_f, lam)

    overlap = int(decomposition.overlap.max()) if len(decomposition.overlap) else 0
    bound = float(4**n if overlap_bound is None else overlap_bound)
    report.add("overlap", overlap <= bound, overlap, bound)

    leak = mean_error = norm_ratio = beta = 0.0
    doubling_ok = True
    ancestor_integral = 0.0
    phi_sum = np.zeros(mu.size)
    for i, (q, r) in enumerate(zip(cubes, decomposition.ancestors)):
        phi = decomposition.phi(mu, i)
        phi_sum += np.abs(phi)
        leak = max(leak, float(np.abs(phi[~r.mask(mu.points)]).sum()))
        target = complex(np.sum(decomposition.weights(nu, i) * nu.weights))
        mean_error = max(mean_error, abs(complex(np.sum(phi * mu.weights)) - target) / max(abs(target), 1e-300))
        norm = float(np.max(np.abs(phi[mu.real_weights > 0]))) if np.any(mu.real_weights > 0) else 0.0
        nu_q = float(abs_nu[q.mask(nu.points)].sum())
        norm_ratio = max(norm_ratio, norm * mu.mass(r).real / (2 * nu_q) if nu_q > 0 else (0.0 if norm == 0 else math.inf))
        beta = max(beta, abs(decomposition.beta_mass(nu, mu, i)) / max(nu_q, 1e-300))
        doubling_ok &= is_doubling(mu, r, 6.0, 6.0 ** (m + 1)) and r.contains_cube(q)
        ancestor_integral = max(ancestor_integral, doubling_ancestor_integral(mu, q, r, m))
    report.add("phi_support", leak == 0.0, leak, 0.0)
    report.add("phi_mean", mean_error <= 1e-12, mean_error, 1e-12)
    b_measured = float(phi_sum.max()) / lam if mu.size else 0.0
    report.add("phi_sum_bound", b_bound is None or b_measured <= b_bound, b_measured, b_bound)
    report.add("phi_norm", norm_ratio <= 1 + _REL_SLACK, norm_ratio, 1.0)
    report.add("beta_zero", beta <= 1e-12, beta, 1e-12)
    report.add("ancestor_doubling", doubling_ok, float(len(cubes)))
    report.add("ancestor_integral", True, ancestor_integral, detail="medido")
    return report


def level_set_region(mu: AtomicMeasure, mask: np.ndarray, halo: float) -> CubeUnion:
    """Open union of cubes of halfside halo * resolution around the selected atoms."""
    return CubeUnion.around_points(mu.points[np.asarray(mask, dtype=bool)], halo * mu.resolution)


@dataclass(frozen=True, eq=False)
class WhitneyCover:
    cubes: list[Cube]
    R: float
    D0: int
    side_ratio: float
    refined: list[Cube]
    refined_from: list[int]
    stalled: bool
    uncovered_mass: float

    def to_dict(self) -> dict:
        return {
            "cubes": [c.to_dict() for c in self.cubes],
            "R": self.R,
            "D0": self.D0,
            "side_ratio": self.side_ratio,
            "refined": [c.to_dict() for c in self.refined],
            "refined_from": list(self.refined_from),
            "stalled": self.stalled,
            "uncovered_mass": self.uncovered_mass,
        }


def _escape_factor(omega: CubeUnion, cube: Cube, iterations: int = 40) -> float:
    """Least R (to bisection accuracy) with RQ not inside Omega."""
    lo_box, hi_box = omega.bounding_box()
    hi = 10.0
    while omega.contains_cube(cube.scaled(hi)):
        hi *= 2.0
        if cube.halfside * hi > 4 * float(np.max(hi_box - lo_box)) + 1:
            break
    lo = hi / 2.0 if hi > 10.0 else 10.0
    if not omega.contains_cube(cube.scaled(lo)):
        return lo
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        if omega.contains_cube(cube.scaled(mid)):
            lo = mid
        else:
            hi = mid
    return hi


def _disjoint(a: Cube, b: Cube) -> bool:
    return not a.interiors_overlap(b)


def whitney(
    omega: CubeUnion,
    mu: AtomicMeasure,
    t: float,
    *,
    max_depth: int = 20,
    scan_steps: int = 32,
) -> WhitneyCover:
    """Dyadic Whitney cubes of Omega (pruned to mu-charged cubes) and the refined small-boundary subfamily."""
    if not mu.nonneg:
        raise ValueError("mu debe ser no negativa")
    if omega.is_empty:
        return WhitneyCover([], 0.0, 0, 1.0, [], [], False, 0.0)
    lo, hi = omega.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise WhitneyError("Omega debe ser acotado")
    in_omega = omega.mask(mu.points)
    omega_mass = float(mu.real_weights[in_omega].sum())

    k0 = math.floor(-math.log2(float(np.max(hi - lo))))
    side = 2.0**-k0
    start = np.floor(lo / side).astype(int)
    stop = np.floor(hi / side).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(start, stop)]
    frontier = [
        Cube(tuple((np.asarray(idx) + 0.5) * side), side / 2)
        for idx in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mu.dim)
    ]
    selected: list[Cube] = []
    for _ in range(max_depth + 1):
        following = []
        for cube in frontier:
            charged = cube.mask(mu.points) & in_omega
            if not charged.any() or float(mu.real_weights[charged].sum()) <= 0:
                continue
            if omega.contains_cube(cube.scaled(10.0)):
                selected.append(cube)
                continue
            quarter = cube.halfside / 2
            for corner in np.stack(np.meshgrid(*([[-1, 1]] * mu.dim), indexing="ij"), axis=-1).reshape(-1, mu.dim):
                following.append(Cube(tuple(cube.center_array + corner * quarter), quarter))
        frontier = following
        if not frontier:
            break
    covered = np.zeros(mu.size, dtype=bool)
    for cube in selected:
        covered |= cube.mask(mu.points)
    uncovered = float(mu.real_weights[in_omega & ~covered].sum())
    if uncovered > 0:
        logger.warning("masa de Omega sin cubrir tras %d niveles: %g", max_depth, uncovered)

    least = max((_escape_factor(omega, c) for c in selected), default=0.0)
    # si R Q sale de Omega, cualquier R mayor también
    R = max(least, ESCAPE_FACTOR) if selected else 0.0
    D0, ratio = 0, 1.0
    for c in selected:
        big = c.scaled(10.0)
        neighbours = [d for d in selected if big.interiors_overlap(d.scaled(10.0))]
        D0 = max(D0, len(neighbours))
        ratio = max(ratio, max(max(d.side / c.side, c.side / d.side) for d in neighbours))

    order = sorted(range(len(selected)), key=lambda i: (-mu.mass(selected[i]).real, i))
    refined: list[Cube] = []
    refined_from: list[int] = []
    mass = 0.0
    goal = omega_mass / (8 * max(D0, 1))
    stalled = False
    for i in order:
        if mass >= goal * (1 - _REL_SLACK) and refined:
            break
        cube = selected[i]
        for h in np.linspace(cube.halfside, 1.1 * cube.halfside, scan_steps):
            candidate = Cube(cube.center, float(h))
            here = mu.mass(candidate).real
            if here <= 0:
                break
            if not is_doubling(mu, candidate, 9.0, 2.0 * D0) or not has_small_boundary(mu, candidate, t):
                continue
            if all(_disjoint(candidate, other) for other in refined):
                refined.append(candidate)
                refined_from.append(i)
                mass += here
            break
    if omega_mass > 0 and mass < goal * (1 - _REL_SLACK):
        stalled = True
        logger.warning("refinamiento de Whitney estancado: %g < %g (probá con t mayor)", mass, goal)
    return WhitneyCover(selected, float(R), int(D0), float(ratio), refined, refined_from, stalled, uncovered)


def verify_whitney(cover: WhitneyCover, omega: CubeUnion, mu: AtomicMeasure, t: float) -> VerificationReport:
    report = VerificationReport("whitney_cover")
    cubes = cover.cubes
    inside = [omega.contains_cube(c.scaled(10.0)) for c in cubes]
    report.add("inside", all(inside), float(sum(not v for v in inside)), 0.0)
    escapes = [not omega.contains_cube(c.scaled(cover.R * (1 + 1e-9))) for c in cubes]
    report.add("escape", all(escapes) and (cover.R > 20 or not cubes), cover.R, 20.0)
    overlap = 0
    for c in cubes:
        overlap = max(overlap, sum(c.scaled(10.0).interiors_overlap(d.scaled(10.0)) for d in cubes))
    report.add("bounded_overlap", overlap <= cover.D0, overlap, float(cover.D0))
    report.add("side_ratio", True, cover.side_ratio, detail="medido")
    pairs = sum(cubes[i].interiors_overlap(cubes[j]) for i in range(len(cubes)) for j in range(i + 1, len(cubes)))
    report.add("disjoint_interiors", pairs == 0, float(pairs), 0.0)

    nested = all(
        cubes[j].halfside <= q.halfside <= 1.1 * cubes[j].halfside * (1 + 1e-12) and q.center == cubes[j].center
        for q, j in zip(cover.refined, cover.refined_from)
    )
    report.add("refined_nested", nested, float(len(cover.refined)))
    doubling = [is_doubling(mu, q, 9.0, 2.0 * cover.D0) for q in cover.refined]
    boundary = [small_boundary_constant(mu, q) for q in cover.refined]
    report.add("refined_doubling", all(doubling), float(sum(not v for v in doubling)), 0.0)
    report.add("refined_small_boundary", all(b <= t * (1 + 1e-12) for b in boundary), max(boundary, default=0.0), t)
    refined = cover.refined
    clashes = sum(refined[i].interiors_overlap(refined[j]) for i in range(len(refined)) for j in range(i + 1, len(refined)))
    report.add("refined_disjoint", clashes == 0, float(clashes), 0.0)
    omega_mass = float(mu.real_weights[omega.mask(mu.points)].sum())
    covered = np.zeros(mu.size, dtype=bool)
    for q in refined:
        covered |= q.mask(mu.points)
    mass = float(mu.real_weights[covered].sum())
    goal = omega_mass / (8 * max(cover.D0, 1))
    report.add("refined_mass", mass >= goal * (1 - _REL_SLACK), mass, goal)
    return report
