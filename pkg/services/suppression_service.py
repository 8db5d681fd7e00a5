"""L^infinity suppression: epsilon(x), the cone envelope Phi_0 and its checks.

For an operator T and bounded (f_0, g_0), S_0 is the set of atoms where
T_#(f_0, g_0) > lambda_0, epsilon(x) the last truncation level at which
|T_eps| still exceeds lambda_0, and Phi_0 the upper envelope of the cones
(epsilon(x_i) - |x - x_i|)_+ over x_i in S_0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decomposition_service import VerificationReport
from .geometry_service import AtomicMeasure, Cube, as_point, small_boundary_constant
from .harness_errors import PreconditionError, SuppressionError
from .kernel_service import BilinearKernel, LipschitzProfile, SuppressedKernel
from .maximal_service import centered
from .operator_service import maximal_truncation_exact, truncation_profile

logger = logging.getLogger(__name__)

_REL_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SuppressionInstance:
    """Operators T^i with bounded pairs (f_0^i, g_0^i) on the atoms of mu."""

    mu: AtomicMeasure
    kernels: Sequence[BilinearKernel]
    pairs: Sequence[tuple[np.ndarray, np.ndarray]]
    lambda0: float
    exceptional: np.ndarray | None = None
    s: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        if len(self.kernels) != len(self.pairs):
            raise ValueError("se necesita un par (f0, g0) por operador")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 debe ser positivo")
        if not self.s > 0:
            raise ValueError("s debe ser positivo")
        for f0, g0 in self.pairs:
            if np.any(np.abs(f0) > self.bound * (1 + _REL_SLACK)) or np.any(np.abs(g0) > self.bound * (1 + _REL_SLACK)):
                raise PreconditionError(f"f0 y g0 deben estar acotadas por {self.bound:g}")
        if self.exceptional is None:
            object.__setattr__(self, "exceptional", np.zeros(self.mu.size, dtype=bool))
        mask = np.asarray(self.exceptional, dtype=bool)
        if mask.shape != (self.mu.size,):
            raise ValueError("el conjunto excepcional debe ser una máscara sobre los átomos")
        object.__setattr__(self, "exceptional", mask)

    @property
    def total_mass(self) -> float:
        return float(self.mu.real_weights.sum())

    @property
    def eta0(self) -> float:
        total = self.total_mass
        return float(self.mu.real_weights[self.exceptional].sum()) / total if total > 0 else 0.0

    def with_lambda0(self, lambda0: float) -> "SuppressionInstance":
        return SuppressionInstance(self.mu, self.kernels, self.pairs, lambda0, self.exceptional, self.s, self.bound)

    def maximal_values(self, i: int, delta: float = 0.0) -> np.ndarray:
        """T^i_#(f_0^i, g_0^i) at every atom."""
        nu1, nu2 = self.mu.density(self.pairs[i][0]), self.mu.density(self.pairs[i][1])
        return np.array([maximal_truncation_exact(self.kernels[i], nu1, nu2, x, delta).value for x in self.mu.points])


def epsilon_radius(
    kernel: BilinearKernel, mu: AtomicMeasure, f0: np.ndarray, g0: np.ndarray, x, lambda0: float
) -> float | None:
    """sup{eps > 0 : |T_eps(f0, g0)(x)| > lambda0}, or None when x is not in S_0."""
    if not lambda0 > 0:
        raise ValueError("lambda0 debe ser positivo")
    profile = truncation_profile(kernel, mu.density(f0), mu.density(g0), as_point(x, mu.dim))
    above = np.flatnonzero(np.abs(profile.sums) > lambda0)
    if len(above) == 0:
        return None
    # |T_eps| = |S_i| en [u_{i-1}, u_i), el sup se alcanza en el extremo u_i
    return float(profile.keys[above[-1]])


def _epsilons(instance: SuppressionInstance, i: int) -> np.ndarray:
    f0, g0 = instance.pairs[i]
    values = [epsilon_radius(instance.kernels[i], instance.mu, f0, g0, x, instance.lambda0) for x in instance.mu.points]
    return np.array([math.nan if v is None else v for v in values])


@dataclass(frozen=True, eq=False)
class Phi0Result:
    profile: LipschitzProfile
    epsilons: np.ndarray
    suppressed: np.ndarray
    zero_mass_fraction: float
    lambda0: float

    @property
    def cone_count(self) -> int:
        return self.profile.cone_count

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "zero_mass_fraction": self.zero_mass_fraction,
            "suppressed_atoms": int(np.count_nonzero(np.any(self.suppressed, axis=0))),
            "profile": self.profile.to_dict(),
        }


def build_phi0(instance: SuppressionInstance, target: float | None = None) -> Phi0Result:
    """Cone envelope over every operator; ``target`` is the least acceptable mass fraction of {Phi_0 = 0}."""
    mu = instance.mu
    rows = [_epsilons(instance, i) for i in range(len(instance.kernels))]
    epsilons = np.vstack(rows) if rows else np.zeros((0, mu.size))
    suppressed = ~np.isnan(epsilons)
    cones = []
    for j in range(mu.size):
        column = epsilons[:, j][suppressed[:, j]]
        if len(column):
            cones.append((mu.points[j], float(column.max())))
    profile = LipschitzProfile.from_cones(cones, mu.dim).pruned()
    total = instance.total_mass
    zero = profile.zero_mask(mu.points) if mu.size else np.zeros(0, dtype=bool)
    fraction = float(mu.real_weights[zero].sum()) / total if total > 0 else 1.0
    logger.debug("Phi_0: %d conos, fracción nula %.4f con lambda0=%g", profile.cone_count, fraction, instance.lambda0)
    if target is not None and fraction < target:
        raise SuppressionError(
            f"{{Phi_0 = 0}} retiene {fraction:.3f} de la masa (< {target:g}); hace falta un lambda0 mayor que {instance.lambda0:g}"
        )
    return Phi0Result(profile, epsilons, suppressed, fraction, instance.lambda0)


def weak_testing_constant(instance: SuppressionInstance, i: int, values: np.ndarray | None = None) -> float:
    """sup_lambda lambda^s mu({x not in H : T^i_# > lambda}) / mu(R^n), exact over the atom values."""
    values = instance.maximal_values(i) if values is None else values
    outside = ~instance.exceptional
    levels = np.unique(values[outside])
    levels = levels[levels > 0]
    total = instance.total_mass
    best = 0.0
    w = instance.mu.real_weights
    for level in levels:
        # sup sobre lambda apenas debajo del nivel
        mass = float(w[outside & (values >= level)].sum())
        best = max(best, level**instance.s * mass / total)
    return best


def containment_report(instance: SuppressionInstance, phi0: Phi0Result) -> VerificationReport:
    """{Phi_0 > 0} inside {max_i T^i_# > lambda_0/2}, atom by atom."""
    report = VerificationReport("suppression_containment")
    mu = instance.mu
    positive = ~phi0.profile.zero_mask(mu.points) if mu.size else np.zeros(0, dtype=bool)
    if not positive.any():
        report.add("containment", True, 0.0, 0.0)
        return report
    values = np.max(np.vstack([instance.maximal_values(i) for i in range(len(instance.kernels))]), axis=0)
    missing = positive & ~(values > instance.lambda0 / 2)
    witnesses = [list(map(float, p)) for p in mu.points[missing][:5]]
    report.add(
        "containment",
        not missing.any(),
        float(np.count_nonzero(missing)),
        0.0,
        detail=f"testigos {witnesses}" if witnesses else None,
    )
    return report


def mass_bound_report(instance: SuppressionInstance, phi0: Phi0Result) -> VerificationReport:
    """mu(S_i minus H) against 2^s C_0 lambda_0^{-s} mu(R^n), with C_0 measured on the instance."""
    report = VerificationReport("suppression_mass")
    mu = instance.mu
    total = instance.total_mass
    for i in range(len(instance.kernels)):
        values = instance.maximal_values(i)
        c0 = weak_testing_constant(instance, i, values)
        eps = phi0.epsilons[i]
        hit = phi0.suppressed[i]
        in_s = np.zeros(mu.size, dtype=bool)
        if hit.any():
            gaps = np.linalg.norm(mu.points[:, None, :] - mu.points[hit][None, :, :], axis=2)
            in_s = np.any(gaps < eps[hit][None, :], axis=1)
        mass = float(mu.real_weights[in_s & ~instance.exceptional].sum())
        bound = 2**instance.s * c0 * instance.lambda0 ** (-instance.s) * total
        report.add(f"mass_{i}", mass <= bound * (1 + _REL_SLACK), mass, bound, detail=f"C0={c0:.6g}")
    return report


def verify_suppression(
    instance: SuppressionInstance,
    phi0: Phi0Result,
    profile: LipschitzProfile | None = None,
    *,
    ceiling: float = math.inf,
    r_min: float | None = None,
) -> VerificationReport:
    """sup over atoms of T^i_{Phi,#}(f_0^i, g_0^i) for a profile Phi >= Phi_0.

    The excess over lambda_0 is the measured constant; the chain through
    T_{#,Phi(x)} + C M f_0 M g_0 is evaluated term by term at each atom.
    """
    mu = instance.mu
    profile = phi0.profile if profile is None else profile
    r_min = mu.resolution if r_min is None else r_min
    low = profile.evaluate(mu.points) < phi0.profile.evaluate(mu.points) * (1 - _REL_SLACK)
    if low.any():
        raise PreconditionError(
            "Phi no domina a Phi_0",
            witnesses=[list(map(float, p)) for p in mu.points[low][:5]],
        )
    report = VerificationReport("suppression_bound")
    worst_excess = 0.0
    worst_chain = 0.0
    for i, (kernel, (f0, g0)) in enumerate(zip(instance.kernels, instance.pairs)):
        suppressed = SuppressedKernel(kernel, profile)
        nu1, nu2 = mu.density(f0), mu.density(g0)
        for x in mu.points:
            value = maximal_truncation_exact(suppressed, nu1, nu2, x, r_min).value
            worst_excess = max(worst_excess, value - instance.lambda0)
            plain = maximal_truncation_exact(kernel, nu1, nu2, x, max(profile(x), r_min)).value
            product = centered(mu, nu1, x, r_min=r_min) * centered(mu, nu2, x, r_min=r_min)
            if product > 0:
                worst_chain = max(worst_chain, (value - plain) / product)
    constant = max(worst_excess, 0.0)
    report.add("suppressed_maximal", constant <= ceiling, constant, None if math.isinf(ceiling) else ceiling)
    report.add("chain_constant", True, worst_chain, detail="medido")
    return report


@dataclass(frozen=True)
class LambdaScan:
    lambda0: float
    zero_mass_fraction: float
    steps: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "zero_mass_fraction": self.zero_mass_fraction,
            "steps": [[lam, frac] for lam, frac in self.steps],
        }


def scan_lambda0(instance: SuppressionInstance, target: float, max_doublings: int = 40) -> tuple[LambdaScan, Phi0Result]:
    """Double lambda_0 until {Phi_0 = 0} carries at least ``target`` of the mass."""
    if not 0 < target <= 1:
        raise ValueError("target debe estar en (0, 1]")
    steps = []
    current = instance
    for _ in range(max_doublings + 1):
        phi0 = build_phi0(current)
        steps.append((current.lambda0, phi0.zero_mass_fraction))
        if phi0.zero_mass_fraction >= target:
            return LambdaScan(current.lambda0, phi0.zero_mass_fraction, steps), phi0
        current = current.with_lambda0(2 * current.lambda0)
    raise SuppressionError(f"no se alcanzó la fracción {target:g} tras {max_doublings} duplicaciones de lambda0")


@dataclass(frozen=True, eq=False)
class BigPiece:
    profile: LipschitzProfile
    boundary_fraction: float
    good: np.ndarray
    good_mass: float

    def suppression_profile(self, eps: float) -> LipschitzProfile:
        """Phi = max(eps, Phi_1)."""
        return self.profile.with_floor(eps)


def big_piece_profile(phi0: Phi0Result, mu: AtomicMeasure, q0: Cube, t0: float | None = None) -> BigPiece:
    """Phi_1 = max(Phi_0, phi) with phi = (l ell(Q_0) - d(x, dQ_0))_+ and G = {Phi_1 = 0} in Q_0.

    The boundary fraction l satisfies t_0 l mu(2Q_0) <= mu({Phi_0 = 0} in Q_0)/2.
    """
    in_q = q0.mask(mu.points)
    zero = phi0.profile.zero_mask(mu.points) & in_q
    zero_mass = float(mu.real_weights[zero].sum())
    t0 = small_boundary_constant(mu, q0) if t0 is None else t0
    outer = mu.mass(q0.scaled(2.0)).real
    fraction = 0.5
    if t0 > 0 and outer > 0:
        fraction = min(fraction, zero_mass / (2 * t0 * outer))
    if fraction <= 0:
        raise SuppressionError("Phi_0 no se anula en Q_0")
    profile = phi0.profile.with_boundary(q0, fraction)
    good = in_q & profile.zero_mask(mu.points)
    return BigPiece(profile, fraction, good, float(mu.real_weights[good].sum()))
