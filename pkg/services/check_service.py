"""Registered inequality checks over the Cantor fixtures.

Each check measures its constant on the fixture of every configured level.
Test functions are smooth fields of position seeded by (seed, check name),
so every level refines the same data; the per-level generator seeded by
(seed, check name, level) is kept for draws that belong to one instance.
Checks can run in any order and still reproduce their numbers.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .config_service import SuiteConfig
from .decomposition_service import VerificationReport, cz_decompose, level_set_region, verify_cz, verify_whitney, whitney
from .dyadic_service import GoodnessParams, bad_probability_mc, grid_from_seed
from .geometry_service import AtomicMeasure, Cube, find_small_boundary_cube, generate, min_separation
from .harness_errors import (
    BudgetError,
    ConfigError,
    HarnessError,
    PreconditionError,
    SmallBoundaryError,
    WhitneyError,
    translate_exception,
)
from .kernel_service import (
    BilinearKernel,
    KernelSampler,
    SuppressedKernel,
    adjoint_kernel,
    build_kernel,
    verify_kernel_conditions,
)
from .martingale_service import (
    AccretiveSystem,
    DyadicTree,
    TestbedDomain,
    bad_part_norm_mc,
    grid_window,
    mz_randomization_ratio,
    paraproduct_ratio,
    principal_cubes,
    square_function_norms,
)
from .maximal_service import (
    MaximalKind,
    NoncenteredMaximal,
    basic_integral_bound,
    centered,
    fefferman_stein_ratio,
    maximal,
)
from .operator_service import (
    TruncationSpec,
    basic_bound_ratio,
    compare_truncations,
    separation_ratio,
    suppression_comparison_ratio,
    trilinear_form,
    truncation_batch,
)
from .square_function_service import (
    ScaleQuadrature,
    build_family,
    bv,
    bv_reference,
    qualifies,
    t1_testing_statistic,
)
from .surgery_service import bad_square_function_mc
from .suppression_service import (
    SuppressionInstance,
    big_piece_profile,
    containment_report,
    mass_bound_report,
    scan_lambda0,
    verify_suppression,
)

logger = logging.getLogger(__name__)

# Escalas epsilon del barrido good-lambda y grilla de delta (descendente, termina en 0).
GOOD_LAMBDA_EPS = (1.0, 0.5, 0.25)
GOOD_LAMBDA_DELTAS = tuple(2.0 ** (-k) for k in range(21)) + (0.0,)
GOOD_LAMBDA_LEVELS = 12
BAD_PROBABILITY_DEPTH = 8
BAD_PART_TRIALS = 8
SEPARATION_T = (2.0, 3.0)
KERNEL_SAMPLES = 2000
# modos de Fourier de los campos de prueba
FIELD_MODES = 6
# factores de config.tau en el barrido de Cotlar adaptado, tau decreciente
TAU_SWEEP = (1.0, 0.5, 0.25)
QUALIFYING_STEPS = 32
_STABILITY_FLOOR = 1e-9
_STABILITY_RELATIVE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class CheckContext:
    """Everything one level of a check sees."""

    config: SuiteConfig
    name: str
    level: int | None
    mu: AtomicMeasure | None
    kernel: BilinearKernel
    rng: np.random.Generator
    seed: tuple[int, ...]

    @property
    def ceiling(self) -> float:
        return self.config.ceiling(self.name)

    def stream(self, *tag: Any) -> np.random.Generator:
        """Generator keyed by (seed, check name, tag); the same at every level."""
        key = zlib.crc32(repr(tag).encode("utf-8"))
        return np.random.default_rng([self.config.seed, zlib.crc32(self.name.encode("utf-8")), key])

    def field(self, *tag: Any, low: float = -1.0, points: np.ndarray | None = None) -> np.ndarray:
        """Smooth random Fourier field with values in [low, 1], evaluated at the atoms (or ``points``).

        The field is a function of position only, so refining the fixture
        samples the same function at more points.
        """
        if points is None:
            if self.mu is None:
                raise ValueError("el campo necesita puntos cuando el check no tiene instancia")
            points = self.mu.points
        pts = np.asarray(points, dtype=float)
        rng = self.stream("field", *tag)
        freq = rng.integers(-3, 4, (FIELD_MODES, pts.shape[1]))
        phase = rng.uniform(0.0, 2.0 * math.pi, FIELD_MODES)
        amp = rng.uniform(0.5, 1.0, FIELD_MODES)
        raw = np.cos(2.0 * math.pi * pts @ freq.T + phase) @ amp
        unit = 0.5 * (raw / amp.sum() + 1.0)
        return low + (1.0 - low) * unit


@dataclass
class LevelResult:
    constant: float
    witness: Any = None
    trials: int = 1
    verdict: bool | None = None
    detail: dict = field(default_factory=dict)
    # constante de la hipótesis medida antes que la conclusión
    hypothesis: float | None = None


@dataclass(frozen=True)
class CheckDefinition:
    name: str
    measure: Callable[[CheckContext], LevelResult]
    stability: bool
    per_level: bool
    description: str
    scales_ceiling: bool = False


CHECKS: dict[str, CheckDefinition] = {}


def register(
    name: str, description: str, *, stability: bool = False, per_level: bool = True, scales_ceiling: bool = False
):
    def decorator(fn: Callable[[CheckContext], LevelResult]):
        CHECKS[name] = CheckDefinition(name, fn, stability, per_level, description, scales_ceiling)
        return fn

    return decorator


def check_names() -> list[str]:
    return list(CHECKS)


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return [_plain(value.real), _plain(value.imag)]
    return value


@dataclass
class CheckReport:
    name: str
    constant: float
    witness: Any
    trials: int
    passed: bool | None
    seed: int
    ceiling: float
    per_level: dict[int, float] = field(default_factory=dict)
    stability: float | None = None
    skipped: str | None = None
    detail: dict = field(default_factory=dict)
    timing: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        data = {
            "name": self.name,
            "constant": _plain(self.constant),
            "witness": _plain(self.witness),
            "trials": self.trials,
            "pass": self.passed,
            "seed": self.seed,
            "ceiling": _plain(self.ceiling),
            "per_level": {str(k): _plain(v) for k, v in self.per_level.items()},
            "stability": _plain(self.stability),
            "detail": _plain(self.detail),
        }
        if self.skipped:
            data["skipped"] = self.skipped
        return data


# ---------------------------------------------------------------------------
# fixtures y helpers compartidos


def build_instance(config: SuiteConfig, level: int) -> AtomicMeasure:
    """The Cantor fixture of the given level in dimension n."""
    if config.n == 1:
        mu = generate("cantor1d", level, dim=1, max_atoms=config.max_atoms)
    elif config.n == 2:
        mu = generate("cantor4corner", level, dim=2, max_atoms=config.max_atoms)
    else:
        mu = generate("uniform_cube", count=(2**level) ** config.n, dim=config.n, max_atoms=config.max_atoms)
    if config.resolution_floor is not None and mu.resolution < config.resolution_floor:
        raise BudgetError(f"resolución {mu.resolution:g} por debajo del piso {config.resolution_floor:g}")
    return mu


def build_check_kernel(config: SuiteConfig) -> BilinearKernel:
    return build_kernel(config.kernel, config.m, config.alpha, config.kernel_constant)


def check_seed(config: SuiteConfig, name: str, level: int | None) -> tuple[int, ...]:
    return (config.seed, zlib.crc32(name.encode("utf-8")), 0 if level is None else level)


def make_context(
    config: SuiteConfig,
    name: str,
    level: int | None,
    mu: AtomicMeasure | None = None,
    kernel: BilinearKernel | None = None,
) -> CheckContext:
    """Context for one level; ``mu`` defaults to the fixture of that level."""
    if mu is None and level is not None:
        mu = build_instance(config, level)
    seed = check_seed(config, name, level)
    kernel = kernel if kernel is not None else build_check_kernel(config)
    return CheckContext(config, name, level, mu, kernel, np.random.default_rng(list(seed)), seed)


def _unit_cube(dim: int) -> Cube:
    return Cube(tuple([0.5] * dim), 0.5)


def _truncations(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    f: np.ndarray,
    g: np.ndarray,
    delta: float,
    at: np.ndarray | list[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """|T_delta(f dmu, g dmu)| and sup_{eps > delta} |T_eps| at the atoms of mu."""
    plain, sharp = truncation_batch(kernel, mu, f, g, delta, at)
    return plain[0], sharp[0]


def level_set_sup(values: np.ndarray, weights: np.ndarray, power: float, mass_power: float = 1.0) -> float:
    """sup_lambda lambda^power mu({v > lambda})^mass_power, exact over the atom values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    order = np.argsort(-values, kind="stable")
    v = values[order]
    cum = np.cumsum(np.asarray(weights, dtype=float)[order])
    # lambda apenas debajo de v_i ve todos los átomos con valor >= v_i
    last = np.searchsorted(-v, -v, side="right") - 1
    keep = v > 0
    if not keep.any():
        return 0.0
    return float(np.max(v[keep] ** power * cum[last][keep] ** mass_power))


def _qualifying_cube(mu: AtomicMeasure, config: SuiteConfig) -> Cube:
    """First cube centered on the unit cube, halfside in [1/2, 1], that is doubling with small boundary."""
    center = tuple([0.5] * mu.dim)
    for h in np.geomspace(0.5, 1.0, QUALIFYING_STEPS):
        cube = Cube(center, float(h))
        if qualifies(mu, cube, config.doubling_constant, config.t):
            return cube
    raise PreconditionError("no hay un cubo doblante con frontera pequeña en la instancia")


def _pairing_cube(mu: AtomicMeasure, config: SuiteConfig) -> Cube:
    """Small-boundary cube over the lower corner cell, shifted so its double reaches the neighbours."""
    low = np.all(mu.points < 0.5, axis=1)
    if not low.any():
        raise PreconditionError("no hay átomos en la celda inferior de la instancia")
    lo, hi = mu.points[low].min(axis=0), mu.points[low].max(axis=0)
    h = max(float(np.max(hi - lo)) / 2.0 + mu.resolution / 2.0, mu.resolution)
    center = (lo + hi) / 2.0 - 0.75 * h
    return find_small_boundary_cube(mu, center, h, config.t, 1.2 * math.sqrt(mu.dim))


def _domain(mu: AtomicMeasure) -> TestbedDomain:
    return TestbedDomain(Cube(tuple([0.5] * mu.dim), 1.0))


def _system(ctx: CheckContext, accretive: bool = True) -> AccretiveSystem:
    mu = ctx.mu
    domain = _domain(mu)
    k_min, k_max = grid_window(mu, domain, ctx.config.sigma)
    grid = grid_from_seed(ctx.stream("grid"), k_min, k_max, mu.dim)
    b = np.exp(0.5j * ctx.field("b")) if accretive else None
    return AccretiveSystem(DyadicTree(mu, grid, domain), b)


def _suppression(ctx: CheckContext):
    """Instance (T, T^{1*}, T^{2*}) on (1, 1) with lambda_0 scanned to the zero-set target."""
    mu = ctx.mu
    ones = np.ones(mu.size)
    kernels = [ctx.kernel, adjoint_kernel(ctx.kernel, 1), adjoint_kernel(ctx.kernel, 2)]
    instance = SuppressionInstance(mu, kernels, [(ones, ones)] * 3, ctx.config.lambda0, s=ctx.config.s)
    scan, phi0 = scan_lambda0(instance, ctx.config.zero_set_target)
    return instance.with_lambda0(scan.lambda0), scan, phi0


def _entry(report: VerificationReport, name: str):
    for entry in report.entries:
        if entry.name == name:
            return entry
    raise KeyError(name)


# ---------------------------------------------------------------------------
# checks


@register("cotlar_adapted", "Cotlar adaptado a Q: sup_eps |T_eps| / (C0 + M^Q_{s/4}(T_delta))", stability=True)
def _cotlar_adapted(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    q = _qualifying_cube(mu, cfg)
    local = mu.restrict(q)
    if local.size < 2:
        return LevelResult(0.0, detail={"atoms": local.size, "cube": q.to_dict()})
    # delta debajo de todos los quiebres: T_delta es la suma completa
    delta = 0.5 * min_separation(local.points)
    ones = np.ones(local.size)
    plain, sharp = _truncations(ctx.kernel, local, ones, ones, delta)
    w = local.real_weights
    c0 = level_set_sup(plain, w, cfg.s) / float(w.sum())
    kind = MaximalKind("centered_cube", s=cfg.s / 4.0)
    rhs = np.array([c0 + maximal(kind, local, x, f=plain) for x in local.points])
    ratio = np.divide(sharp, rhs, out=np.zeros_like(sharp), where=rhs > 0)
    curve = {}
    witness = None
    for tau in (cfg.tau * factor for factor in TAU_SWEEP):
        core = q.scaled(1.0 - tau).mask(local.points)
        curve[tau] = float(ratio[core].max()) if core.any() else 0.0
        if tau == cfg.tau and core.any():
            witness = local.points[core][int(np.argmax(ratio[core]))]
    values = list(curve.values())
    monotone = all(a <= b * (1 + 1e-12) for a, b in zip(values, values[1:]))
    return LevelResult(
        curve[cfg.tau],
        witness,
        local.size,
        verdict=monotone,
        detail={"weak_testing_constant": c0, "delta": delta, "curve": [[t, c] for t, c in curve.items()]},
        hypothesis=c0,
    )


@register("weak_to_strong", "Integral de |T_delta|^{s/4} contra la cota de Kolmogorov 1 + C0/3", stability=True)
def _weak_to_strong(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    local = mu.restrict(_unit_cube(mu.dim))
    base = float(local.real_weights.sum())
    if base <= 0:
        return LevelResult(0.0)
    ones = np.ones(local.size)
    plain, _ = _truncations(ctx.kernel, local, ones, ones, mu.resolution)
    w = local.real_weights
    c0 = level_set_sup(plain, w, cfg.s) / base
    lhs = float(np.sum(plain ** (cfg.s / 4.0) * w)) / base
    bound = 1.0 + c0 / 3.0
    return LevelResult(
        lhs / bound,
        trials=local.size,
        detail={"integral": lhs, "weak_testing_constant": c0, "bound": bound},
        hypothesis=c0,
    )


def _boundary_region(rel: np.ndarray, weights: np.ndarray, eta: float) -> np.ndarray:
    """H_Q(eta): the widest strip {rel < tau} whose mass stays within eta mu(Q)."""
    if eta >= 1:
        return np.ones(len(rel), dtype=bool)
    total = float(weights.sum())
    tau = 1.0
    for value in np.unique(rel):
        if float(weights[rel <= value].sum()) > eta * total:
            tau = float(value)
            break
    return rel < tau


@register("improved_testing", "Testeo mejorado fuera de la franja H_Q(eta)", stability=True, scales_ceiling=True)
def _improved_testing(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    q = _qualifying_cube(mu, cfg)
    local = mu.restrict(q)
    base = float(local.real_weights.sum())
    if base <= 0:
        return LevelResult(0.0, detail={"cube": q.to_dict()})
    ones = np.ones(local.size)
    plain, sharp = _truncations(ctx.kernel, local, ones, ones, mu.resolution)
    rel = q.boundary_distance(local.points) / q.halfside
    w = local.real_weights
    c0 = level_set_sup(plain, w, cfg.s) / base
    curve = {}
    for eta in sorted(cfg.eta_grid, reverse=True):
        outside = ~_boundary_region(rel, w, eta)
        curve[eta] = float(np.sum(sharp[outside] ** (cfg.s / 2.0) * w[outside])) / base
    values = list(curve.values())
    monotone = all(a <= b * (1 + 1e-12) for a, b in zip(values, values[1:]))
    return LevelResult(
        max(values, default=0.0),
        trials=local.size,
        verdict=monotone,
        detail={"curve": [[eta, c] for eta, c in curve.items()], "cube": q.to_dict()},
        hypothesis=c0,
    )


@register(
    "cotlar_basic",
    "Cotlar básico: T_sharp contra N_{1/4}(T_delta) + M f M g",
    stability=True,
    scales_ceiling=True,
)
def _cotlar_basic(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    f, g = ctx.field("f"), ctx.field("g")
    nu1, nu2 = mu.density(f), mu.density(g)
    plain, sharp = _truncations(ctx.kernel, mu, f, g, mu.resolution)
    w = mu.real_weights
    weak = level_set_sup(plain, w, 0.5) / float(w.sum())
    table = NoncenteredMaximal(mu, mu.density(plain**0.25))
    worst, witness = 0.0, None
    for x, lhs in zip(mu.points, sharp):
        den = table(x) ** 4 + centered(mu, nu1, x) * centered(mu, nu2, x)
        ratio = lhs / den if den > 0 else (0.0 if lhs == 0 else math.inf)
        if ratio > worst:
            worst, witness = ratio, x
    return LevelResult(worst, witness, mu.size, detail={"weak_half_statistic": weak}, hypothesis=weak)


@register("weak_type", "sup_lambda lambda mu(|T| > lambda)^2 sobre instancias normalizadas", stability=True)
def _weak_type(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    w = mu.real_weights
    fs = np.array([ctx.field("f", trial) for trial in range(cfg.trials)])
    gs = np.array([ctx.field("g", trial) for trial in range(cfg.trials)])
    fs /= (np.abs(fs) @ w)[:, None]
    gs /= (np.abs(gs) @ w)[:, None]
    plain, sharp = truncation_batch(ctx.kernel, mu, fs, gs, mu.resolution)
    worst, witness = 0.0, None
    for trial in range(cfg.trials):
        stat = max(level_set_sup(plain[trial], w, 1.0, 2.0), level_set_sup(sharp[trial], w, 1.0, 2.0))
        if stat > worst:
            worst, witness = stat, {"trial": trial}
    return LevelResult(worst, witness, cfg.trials)


def _cover_cube(cubes: list[Cube], x: np.ndarray) -> Cube | None:
    for cube in cubes:
        if cube.mask(x[None, :])[0]:
            return cube
    return None


@register("good_lambda", "Desigualdad good-lambda con el D0 realizado por Whitney")
def _good_lambda(ctx: CheckContext) -> LevelResult:
    mu, cfg, kernel = ctx.mu, ctx.config, ctx.kernel
    pts, w = mu.points, mu.real_weights
    r_min = mu.resolution
    f, g = ctx.field("f", low=0.0), ctx.field("g", low=0.0)
    nu1, nu2 = mu.density(f), mu.density(g)
    _, sharp = _truncations(kernel, mu, f, g, r_min)
    product = np.array([centered(mu, nu1, x, cube=True) * centered(mu, nu2, x, cube=True) for x in pts])

    instance = SuppressionInstance(mu, [kernel], [(f, g)], cfg.lambda0, s=cfg.s)
    scan, phi0 = scan_lambda0(instance, cfg.zero_set_target)
    piece = big_piece_profile(phi0, mu, _unit_cube(mu.dim))

    levels = np.unique(sharp[sharp > 0])
    if len(levels) > GOOD_LAMBDA_LEVELS:
        picks = np.unique(np.linspace(0, len(levels) - 1, GOOD_LAMBDA_LEVELS).round().astype(int))
        levels = levels[picks]
    thresholds = {eps: math.inf for eps in GOOD_LAMBDA_EPS}
    worst, witness = 0.0, None
    exists = True
    theta_seen = 1.0
    d0_seen = 0
    claims = failures = 0
    for lam in levels:
        omega = sharp > lam
        if not omega.any():
            continue
        cover = whitney(level_set_region(mu, omega, cfg.whitney_halo), mu, cfg.t)
        if cover.stalled:
            raise WhitneyError(f"el refinamiento de Whitney no alcanzó la masa pedida en lambda={lam:g}")
        d0 = max(cover.D0, 1)
        d0_seen = max(d0_seen, d0)
        rhs = (1.0 - cfg.theta / (16.0 * d0)) * float(w[omega].sum())
        for cube in cover.refined:
            inside = cube.mask(pts)
            mass = float(w[inside].sum())
            if mass > 0:
                theta_seen = min(theta_seen, float(w[inside & piece.good].sum()) / mass)
        for eps in GOOD_LAMBDA_EPS:
            high = sharp > (1.0 + eps) * lam
            for delta in GOOD_LAMBDA_DELTAS:
                selected = high & (product <= delta * lam)
                lhs = float(w[selected].sum())
                if lhs <= rhs * (1 + 1e-12):
                    break
            else:
                exists = False
            thresholds[eps] = min(thresholds[eps], delta)
            ratio = lhs / rhs if rhs > 0 else 0.0
            if ratio > worst:
                worst, witness = ratio, {"lambda": lam, "eps": eps, "delta": delta}
            for i in np.flatnonzero(selected)[:2]:
                cube = _cover_cube(cover.refined, pts[i])
                if cube is None:
                    continue
                near = cube.scaled(2.0).mask(pts)
                _, local = _truncations(kernel, mu, f * near, g * near, r_min, at=[i])
                claims += 1
                failures += int(not local[0] > eps * lam / 2.0)
    ordered = sorted(GOOD_LAMBDA_EPS)
    deltas = [thresholds[eps] for eps in ordered if math.isfinite(thresholds[eps])]
    monotone = all(a <= b for a, b in zip(deltas, deltas[1:]))
    return LevelResult(
        worst,
        witness,
        int(len(levels)) * len(GOOD_LAMBDA_EPS),
        verdict=exists and monotone,
        detail={
            "delta_curve": [[eps, thresholds[eps]] for eps in ordered],
            "D0": d0_seen,
            "theta_measured": theta_seen,
            "lambda0": scan.lambda0,
            "pointwise_claims": claims,
            "pointwise_failures": failures,
        },
    )


@register("small_boundary_pairing", "|<T(1_Q, 1_{2Q minus Q}), 1_Q>| contra t mu(2Q)", stability=True)
def _small_boundary_pairing(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    q = _pairing_cube(mu, cfg)
    inside = q.mask(mu.points)
    shell = q.scaled(2.0).mask(mu.points) & ~inside
    detail = {"cube": q.to_dict(), "inside": int(inside.sum()), "shell": int(shell.sum())}
    if not shell.any() or not inside.any():
        return LevelResult(0.0, detail=detail)
    pairing = trilinear_form(ctx.kernel, mu, inside.astype(float), shell.astype(float), inside.astype(float))
    outer = mu.mass(q.scaled(2.0)).real
    return LevelResult(abs(pairing) / (cfg.t * outer), trials=int(inside.sum()), detail=detail)


@register("improved_size", "Tamaño mejorado del núcleo suprimido K_Phi", stability=True)
def _improved_size(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    _, scan, phi0 = _suppression(ctx)
    seed = int(ctx.stream("sampler").integers(2**31 - 1))
    sampler = KernelSampler(mu.dim, mu.resolution, 1.0, KERNEL_SAMPLES, seed)
    audit = verify_kernel_conditions(SuppressedKernel(ctx.kernel, phi0.profile), sampler)
    return LevelResult(
        audit.ratios["improved_size"],
        audit.witnesses.get("improved_size"),
        audit.samples,
        detail={"ratios": audit.ratios, "key_comparison": audit.key_comparison, "lambda0": scan.lambda0},
    )


@register("suppression_bound", "T_{Phi,sharp} contra lambda_0 con Phi = Phi_0", stability=True)
def _suppression_bound(ctx: CheckContext) -> LevelResult:
    instance, scan, phi0 = _suppression(ctx)
    report = verify_suppression(instance, phi0, r_min=ctx.mu.resolution)
    containment = containment_report(instance, phi0)
    masses = mass_bound_report(instance, phi0)
    excess = _entry(report, "suppressed_maximal").value
    return LevelResult(
        1.0 + excess / instance.lambda0,
        trials=ctx.mu.size * len(instance.kernels),
        verdict=containment.passed and masses.passed,
        detail={
            "lambda0": scan.lambda0,
            "zero_mass_fraction": phi0.zero_mass_fraction,
            "chain_constant": _entry(report, "chain_constant").value,
            "failures": containment.failures() + masses.failures(),
        },
    )


@register("basic_integral", "Suma |w||v|/(t+|x-y|+|x-z|)^{2m+a} contra t^{-a} M_m(nu1, nu2)", stability=True)
def _basic_integral(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    nu1, nu2 = mu.density(ctx.field("f")), mu.density(ctx.field("g"))
    ts = np.geomspace(mu.resolution, 1.0, 9)
    worst, witness = 0.0, None
    for x in mu.points:
        for t in ts:
            ratio = basic_integral_bound(nu1, nu2, x, float(t), cfg.m, cfg.alpha).ratio
            if ratio > worst:
                worst, witness = ratio, {"x": x, "t": t}
    return LevelResult(worst, witness, mu.size * len(ts))


@register("truncation_comparison", "|T_eps - T~_eps| contra M_m nu1 M_m nu2", stability=True)
def _truncation_comparison(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    nu1, nu2 = mu.density(ctx.field("f")), mu.density(ctx.field("g"))
    eps_grid = np.geomspace(mu.resolution, 1.0, 9)
    worst, witness = 0.0, None
    for x in mu.points:
        for eps in eps_grid:
            ratio = compare_truncations(ctx.kernel, nu1, nu2, x, float(eps))
            if ratio > worst:
                worst, witness = ratio, {"x": x, "eps": eps}
    return LevelResult(worst, witness, mu.size * len(eps_grid))


@register("separation", "Forma restringida a pares lejanos contra t^{-a} con h0 de media nula", stability=True)
def _separation(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    anchors = np.all(mu.points < 0.5, axis=1)
    if anchors.sum() < 2:
        return LevelResult(0.0, detail={"anchors": int(anchors.sum())})
    w = mu.real_weights
    signs = np.where(ctx.field("signs") >= 0, 1.0, -1.0)
    mean = float(np.sum(signs[anchors] * w[anchors])) / float(w[anchors].sum())
    h0 = np.where(anchors, signs - mean, 0.0)
    f, g = ctx.field("f"), ctx.field("g")
    worst, witness = 0.0, None
    for t in SEPARATION_T:
        ratio = separation_ratio(ctx.kernel, mu, mu.points[anchors], f, g, h0, t)
        if ratio > worst:
            worst, witness = ratio, {"t": t}
    return LevelResult(worst, witness, len(SEPARATION_T), detail={"anchors": int(anchors.sum())})


@register("suppression_comparison", "T_{Phi,sharp} - T_{sharp,Phi(x)} contra M f M g", stability=True)
def _suppression_comparison(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    _, scan, phi0 = _suppression(ctx)
    kernel = SuppressedKernel(ctx.kernel, phi0.profile)
    f, g = ctx.field("f"), ctx.field("g")
    worst, witness = 0.0, None
    for x in mu.points:
        ratio = suppression_comparison_ratio(kernel, mu, f, g, x)
        if ratio > worst:
            worst, witness = ratio, x
    return LevelResult(worst, witness, mu.size, detail={"lambda0": scan.lambda0})


@register("basic_bound", "Suma absoluta sobre pares con clave > eps contra eps^{-m(1/p+1/q)}")
def _basic_bound(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    f, g = ctx.field("f"), ctx.field("g")
    eps_grid = np.geomspace(mu.resolution, 1.0, 5)
    worst, witness = 0.0, None
    for x in mu.points:
        for eps in eps_grid:
            ratio = basic_bound_ratio(ctx.kernel, mu, f, g, x, float(eps), cfg.p, cfg.q)
            if ratio > worst:
                worst, witness = ratio, {"x": x, "eps": eps}
    return LevelResult(worst, witness, mu.size * len(eps_grid))


@register("bad_probability", "Probabilidad Monte Carlo de cubo malo sobre la grilla de sigma", per_level=False)
def _bad_probability(ctx: CheckContext) -> LevelResult:
    cfg = ctx.config
    estimates = {
        sigma: bad_probability_mc(BAD_PROBABILITY_DEPTH, cfg.gamma, sigma, cfg.mc_trials, ctx.rng, cfg.n)
        for sigma in sorted(cfg.sigma_grid)
    }
    ordered = list(estimates.values())
    separated = all(b.high < a.low for a, b in zip(ordered, ordered[1:]))
    return LevelResult(
        max(e.p for e in ordered),
        trials=cfg.mc_trials * len(ordered),
        verdict=separated,
        detail={"estimates": {str(sigma): e.to_dict() for sigma, e in estimates.items()}},
    )


@register("bad_square_function", "Función cuadrada restringida a I_bad al reducir theta")
def _bad_square_function(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    system = _system(ctx, accretive=False)
    f = ctx.field("f")
    seed = int(ctx.stream("surgery").integers(2**31 - 1))
    estimates = {
        theta: bad_square_function_mc(
            system, f, theta, cfg.trials, np.random.default_rng(seed), offset=cfg.surgery_offset
        )
        for theta in sorted(cfg.theta_grid, reverse=True)
    }
    ordered = list(estimates.values())
    decreasing = all(b.mean <= a.mean + 2.0 * (a.stderr + b.stderr) for a, b in zip(ordered, ordered[1:]))
    # con goodness_strict los cubos indecisos cuentan como malos
    bad_part = bad_part_norm_mc(
        mu,
        f,
        _domain(mu),
        GoodnessParams(cfg.gamma, cfg.sigma),
        BAD_PART_TRIALS,
        ctx.stream("bad_part"),
        strict=cfg.goodness_strict,
    )
    return LevelResult(
        max(e.mean for e in ordered),
        trials=cfg.trials * len(ordered),
        verdict=decreasing,
        detail={
            "estimates": {str(theta): e.to_dict() for theta, e in estimates.items()},
            "bad_part_norm": bad_part.to_dict(),
            "goodness_strict": cfg.goodness_strict,
        },
    )


@register("square_function_norms", "Equivalencia ||f|| ~ ||S f|| ~ ||S* f|| con b acretiva", stability=True)
def _square_function_norms(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    system = _system(ctx)
    f = ctx.field("f_re") + 1j * ctx.field("f_im")
    norms = square_function_norms(system, f, ctx.config.p)
    return LevelResult(norms.worst(), trials=mu.size, detail={**norms.to_dict(), "c_b": system.c_b})


@register("mz_randomization", "Cota de Marcinkiewicz-Zygmund por signos aleatorios", stability=True)
def _mz_randomization(ctx: CheckContext) -> LevelResult:
    cfg = ctx.config
    fs, gs, hs = (np.array([ctx.field(name, k) for k in range(2)]) for name in ("f", "g", "h"))
    ratio = mz_randomization_ratio(ctx.kernel, ctx.mu, fs, gs, hs, cfg.p, cfg.q, cfg.r, ctx.stream("signs"))
    return LevelResult(ratio, trials=len(fs))


@register("fefferman_stein", "Desigualdad vectorial de Fefferman-Stein para M_{mu,m}", stability=True)
def _fefferman_stein(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    family = np.array([ctx.field("family", k, low=0.0) for k in range(3)])
    return LevelResult(fefferman_stein_ratio(mu, family, cfg.p, cfg.m), trials=len(family))


@register("paraproduct", "Paraproducto sum <phi>_Q Delta*_Q b sobre cubos principales", stability=True)
def _paraproduct(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    system = _system(ctx)
    phi = ctx.field("phi")
    principal = principal_cubes(system.tree, phi)
    ratio = paraproduct_ratio(system, phi, system.b, ctx.config.p)
    return LevelResult(
        ratio,
        trials=mu.size,
        detail={"principal_cubes": len(principal.family), "carleson_constant": principal.carleson_constant},
    )


@register("t1_testing", "Estadístico de testeo T1 para BV^{l(Q)}(1_Q, 1_Q)", stability=True)
def _t1_testing(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    q = _qualifying_cube(mu, cfg)
    family = build_family(cfg.m, cfg.alpha, cfg.kernel_constant)
    value = t1_testing_statistic(
        family,
        mu,
        q,
        None,
        cfg.s,
        per_octave=cfg.quad_per_octave,
        beta=cfg.doubling_constant,
        c1=cfg.t,
    )
    return LevelResult(0.0 if value is None else value, trials=mu.size, detail={"cube": q.to_dict()})


def _relative(a: float, b: float) -> float:
    return abs(a - b) / b if b > 0 else abs(a - b)


@register("bv_quadrature", "Cuadratura logarítmica de BV contra el oráculo adaptativo")
def _bv_quadrature(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    family = build_family(cfg.m, cfg.alpha, cfg.kernel_constant)
    first = AtomicMeasure(np.array([[1.0]]), np.array([1.0]), 1e-3)
    second = AtomicMeasure(np.array([[2.0]]), np.array([1.0]), 1e-3)
    window = ScaleQuadrature(1e-3, 1e3, cfg.quad_per_octave)
    pair_error = _relative(bv(family, first, second, [0.0], window), bv_reference(family, first, second, [0.0], window))

    x = np.full(mu.dim, 0.5)
    quad = ScaleQuadrature.for_measure(mu, cfg.quad_per_octave, cfg.quad_tmax_factor)
    value = bv(family, mu, mu, x, quad)
    oracle_error = _relative(value, bv_reference(family, mu, mu, x, quad))
    refine_error = _relative(value, bv(family, mu, mu, x, quad.refined()))
    cut = bv(family, mu, mu, x, quad.truncated(0.25))
    errors = {"single_pair": pair_error, "oracle": oracle_error, "refinement": refine_error}
    worst = max(errors, key=errors.get)
    return LevelResult(
        errors[worst],
        {"source": worst},
        trials=3,
        verdict=cut <= value * (1 + 1e-12),
        detail={**errors, "bv": value, "bv_cutoff": cut},
    )


@register("martingale_identities", "Reconstrucción, ortogonalidad, dualidad y adjuntos trilineales")
def _martingale_identities(ctx: CheckContext) -> LevelResult:
    mu = ctx.mu
    system = _system(ctx)
    w = mu.real_weights
    f = ctx.field("f_re") + 1j * ctx.field("f_im")
    g = ctx.field("g_re") + 1j * ctx.field("g_im")
    scale = float(np.max(np.abs(f)))
    errors = {
        "reconstruction": system.reconstruct(f).remainder,
        "reconstruction_star": system.reconstruct_star(g).remainder,
    }
    levels = list(system.difference_levels())
    diffs = {k: system.level_difference(k, f) for k in levels}
    orthogonality = duality = 0.0
    pairing_scale = float(np.sum(np.abs(f) * np.abs(g) * w))
    for k in levels:
        for j in levels:
            target = diffs[k] if k == j else 0.0
            orthogonality = max(orthogonality, float(np.max(np.abs(system.level_difference(k, diffs[j]) - target))) / scale)
        lhs = complex(np.sum(diffs[k] * g * w))
        rhs = complex(np.sum(f * system.level_difference_star(k, g) * w))
        duality = max(duality, abs(lhs - rhs) / pairing_scale)
    errors["orthogonality"] = orthogonality
    errors["duality"] = duality

    h = ctx.field("h")
    spec = TruncationSpec()
    form = trilinear_form(ctx.kernel, mu, f, g, h, spec)
    first = trilinear_form(adjoint_kernel(ctx.kernel, 1), mu, h, g, f, spec)
    second = trilinear_form(adjoint_kernel(ctx.kernel, 2), mu, f, h, g, spec)
    size = max(abs(form), 1e-300)
    errors["adjoint"] = max(abs(form - first), abs(form - second)) / size
    worst = max(errors, key=errors.get)
    return LevelResult(errors[worst], {"identity": worst}, trials=len(levels) ** 2, detail=errors)


@register("cz_decomposition", "Descomposición de Calderón-Zygmund: propiedades de los cubos y beta_i(R_i) = 0")
def _cz_decomposition(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    rng = ctx.rng
    w = mu.real_weights
    spikes = rng.choice(mu.size, size=max(1, mu.size // 8), replace=False)
    f = np.zeros(mu.size)
    f[spikes] = rng.uniform(0.5, 1.0, len(spikes)) * rng.choice((-1.0, 1.0), len(spikes))
    f /= float(np.sum(np.abs(f) * w))
    nu = mu.density(f)
    threshold = 2 ** (mu.dim + 1) * nu.total_variation() / float(w.sum())
    decomposition = cz_decompose(nu, mu, 1.5 * threshold, cfg.m)
    report = verify_cz(decomposition, nu, mu, cfg.m)
    constant = max(_entry(report, "phi_mean").value, _entry(report, "beta_zero").value)
    return LevelResult(
        constant,
        trials=len(decomposition.cubes),
        verdict=report.passed,
        detail={"cubes": len(decomposition.cubes), "failures": report.failures()},
    )


@register("whitney_cover", "Cubrimiento de Whitney de un conjunto de nivel de T_sharp")
def _whitney_cover(ctx: CheckContext) -> LevelResult:
    mu, cfg = ctx.mu, ctx.config
    _, sharp = _truncations(ctx.kernel, mu, np.ones(mu.size), np.ones(mu.size), mu.resolution)
    omega = level_set_region(mu, sharp > np.median(sharp), cfg.whitney_halo)
    cover = whitney(omega, mu, cfg.t)
    report = verify_whitney(cover, omega, mu, cfg.t)
    mass = _entry(report, "refined_mass")
    constant = mass.bound / mass.value if mass.value > 0 else (0.0 if not mass.bound else math.inf)
    return LevelResult(
        constant,
        trials=len(cover.cubes),
        verdict=report.passed,
        detail={"D0": cover.D0, "R": cover.R, "refined": len(cover.refined), "failures": report.failures()},
    )


# ---------------------------------------------------------------------------
# ejecución


def stability_ratio(per_level: dict[int, float], floor: float = _STABILITY_FLOOR) -> float | None:
    """Largest factor between consecutive levels whose constants both exceed ``floor``."""
    levels = sorted(per_level)
    worst = None
    for a, b in zip(levels, levels[1:]):
        x, y = per_level[a], per_level[b]
        if not (math.isfinite(x) and math.isfinite(y)):
            return math.inf
        if x <= floor or y <= floor:
            continue
        factor = max(x / y, y / x)
        worst = factor if worst is None else max(worst, factor)
    return worst


def stability_floor(ceiling: float) -> float:
    """Constants below this are noise at the scale of a check with the given ceiling."""
    if not math.isfinite(ceiling):
        return _STABILITY_FLOOR
    return max(_STABILITY_FLOOR, _STABILITY_RELATIVE_FLOOR * ceiling)


def _hypothesis_problem(result: LevelResult, config: SuiteConfig) -> str | None:
    value = result.hypothesis
    if value is None:
        return None
    if not math.isfinite(value):
        return "la hipótesis medida no es finita en la instancia"
    if value > config.hypothesis_ceiling:
        return f"la hipótesis medida {value:g} supera su techo {config.hypothesis_ceiling:g}"
    return None


def _level_ceiling(definition: CheckDefinition, ceiling: float, result: LevelResult) -> float:
    if definition.scales_ceiling and result.hypothesis is not None:
        return ceiling * max(1.0, result.hypothesis)
    return ceiling


def _level_detail(result: LevelResult, ceiling: float) -> dict:
    if result.hypothesis is None:
        return result.detail
    return {**result.detail, "hypothesis": result.hypothesis, "ceiling": ceiling}


def run_check(name: str, config: SuiteConfig) -> CheckReport:
    """Run one registered check at every configured level.

    A level whose precondition fails, or whose measured hypothesis is out of
    range, is skipped on its own; the check is skipped when every level is.
    """
    definition = CHECKS.get(name)
    if definition is None:
        raise ConfigError(f"Check desconocido: {name}")
    kernel = build_check_kernel(config)
    levels: tuple[int | None, ...] = tuple(config.levels) if definition.per_level else (None,)
    ceiling = config.ceiling(name)
    results: dict[int | None, LevelResult] = {}
    skipped: dict[int | None, str] = {}
    start = time.perf_counter()
    for level in levels:
        try:
            result = definition.measure(make_context(config, name, level, kernel=kernel))
        except (PreconditionError, SmallBoundaryError) as exc:
            logger.info("Check %s omitido en el nivel %s: %s", name, level, exc)
            skipped[level] = str(exc)
            continue
        except HarnessError as exc:
            info = translate_exception(exc)
            if info.origin == "input":
                raise
            logger.warning("Check %s falló: %s", name, exc)
            return CheckReport(name, math.nan, None, 0, False, config.seed, ceiling, detail={"error": info.to_dict()})
        problem = _hypothesis_problem(result, config)
        if problem:
            logger.info("Check %s omitido en el nivel %s: %s", name, level, problem)
            skipped[level] = problem
            continue
        results[level] = result
    elapsed = time.perf_counter() - start
    if not results:
        reason = next(iter(skipped.values()))
        return CheckReport(name, math.nan, None, 0, None, config.seed, ceiling, skipped=reason, timing=elapsed)

    ceilings = {lvl: _level_ceiling(definition, ceiling, r) for lvl, r in results.items()}
    per_level = {level: r.constant for level, r in results.items() if level is not None}
    worst_level = max(results, key=lambda lvl: results[lvl].constant if math.isfinite(results[lvl].constant) else math.inf)
    worst = results[worst_level]
    stability = stability_ratio(per_level, stability_floor(ceiling)) if definition.stability else None
    passed = all(r.constant <= ceilings[lvl] for lvl, r in results.items())
    passed &= all(r.verdict is not False for r in results.values())
    if stability is not None:
        passed &= stability <= config.stability_factor
    detail = {
        ("level_%s" % lvl if lvl is not None else "result"): _level_detail(r, ceilings[lvl]) for lvl, r in results.items()
    }
    for lvl, reason in skipped.items():
        detail["level_%s" % lvl] = {"skipped": reason}
    report = CheckReport(
        name=name,
        constant=worst.constant,
        witness=worst.witness,
        trials=sum(r.trials for r in results.values()),
        passed=bool(passed),
        seed=config.seed,
        ceiling=ceilings[worst_level],
        per_level=per_level,
        stability=stability,
        detail=detail,
        timing=elapsed,
    )
    logger.debug("Check %s: constante %g en %.2fs", name, report.constant, elapsed)
    return report
