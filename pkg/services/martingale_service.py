"""b-adapted martingale structure of a finite measure on a shifted dyadic grid.

The cubes of D_0 are the grid cubes inside the testbed cube Q_0 with side at
most 2^{u_0}. ``DyadicTree`` stores, level by level, which D_0 cube holds
each atom; ``AccretiveSystem`` adds the accretive function b and evaluates
E, D, Delta and Delta* as vectorised group sums over those labels.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .dyadic_service import CubeRef, DyadicGrid, GoodnessParams, GoodStatus, grid_from_seed, is_good
from .geometry_service import AtomicMeasure, Cube
from .harness_errors import AccretivityError, GridWindowError
from .kernel_service import BilinearKernel
from .operator_service import TruncationSpec, trilinear_form

logger = logging.getLogger(__name__)

_REL_SLACK = 1e-12

MartingaleOp = Literal["E", "D", "delta", "delta_star"]


@dataclass(frozen=True)
class TestbedDomain:
    """Q_0 with its boundary parameter; u_0 satisfies 2^{u_0} < lambda0 l(Q_0)/4 <= 2^{u_0+1}."""

    cube: Cube
    lambda0: float = 1.0

    __test__ = False

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 debe ser positivo")

    @property
    def u0(self) -> int:
        return math.ceil(math.log2(self.lambda0 * self.cube.side / 4.0)) - 1

    @property
    def top_level(self) -> int:
        return -self.u0

    def to_dict(self) -> dict:
        return {"cube": self.cube.to_dict(), "lambda0": self.lambda0, "u0": self.u0}


def grid_window(mu: AtomicMeasure, domain: TestbedDomain, sigma: int = 0) -> tuple[int, int]:
    """Levels from sigma + 2 above the top scale down to one that separates the atoms."""
    k_min = domain.top_level - sigma - 2
    k_max = max(domain.top_level + 1, math.ceil(math.log2(math.sqrt(mu.dim) / mu.resolution)) + 1)
    return k_min, k_max


def _unique_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    uniq, first, inverse = np.unique(rows, axis=0, return_index=True, return_inverse=True)
    return uniq, first, inverse.reshape(-1)


class DyadicTree:
    """Atom labels of the D_0 cubes at every level from the top scale down.

    The finest level is the first one at which every cube holds a single atom
    location (or ``finest`` when given, or the bottom of the grid window).
    """

    def __init__(self, mu: AtomicMeasure, grid: DyadicGrid, domain: TestbedDomain, finest: int | None = None):
        if not mu.nonneg:
            raise ValueError("la medida de referencia debe ser no negativa")
        self.mu = mu
        self.grid = grid
        self.domain = domain
        top = domain.top_level
        if top < grid.k_min or top + 1 > grid.k_max:
            raise GridWindowError(f"el nivel superior {top} necesita [{top}, {top + 1}] dentro de [{grid.k_min}, {grid.k_max}]")
        self.top = top
        n_atoms = mu.size
        idx = grid.index_array(mu.points, top) if n_atoms else np.zeros((0, grid.dim), dtype=np.int64)
        covered = np.zeros(n_atoms, dtype=bool)
        if n_atoms:
            uniq, _, inverse = _unique_rows(idx)
            inside = np.array(
                [domain.cube.contains_cube(grid.geometry(CubeRef(top, tuple(int(v) for v in row)))) for row in uniq]
            )
            covered = inside[inverse]
        if n_atoms and not covered.all():
            logger.warning("%d átomos fuera de los cubos de lado 2^u0 contenidos en Q0", int((~covered).sum()))
        self.covered = covered
        self._location = _unique_rows(mu.points)[2] if n_atoms else np.zeros(0, dtype=np.int64)
        self._labels: dict[int, np.ndarray] = {}
        self._index: dict[int, np.ndarray] = {}
        self._parent: dict[int, np.ndarray] = {}
        self._lookup: dict[int, dict[tuple[int, ...], int]] = {}
        self.separated = False

        last = grid.k_max if finest is None else max(min(finest, grid.k_max), top + 1)
        k = top
        while True:
            self._add_level(k)
            if k >= top + 1 and (k == last or (finest is None and self._separates(k))):
                break
            k += 1
        self.fine = k
        self.separated = self._separates(k)
        if not self.separated:
            logger.warning("la ventana de la grilla no separa los átomos (nivel más fino %d)", k)
        self.mass = {lvl: self.group_sum(lvl, mu.weights).real for lvl in self.levels}

    def _add_level(self, k: int) -> None:
        labels = np.full(self.mu.size, -1, dtype=np.int64)
        rows = np.zeros((0, self.grid.dim), dtype=np.int64)
        if self.covered.any():
            idx = self.grid.index_array(self.mu.points[self.covered], k)
            rows, first, inverse = _unique_rows(idx)
            labels[self.covered] = inverse
            if k > self.top:
                atoms = np.flatnonzero(self.covered)[first]
                self._parent[k] = self._labels[k - 1][atoms]
        self._labels[k] = labels
        self._index[k] = rows
        self._lookup[k] = {tuple(int(v) for v in row): i for i, row in enumerate(rows)}

    def _separates(self, k: int) -> bool:
        lab = self._labels[k][self.covered]
        if len(lab) == 0:
            return True
        pairs = np.unique(np.column_stack([lab, self._location[self.covered]]), axis=0)
        return len(pairs) == len(self._index[k])

    @property
    def levels(self) -> range:
        return range(self.top, self.fine + 1)

    def labels(self, k: int) -> np.ndarray:
        return self._labels[k]

    def parent_ids(self, k: int) -> np.ndarray:
        return self._parent[k]

    def count(self, k: int) -> int:
        return len(self._index[k])

    def refs(self, k: int) -> list[CubeRef]:
        return [CubeRef(k, tuple(int(v) for v in row), self.grid.grid_id) for row in self._index[k]]

    def cubes(self, levels: Iterable[int] | None = None) -> Iterable[CubeRef]:
        for k in self.levels if levels is None else levels:
            yield from self.refs(k)

    def ref_id(self, ref: CubeRef) -> int:
        try:
            return self._lookup[ref.level][tuple(ref.index)]
        except KeyError:
            raise ValueError(f"el cubo {ref} no es un cubo activo de D0") from None

    def cube_mask(self, ref: CubeRef) -> np.ndarray:
        return self._labels[ref.level] == self.ref_id(ref)

    def group_sum(self, k: int, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=complex)
        lab = self._labels[k]
        keep = lab >= 0
        size = self.count(k)
        real = np.bincount(lab[keep], weights=values[keep].real, minlength=size)
        imag = np.bincount(lab[keep], weights=values[keep].imag, minlength=size)
        return real + 1j * imag

    def average(self, k: int, f: np.ndarray) -> np.ndarray:
        """<f>^mu_Q for every cube of level k; zero on zero-mass cubes."""
        sums = self.group_sum(k, np.asarray(f, dtype=complex) * self.mu.weights)
        mass = self.mass[k]
        return np.where(mass > 0, sums / np.where(mass > 0, mass, 1.0), 0.0)

    def spread(self, k: int, per_cube: np.ndarray) -> np.ndarray:
        """Atom function equal to per_cube[Q] on the atoms of Q, zero off D_0."""
        lab = self._labels[k]
        out = np.zeros(self.mu.size, dtype=np.result_type(per_cube, complex))
        keep = lab >= 0
        out[keep] = per_cube[lab[keep]]
        return out

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "domain": self.domain.to_dict(),
            "top": self.top,
            "fine": self.fine,
            "separated": self.separated,
            "cubes": {str(k): self.count(k) for k in self.levels},
        }


@dataclass(frozen=True, eq=False)
class Reconstruction:
    values: np.ndarray
    remainder: float
    leaked: int


class AccretiveSystem:
    """b-adapted martingale differences on a DyadicTree.

    With e_k(x) = E^b_{Q_k(x)} f the per-atom ratio, E_k f = e_k b,
    Delta_Q f = 1_Q (E_{k+1} f - E_k f) below the top scale and
    Delta_Q f = 1_Q E_{k+1} f on a top cube.
    """

    def __init__(
        self,
        tree: DyadicTree,
        b: np.ndarray | None = None,
        c_b: float | None = None,
        C_b: float | None = None,
    ):
        self.tree = tree
        mu = tree.mu
        b = np.ones(mu.size, dtype=complex) if b is None else np.asarray(b, dtype=complex)
        if b.shape != (mu.size,):
            raise ValueError("b debe estar dada sobre los átomos")
        self.b = b
        sup = float(np.max(np.abs(b))) if mu.size else 0.0
        self.C_b = sup if C_b is None else float(C_b)
        if sup > self.C_b * (1 + _REL_SLACK):
            raise AccretivityError(f"sup |b| = {sup:g} supera C_b = {self.C_b:g}")
        self._bsum = {k: tree.group_sum(k, b * mu.weights) for k in tree.levels}
        floor = math.inf
        for k in tree.levels:
            mass = tree.mass[k]
            active = mass > 0
            if not active.any():
                continue
            means = np.abs(self._bsum[k][active]) / mass[active]
            i = int(np.argmin(means))
            if means[i] < floor:
                floor, worst = float(means[i]), (k, int(np.flatnonzero(active)[i]))
            if c_b is not None and means[i] < c_b * (1 - _REL_SLACK):
                ref = tree.refs(k)[int(np.flatnonzero(active)[i])]
                raise AccretivityError(f"|<b>_Q| = {means[i]:g} < c_b = {c_b:g} en {ref}", cube=ref)
        if c_b is None and not math.isfinite(floor):
            c_b = 0.0
        elif c_b is None:
            if floor <= 0:
                ref = tree.refs(worst[0])[worst[1]]
                raise AccretivityError("<b>_Q se anula en un cubo activo", cube=ref)
            c_b = floor
        self.c_b = float(c_b)

    @property
    def levels(self) -> range:
        return self.tree.levels

    @property
    def top(self) -> int:
        return self.tree.top

    @property
    def fine(self) -> int:
        return self.tree.fine

    def _check_level(self, k: int, upper: int) -> None:
        if not self.top <= k <= upper:
            raise ValueError(f"nivel {k} fuera de [{self.top}, {upper}]")

    def _cube_ratios(self, k: int, f: np.ndarray) -> np.ndarray:
        sums = self.tree.group_sum(k, np.asarray(f, dtype=complex) * self.tree.mu.weights)
        den = self._bsum[k]
        return np.where(den != 0, sums / np.where(den != 0, den, 1.0), 0.0)

    def ratio_level(self, k: int, f: np.ndarray) -> np.ndarray:
        """e_k(x) = <f>_Q / <b>_Q for the level-k cube Q containing x."""
        self._check_level(k, self.fine)
        return self.tree.spread(k, self._cube_ratios(k, f))

    def expectation_level(self, k: int, f: np.ndarray) -> np.ndarray:
        return self.ratio_level(k, f) * self.b

    def level_difference(self, k: int, f: np.ndarray) -> np.ndarray:
        """Sum of Delta_Q f over the level-k cubes of D_0."""
        self._check_level(k, self.fine - 1)
        upper = self.expectation_level(k + 1, f)
        if k == self.top:
            return upper
        return upper - self.expectation_level(k, f)

    def adjoint_level(self, k: int, g: np.ndarray) -> np.ndarray:
        """F_k g(x) = <g b>_Q / <b>_Q for the level-k cube Q containing x."""
        self._check_level(k, self.fine)
        return self.tree.spread(k, self._cube_ratios(k, np.asarray(g, dtype=complex) * self.b))

    def level_difference_star(self, k: int, g: np.ndarray) -> np.ndarray:
        self._check_level(k, self.fine - 1)
        upper = self.adjoint_level(k + 1, g)
        if k == self.top:
            return upper
        return upper - self.adjoint_level(k, g)

    def expectation(self, f: np.ndarray, ref: CubeRef) -> complex:
        """E^b_Q f = <f>_Q / <b>_Q."""
        return complex(self._cube_ratios(ref.level, f)[self.tree.ref_id(ref)])

    def difference(self, f: np.ndarray, ref: CubeRef) -> complex:
        """D_Q f: E_Q f just below the top scale, E_Q f - E_{Q^(1)} f further down.

        A top cube has no scalar D_Q; its difference operator is
        ``level_difference(top, f)`` = E_{2^{u_0 - 1}} f.
        """
        k = ref.level
        if k == self.top:
            raise ValueError("D_Q en la escala superior es el operador level_difference(top, f)")
        self._check_level(k, self.fine)
        i = self.tree.ref_id(ref)
        value = self._cube_ratios(k, f)[i]
        if k == self.top + 1:
            return complex(value)
        parent = self.tree.parent_ids(k)[i]
        return complex(value - self._cube_ratios(k - 1, f)[parent])

    def delta(self, f: np.ndarray, ref: CubeRef) -> np.ndarray:
        return self.level_difference(ref.level, f) * self.tree.cube_mask(ref)

    def delta_star(self, g: np.ndarray, ref: CubeRef) -> np.ndarray:
        return self.level_difference_star(ref.level, g) * self.tree.cube_mask(ref)

    def martingale(self, op: MartingaleOp, f: np.ndarray, ref: CubeRef) -> complex | np.ndarray:
        if op == "E":
            return self.expectation(f, ref)
        if op == "D":
            return self.difference(f, ref)
        if op == "delta":
            return self.delta(f, ref)
        if op == "delta_star":
            return self.delta_star(f, ref)
        raise ValueError(f"operador de martingala desconocido: {op}")

    def difference_levels(self) -> range:
        return range(self.top, self.fine)

    def _reconstruction(self, f: np.ndarray, values: np.ndarray) -> Reconstruction:
        f = np.asarray(f, dtype=complex)
        covered = self.tree.covered
        leaked = int(np.count_nonzero(f[~covered]))
        if leaked:
            logger.warning("%d átomos del soporte de f quedan fuera de D0", leaked)
        scale = max(float(np.max(np.abs(f))) if f.size else 0.0, 1e-300)
        remainder = float(np.max(np.abs(values - f))) / scale if f.size else 0.0
        return Reconstruction(values, remainder, leaked)

    def reconstruct(self, f: np.ndarray) -> Reconstruction:
        """sum_Q Delta_Q f with the relative sup-norm remainder against f."""
        values = np.zeros(self.tree.mu.size, dtype=complex)
        for k in self.difference_levels():
            values += self.level_difference(k, f)
        return self._reconstruction(f, values)

    def reconstruct_star(self, g: np.ndarray) -> Reconstruction:
        values = np.zeros(self.tree.mu.size, dtype=complex)
        for k in self.difference_levels():
            values += self.level_difference_star(k, g)
        return self._reconstruction(g, values)

    def square_function(self, f: np.ndarray) -> np.ndarray:
        """S f = (sum over cubes below the top scale of |D_Q f|^2 1_Q)^{1/2}."""
        total = np.zeros(self.tree.mu.size)
        previous = np.zeros(self.tree.mu.size, dtype=complex)
        for k in range(self.top + 1, self.fine + 1):
            current = self.ratio_level(k, f)
            total += np.abs(current - previous) ** 2
            previous = current
        return np.sqrt(total)

    def square_function_star(self, g: np.ndarray) -> np.ndarray:
        total = np.zeros(self.tree.mu.size)
        for k in self.difference_levels():
            total += np.abs(self.level_difference_star(k, g)) ** 2
        return np.sqrt(total)


def lp_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    values = np.abs(np.asarray(values))
    if math.isinf(p):
        return float(np.max(values[weights > 0])) if np.any(weights > 0) else 0.0
    return float(np.sum(values**p * weights) ** (1.0 / p))


@dataclass(frozen=True)
class GoodnessFilter:
    """Goodness of a cube against every grid in ``others``; indeterminate counts as bad when strict."""

    others: tuple[DyadicGrid, ...]
    params: GoodnessParams
    strict: bool = True

    def status(self, cube: Cube) -> GoodStatus:
        seen = GoodStatus.GOOD
        for other in self.others:
            verdict = is_good(cube, other, self.params)
            if verdict is GoodStatus.BAD:
                return GoodStatus.BAD
            if verdict is GoodStatus.INDETERMINATE:
                seen = GoodStatus.INDETERMINATE
        return seen

    def is_bad(self, cube: Cube) -> bool:
        verdict = self.status(cube)
        return verdict is GoodStatus.BAD or (self.strict and verdict is GoodStatus.INDETERMINATE)


@dataclass(frozen=True, eq=False)
class Projection:
    good: np.ndarray
    bad: np.ndarray
    counts: dict[str, int] = field(default_factory=dict)


def project(system: AccretiveSystem, f: np.ndarray, goodness: GoodnessFilter) -> Projection:
    """P_G f and P_B f: sums of Delta_Q f over good and bad cubes of D_0."""
    tree = system.tree
    good = np.zeros(tree.mu.size, dtype=complex)
    bad = np.zeros(tree.mu.size, dtype=complex)
    counts = {status.value: 0 for status in GoodStatus}
    for k in system.difference_levels():
        verdicts = [goodness.status(tree.grid.geometry(ref)) for ref in tree.refs(k)]
        for verdict in verdicts:
            counts[verdict.value] += 1
        is_bad = np.array(
            [v is GoodStatus.BAD or (goodness.strict and v is GoodStatus.INDETERMINATE) for v in verdicts]
        )
        if is_bad.size == 0:
            continue
        on_bad = tree.spread(k, is_bad.astype(float)).real > 0
        diff = system.level_difference(k, f)
        bad += np.where(on_bad, diff, 0.0)
        good += np.where(on_bad, 0.0, diff)
    if counts[GoodStatus.INDETERMINATE.value]:
        logger.info("%d cubos con bondad indeterminada", counts[GoodStatus.INDETERMINATE.value])
    return Projection(good, bad, counts)


@dataclass(frozen=True, eq=False)
class PrincipalCubes:
    family: list[CubeRef]
    parent: dict[CubeRef, CubeRef | None]
    stopping_bound: float
    carleson_constant: float

    def to_dict(self) -> dict:
        return {
            "family": [ref.to_dict() for ref in self.family],
            "stopping_bound": self.stopping_bound,
            "carleson_constant": self.carleson_constant,
        }


def principal_cubes(tree: DyadicTree, phi: np.ndarray) -> PrincipalCubes:
    """Stopping cubes where <|phi|>_Q first exceeds twice the average on the current principal cube."""
    phi = np.abs(np.asarray(phi, dtype=complex))
    averages = {k: tree.average(k, phi).real for k in tree.levels}
    # owner[k][i] = (nivel, id) del cubo principal del i-ésimo cubo de nivel k
    owner: dict[int, list[tuple[int, int]]] = {}
    family: list[tuple[int, int]] = []
    family_parent: dict[tuple[int, int], tuple[int, int] | None] = {}
    bound = 0.0
    for k in tree.levels:
        owner[k] = []
        for i in range(tree.count(k)):
            if k == tree.top:
                owner[k].append((k, i))
                family.append((k, i))
                family_parent[(k, i)] = None
                continue
            s = owner[k - 1][tree.parent_ids(k)[i]]
            reference = averages[s[0]][s[1]]
            if averages[k][i] > 2.0 * reference:
                owner[k].append((k, i))
                family.append((k, i))
                family_parent[(k, i)] = s
            else:
                owner[k].append(s)
                if reference > 0:
                    bound = max(bound, averages[k][i] / reference)

    packed = {node: 0.0 for node in family}
    for node in family:
        mass = tree.mass[node[0]][node[1]]
        cursor: tuple[int, int] | None = node
        while cursor is not None:
            packed[cursor] += mass
            cursor = family_parent[cursor]
    carleson = max(
        (packed[node] / tree.mass[node[0]][node[1]] for node in family if tree.mass[node[0]][node[1]] > 0),
        default=0.0,
    )
    refs = {k: tree.refs(k) for k in tree.levels}
    as_ref = {node: refs[node[0]][node[1]] for node in family}
    return PrincipalCubes(
        family=[as_ref[node] for node in family],
        parent={as_ref[node]: (None if p is None else as_ref[p]) for node, p in family_parent.items()},
        stopping_bound=bound,
        carleson_constant=float(carleson),
    )


def paraproduct_ratio(system: AccretiveSystem, phi: np.ndarray, B: np.ndarray, r: float) -> float:
    """||sum_Q <phi>_Q Delta*_Q B||_r / ||phi||_r."""
    tree = system.tree
    total = np.zeros(tree.mu.size, dtype=complex)
    for k in system.difference_levels():
        total += tree.spread(k, tree.average(k, phi)) * system.level_difference_star(k, B)
    weights = tree.mu.real_weights
    den = lp_norm(phi, weights, r)
    return lp_norm(total, weights, r) / den if den > 0 else 0.0


@dataclass(frozen=True)
class SquareFunctionNorms:
    lower: float
    upper: float
    star_lower: float
    star_upper: float

    def worst(self) -> float:
        return max(self.lower, self.upper, self.star_lower, self.star_upper)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "star_lower": self.star_lower,
            "star_upper": self.star_upper,
        }


def square_function_norms(system: AccretiveSystem, f: np.ndarray, s: float) -> SquareFunctionNorms:
    """Two-sided constants of ||f|| ~ ||(S f) b|| <= C ||S f|| ~ ||f|| and ||f|| ~ ||S* f||."""
    f = np.where(system.tree.covered, np.asarray(f, dtype=complex), 0.0)
    weights = system.tree.mu.real_weights
    norm_f = lp_norm(f, weights, s)
    sf = system.square_function(f)
    sf_star = system.square_function_star(f)
    n_sfb = lp_norm(sf * np.abs(system.b), weights, s)
    n_sf = lp_norm(sf, weights, s)
    n_star = lp_norm(sf_star, weights, s)

    def _q(a: float, b: float) -> float:
        return a / b if b > 0 else (0.0 if a == 0 else math.inf)

    return SquareFunctionNorms(_q(norm_f, n_sfb), _q(n_sf, norm_f), _q(norm_f, n_star), _q(n_star, norm_f))


def _vector_norm(family: np.ndarray, weights: np.ndarray, p: float) -> float:
    return lp_norm(np.sqrt(np.sum(np.abs(family) ** 2, axis=0)), weights, p)


def _dual(r: float) -> float:
    return math.inf if r <= 1 else r / (r - 1)


def mz_randomization_ratio(
    kernel: BilinearKernel,
    mu: AtomicMeasure,
    fs: np.ndarray,
    gs: np.ndarray,
    hs: np.ndarray,
    p: float,
    q: float,
    r: float,
    rng: np.random.Generator | None = None,
    samples: int = 64,
) -> float:
    """|sum_i <T(f_i, g_i), h_i>| / (||T||_meas ||(f_i)||_{L^p(l2)} ||(g_i)||_{L^q(l2)} ||(h_i)||_{L^{r'}(l2)}).

    ||T||_meas is the largest normalised form over the random-sign
    combinations F = sum e_i e'_i f_i, G = sum e'_j g_j, H = sum e_k h_k;
    all sign patterns are enumerated for families of at most four terms.
    """
    fs, gs, hs = (np.atleast_2d(np.asarray(v, dtype=complex)) for v in (fs, gs, hs))
    count = len(fs)
    spec = TruncationSpec("max", 0.0)
    weights = mu.real_weights
    r_dual = _dual(r)
    lhs = abs(sum(trilinear_form(kernel, mu, f, g, h, spec) for f, g, h in zip(fs, gs, hs)))
    if count <= 4:
        patterns: Sequence = list(itertools.product((-1.0, 1.0), repeat=2 * count))
    else:
        rng = rng or np.random.default_rng(0)
        patterns = list(rng.choice((-1.0, 1.0), size=(samples, 2 * count)))
    op_norm = 0.0
    for signs in patterns:
        eps, eps_prime = np.asarray(signs[:count]), np.asarray(signs[count:])
        F = (eps * eps_prime) @ fs
        G = eps_prime @ gs
        H = eps @ hs
        den = lp_norm(F, weights, p) * lp_norm(G, weights, q) * lp_norm(H, weights, r_dual)
        if den > 0:
            op_norm = max(op_norm, abs(trilinear_form(kernel, mu, F, G, H, spec)) / den)
    rhs = op_norm * _vector_norm(fs, weights, p) * _vector_norm(gs, weights, q) * _vector_norm(hs, weights, r_dual)
    if rhs <= 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    trials: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "trials": self.trials}


def mean_estimate(samples: Sequence[float]) -> MeanEstimate:
    values = np.asarray(samples, dtype=float)
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return MeanEstimate(float(values.mean()) if len(values) else 0.0, stderr, len(values))


def bad_part_norm_mc(
    mu: AtomicMeasure,
    f: np.ndarray,
    domain: TestbedDomain,
    params: GoodnessParams,
    trials: int,
    rng: np.random.Generator,
    *,
    strict: bool = True,
) -> MeanEstimate:
    """Average of ||P_B f||_2 / ||f||_2 over independent (grid, other grid) draws.

    With ``strict`` the cubes whose goodness the window cannot decide count as bad.
    """
    k_min, k_max = grid_window(mu, domain, params.sigma)
    weights = mu.real_weights
    norm_f = lp_norm(f, weights, 2.0)
    ratios = []
    for _ in range(trials):
        grid = grid_from_seed(rng, k_min, k_max, mu.dim)
        other = grid_from_seed(rng, k_min, k_max, mu.dim)
        system = AccretiveSystem(DyadicTree(mu, grid, domain))
        parts = project(system, f, GoodnessFilter((other,), params, strict))
        ratios.append(lp_norm(parts.bad, weights, 2.0) / norm_f if norm_f > 0 else 0.0)
    return mean_estimate(ratios)
