from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict

from dotenv import load_dotenv

from .harness_errors import ConfigError, InputError

load_dotenv()

logger = logging.getLogger(__name__)

CONFIG_FILE = os.getenv(
    "CZ_CONFIG_FILE",
    os.path.join(os.path.dirname(__file__), "..", "config", "config.json"),
)
DEFAULT_SEED = int(os.getenv("CZ_SEED", "7"))
LOG_LEVEL = os.getenv("CZ_LOG_LEVEL", "WARNING")

# Techos calibrados sobre las instancias de Cantor de niveles 2-4.
DEFAULT_CEILINGS = {
    "cotlar_adapted": 50.0,
    "weak_to_strong": 1.0 + 1e-9,
    "improved_testing": 500.0,
    "cotlar_basic": 50.0,
    "weak_type": 50.0,
    "good_lambda": 1.0 + 1e-9,
    "small_boundary_pairing": 50.0,
    "improved_size": 50.0,
    "suppression_bound": 50.0,
    "basic_integral": 100.0,
    "truncation_comparison": 100.0,
    "separation": 100.0,
    "suppression_comparison": 100.0,
    "basic_bound": 100.0,
    "bad_probability": 1.0,
    "bad_square_function": 1.0 + 1e-9,
    "square_function_norms": 50.0,
    "mz_randomization": 50.0,
    "fefferman_stein": 50.0,
    "paraproduct": 50.0,
    "t1_testing": 1e6,
    "bv_quadrature": 0.01,
    "martingale_identities": 1e-10,
    "cz_decomposition": 1e-12,
    "whitney_cover": 1.0 + 1e-12,
}

DEFAULT_SUITE_CONFIG: Dict[str, Any] = {
    "n": 2,
    "m": 1.0,
    "alpha": 1.0,
    "kernel": "scalar",
    "kernel_constant": 1.0,
    "s": 1.0,
    "p": 2.0,
    "q": 2.0,
    "r": 1.0,
    "gamma": 0.5,
    "sigma": 4,
    "theta": 0.25,
    "t": 64.0,
    "b": None,
    "lambda0": 1.0,
    "tau": 0.25,
    "eta_grid": [0.5, 0.25, 0.125],
    "trials": 100,
    "mc_trials": 10000,
    "seed": DEFAULT_SEED,
    "levels": [2, 3, 4],
    "resolution_floor": None,
    "sigma_grid": [4, 6, 8],
    "theta_grid": [0.4, 0.2, 0.1],
    "quad_per_octave": 8,
    "quad_tmax_factor": 16.0,
    "surgery_offset": 20,
    "goodness_strict": True,
    "zero_set_target": 0.45,
    "whitney_halo": 0.5,
    "max_atoms": 4096,
    "stability_factor": 2.0,
    "hypothesis_ceiling": 1000.0,
    "ceilings": DEFAULT_CEILINGS,
}

_INT_KEYS = {"n", "sigma", "trials", "mc_trials", "seed", "quad_per_octave", "surgery_offset", "max_atoms"}
_FLOAT_KEYS = {
    "m",
    "alpha",
    "kernel_constant",
    "s",
    "p",
    "q",
    "r",
    "gamma",
    "theta",
    "t",
    "lambda0",
    "tau",
    "quad_tmax_factor",
    "zero_set_target",
    "whitney_halo",
    "stability_factor",
    "hypothesis_ceiling",
}
_KERNELS = {"scalar", "antisymmetric"}


@dataclass(frozen=True)
class SuiteConfig:
    """Validated parameters shared by every check of a suite run."""

    n: int = 2
    m: float = 1.0
    alpha: float = 1.0
    kernel: str = "scalar"
    kernel_constant: float = 1.0
    s: float = 1.0
    p: float = 2.0
    q: float = 2.0
    r: float = 1.0
    gamma: float = 0.5
    sigma: int = 4
    theta: float = 0.25
    t: float = 64.0
    b: float | None = None
    lambda0: float = 1.0
    tau: float = 0.25
    eta_grid: tuple[float, ...] = (0.5, 0.25, 0.125)
    trials: int = 100
    mc_trials: int = 10000
    seed: int = DEFAULT_SEED
    levels: tuple[int, ...] = (2, 3, 4)
    resolution_floor: float | None = None
    sigma_grid: tuple[int, ...] = (4, 6, 8)
    theta_grid: tuple[float, ...] = (0.4, 0.2, 0.1)
    quad_per_octave: int = 8
    quad_tmax_factor: float = 16.0
    surgery_offset: int = 20
    goodness_strict: bool = True
    zero_set_target: float = 0.45
    whitney_halo: float = 0.5
    max_atoms: int = 4096
    stability_factor: float = 2.0
    hypothesis_ceiling: float = 1000.0
    ceilings: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CEILINGS))

    @property
    def doubling_constant(self) -> float:
        """b, defaulting to 2^{n+4}."""
        return float(self.b) if self.b is not None else float(2 ** (self.n + 4))

    def ceiling(self, name: str) -> float:
        return float(self.ceilings.get(name, DEFAULT_CEILINGS.get(name, math.inf)))

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("eta_grid", "levels", "sigma_grid", "theta_grid"):
            data[key] = list(data[key])
        data["ceilings"] = dict(sorted(self.ceilings.items()))
        return data


def _sanitize_suite_config(data: Any) -> Dict[str, Any]:
    if not isinstance(data, dict):
        return {}

    sanitized: Dict[str, Any] = {}
    for key, value in data.items():
        if key not in DEFAULT_SUITE_CONFIG:
            logger.warning("Clave de configuración desconocida ignorada: %s", key)
            continue
        if value is None and key not in ("b", "resolution_floor"):
            continue
        if key in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                continue
            sanitized[key] = int(value)
        elif key in _FLOAT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                continue
            sanitized[key] = float(value)
        elif key in ("eta_grid", "theta_grid"):
            if isinstance(value, (list, tuple)) and all(isinstance(v, (int, float)) for v in value):
                sanitized[key] = [float(v) for v in value]
        elif key in ("levels", "sigma_grid"):
            if isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
                sanitized[key] = [int(v) for v in value]
        elif key == "kernel":
            if isinstance(value, str) and value.strip() in _KERNELS:
                sanitized[key] = value.strip()
        elif key == "goodness_strict":
            sanitized[key] = bool(value)
        elif key == "ceilings":
            if isinstance(value, dict):
                sanitized[key] = {
                    str(k): float(v)
                    for k, v in value.items()
                    if isinstance(v, (int, float)) and not isinstance(v, bool)
                }
        else:
            sanitized[key] = value
    return sanitized


def _write_config(data: Dict[str, Any]) -> None:
    path = os.path.abspath(CONFIG_FILE)

    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)


def _merge(sanitized: Dict[str, Any]) -> Dict[str, Any]:
    merged = json.loads(json.dumps(DEFAULT_SUITE_CONFIG))
    for key, value in sanitized.items():
        if key == "ceilings":
            merged["ceilings"].update(value)
        else:
            merged[key] = value
    return merged


def load_config() -> Dict[str, Any]:
    """Load the suite configuration from the JSON file."""

    path = os.path.abspath(CONFIG_FILE)
    defaults = _merge({})
    if not os.path.exists(path):
        _write_config(defaults)
        return defaults
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (json.JSONDecodeError, OSError):
        logger.warning("Configuración ilegible en %s, se restauran los valores por defecto", path)
        _write_config(defaults)
        return defaults
    merged = _merge(_sanitize_suite_config(raw))
    if merged != raw:
        _write_config(merged)
    return merged


def read_config_file(path: str) -> Dict[str, Any]:
    """Raw overrides from a user supplied JSON file; malformed files raise InputError."""

    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"no se pudo leer el archivo: {exc.strerror}", path=path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(exc.msg, path=path, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise InputError("la configuración debe ser un objeto JSON", path=path)
    return data


def save_config(data: Dict[str, Any]) -> None:
    """Persist a sanitized suite configuration."""

    _write_config(_merge(_sanitize_suite_config(data)))


def validate_suite_config(config: SuiteConfig) -> SuiteConfig:
    """Check the exponent identity and parameter ranges."""

    problems: list[str] = []
    if config.n < 1:
        problems.append("n debe ser >= 1")
    if not 0 < config.m <= config.n:
        problems.append("m debe estar en (0, n]")
    if not 0 < config.alpha <= 1:
        problems.append("alpha debe estar en (0, 1]")
    if not (1 < config.p < math.inf and 1 < config.q < math.inf):
        problems.append("p y q deben estar en (1, inf)")
    if not 0.5 < config.r < math.inf:
        problems.append("r debe estar en (1/2, inf)")
    if abs(1 / config.p + 1 / config.q - 1 / config.r) > 1e-12:
        problems.append("se requiere 1/p + 1/q = 1/r")
    if not 0 < config.gamma < 1:
        problems.append("gamma debe estar en (0, 1)")
    if not 0 < config.theta < 1:
        problems.append("theta debe estar en (0, 1)")
    if config.sigma < 1:
        problems.append("sigma debe ser >= 1")
    if config.t <= 0 or config.s <= 0 or config.lambda0 <= 0:
        problems.append("t, s y lambda0 deben ser positivos")
    if not 0 < config.tau < 1:
        problems.append("tau debe estar en (0, 1)")
    if not config.hypothesis_ceiling > 0:
        problems.append("hypothesis_ceiling debe ser positivo")
    if config.quad_per_octave < 4:
        problems.append("la cuadratura necesita al menos 4 puntos por octava")
    if config.trials < 1 or config.mc_trials < 1:
        problems.append("trials debe ser positivo")
    if not config.levels:
        problems.append("se necesita al menos un nivel")
    if config.kernel not in _KERNELS:
        problems.append(f"núcleo desconocido: {config.kernel}")
    if problems:
        raise ConfigError("; ".join(problems))
    return config


def build_suite_config(overrides: Dict[str, Any] | None = None, *, base: Dict[str, Any] | None = None) -> SuiteConfig:
    """Return a validated SuiteConfig from the stored config plus overrides."""

    data = dict(base) if base is not None else _merge({})
    if overrides:
        unknown = sorted(set(overrides) - set(DEFAULT_SUITE_CONFIG))
        if unknown:
            raise ConfigError(f"Parámetros desconocidos: {', '.join(unknown)}")
        sanitized = _sanitize_suite_config({k: v for k, v in overrides.items() if v is not None})
        dropped = sorted(k for k, v in overrides.items() if v is not None and k not in sanitized)
        if dropped:
            raise ConfigError(f"Valores inválidos para: {', '.join(dropped)}")
        for key, value in sanitized.items():
            if key == "ceilings":
                data["ceilings"] = {**data.get("ceilings", {}), **value}
            else:
                data[key] = value
    kwargs = dict(data)
    for key in ("eta_grid", "levels", "sigma_grid", "theta_grid"):
        kwargs[key] = tuple(kwargs[key])
    kwargs["ceilings"] = {**DEFAULT_CEILINGS, **kwargs.get("ceilings", {})}
    return validate_suite_config(SuiteConfig(**kwargs))
