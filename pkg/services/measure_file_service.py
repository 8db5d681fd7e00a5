"""JSON files for atomic measures and Lipschitz profiles."""

from __future__ import annotations

import json
import logging
import math
import os
from typing import Any

import numpy as np

from .geometry_service import AtomicMeasure, Cube
from .harness_errors import InputError
from .kernel_service import LipschitzProfile

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _weight_to_json(w: complex) -> float | list[float]:
    w = complex(w)
    if w.imag == 0:
        return float(w.real)
    return [float(w.real), float(w.imag)]


def _weight_from_json(value: Any, where: str) -> complex:
    if isinstance(value, bool):
        raise InputError(f"{where}: peso inválido")
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(float(value[0]), float(value[1]))
    raise InputError(f"{where}: el peso debe ser un número o [re, im]")


def measure_to_dict(mu: AtomicMeasure, meta: dict | None = None) -> dict:
    data = {
        "version": FORMAT_VERSION,
        "dim": mu.dim,
        "resolution": mu.resolution,
        "atoms": [
            {"point": [float(c) for c in p], "weight": _weight_to_json(w)} for p, w in zip(mu.points, mu.weights)
        ],
    }
    if meta:
        data["meta"] = meta
    return data


def dumps_measure(mu: AtomicMeasure, meta: dict | None = None) -> str:
    """Canonical text: identical measures give identical bytes."""
    return json.dumps(measure_to_dict(mu, meta), indent=2, sort_keys=True) + "\n"


def measure_from_dict(data: Any, *, path: str | None = None) -> AtomicMeasure:
    if not isinstance(data, dict):
        raise InputError("se esperaba un objeto JSON con 'atoms'", path=path)
    atoms = data.get("atoms")
    if not isinstance(atoms, list):
        raise InputError("falta la lista 'atoms'", path=path)
    resolution = data.get("resolution")
    if isinstance(resolution, bool) or not isinstance(resolution, (int, float)) or not resolution > 0:
        raise InputError("'resolution' debe ser un número positivo", path=path)
    dim = data.get("dim")
    points, weights = [], []
    for i, atom in enumerate(atoms):
        where = f"atoms[{i}]"
        if not isinstance(atom, dict) or "point" not in atom or "weight" not in atom:
            raise InputError(f"{where}: se esperaba {{'point', 'weight'}}", path=path)
        point = atom["point"]
        if isinstance(point, (int, float)) and not isinstance(point, bool):
            point = [point]
        if not isinstance(point, list) or not point or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in point
        ):
            raise InputError(f"{where}: coordenadas inválidas", path=path)
        if dim is None:
            dim = len(point)
        if len(point) != dim:
            raise InputError(f"{where}: dimensión {len(point)} distinta de {dim}", path=path)
        points.append([float(c) for c in point])
        weights.append(_weight_from_json(atom["weight"], where))
    if dim is None:
        raise InputError("medida vacía sin 'dim'", path=path)
    if not points:
        return AtomicMeasure.empty(int(dim), float(resolution))
    try:
        return AtomicMeasure(np.array(points), np.array(weights, dtype=complex), float(resolution))
    except ValueError as exc:
        raise InputError(str(exc), path=path) from exc


def loads_measure(text: str, *, path: str | None = None) -> AtomicMeasure:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(exc.msg, path=path, line=exc.lineno, column=exc.colno) from exc
    return measure_from_dict(data, path=path)


def load_measure(path: str) -> AtomicMeasure:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"no se pudo leer el archivo: {exc.strerror}", path=path) from exc
    return loads_measure(text, path=path)


def save_measure(mu: AtomicMeasure, path: str, meta: dict | None = None) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_measure(mu, meta))
    logger.debug("Medida con %d átomos guardada en %s", mu.size, path)


def profile_from_dict(data: Any, *, path: str | None = None) -> LipschitzProfile:
    """Inverse of LipschitzProfile.to_dict."""
    if not isinstance(data, dict) or not isinstance(data.get("cones"), list):
        raise InputError("perfil sin lista 'cones'", path=path)
    dim = data.get("dim")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise InputError("'dim' debe ser un entero positivo", path=path)
    try:
        cones = [(np.asarray(c["apex"], dtype=float), float(c["height"])) for c in data["cones"]]
        profile = LipschitzProfile.from_cones(cones, dim, float(data.get("floor", 0.0)))
        boundary = data.get("boundary")
        if boundary:
            cube = Cube(tuple(boundary["center"]), float(boundary["halfside"]))
            profile = LipschitzProfile(profile.apexes, profile.heights, profile.floor, cube, float(boundary["level"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"perfil inválido: {exc}", path=path) from exc
    return profile


def dumps_profile(profile: LipschitzProfile) -> str:
    return json.dumps(profile.to_dict(), indent=2, sort_keys=True) + "\n"
