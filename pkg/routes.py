import logging

from flask import Blueprint, abort, jsonify, request

from services.check_service import CHECKS, run_check
from services.config_service import build_suite_config, load_config, save_config
from services.geometry_service import GENERATOR_KINDS, generate
from services.harness_errors import HarnessError, translate_exception
from services.measure_file_service import measure_to_dict

bp = Blueprint("harness", __name__)
logger = logging.getLogger(__name__)


def _json_body() -> dict:
    data = request.get_json(silent=True)
    if data is None:
        return {}
    if not isinstance(data, dict):
        abort(400, "El cuerpo debe ser un objeto JSON")
    return data


def _error_response(exc: HarnessError):
    info = translate_exception(exc)
    status = 400 if info.origin == "input" else 500
    logger.warning("Error de la suite (%s): %s", info.code, exc)
    return jsonify({"ok": False, "error": info.to_dict()}), status


@bp.get("/health")
def health():
    return jsonify({"status": "ok"})


@bp.get("/checks")
def list_checks():
    return jsonify(
        {"checks": [{"name": name, "description": check.description, "per_level": check.per_level} for name, check in CHECKS.items()]}
    )


@bp.post("/checks/<name>")
def run_one_check(name: str):
    if name not in CHECKS:
        abort(404, "Check desconocido")
    overrides = _json_body()
    try:
        config = build_suite_config(overrides, base=load_config())
        report = run_check(name, config)
    except HarnessError as exc:
        return _error_response(exc)
    return jsonify(report.to_dict())


@bp.post("/measures")
def create_measure():
    data = _json_body()
    kind = data.get("kind", "cantor4corner")
    if kind not in GENERATOR_KINDS:
        abort(400, "Tipo de medida inválido")
    try:
        level = data.get("level")
        count = data.get("count")
        level = None if level is None else int(level)
        count = None if count is None else int(count)
        seed = int(data.get("seed", 0))
        dim = int(data.get("dim", 2))
    except (TypeError, ValueError):
        abort(400, "Parámetros numéricos inválidos")
    try:
        mu = generate(kind, level=level, count=count, seed=seed, dim=dim)
    except ValueError as exc:
        abort(400, str(exc))
    except HarnessError as exc:
        return _error_response(exc)
    return jsonify(measure_to_dict(mu, {"kind": kind, "level": level, "count": count, "seed": seed}))


@bp.route("/config", methods=["GET", "POST"])
def suite_config():
    """Lectura y guardado de la configuración de la suite."""
    if request.method == "GET":
        return jsonify(load_config())
    data = _json_body()
    try:
        build_suite_config(data, base=load_config())
    except HarnessError as exc:
        return _error_response(exc)
    save_config({**load_config(), **data})
    return jsonify({"ok": True, "config": load_config()})
