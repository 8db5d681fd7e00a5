"""Command line entry point: gen | check | decompose | report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from services.config_service import DEFAULT_SEED, LOG_LEVEL, build_suite_config, load_config, read_config_file
from services.decomposition_service import cz_decompose, verify_cz
from services.geometry_service import generate
from services.harness_errors import HarnessError, InputError, translate_exception
from services.measure_file_service import dumps_measure, load_measure
from services.suite_service import REPORT_FORMATS, dumps_report, load_report, run_suite, write_report

logger = logging.getLogger("cli")

KIND_ALIASES = {
    "cantor4": "cantor4corner",
    "cantor4corner": "cantor4corner",
    "cantor1d": "cantor1d",
    "cantor": "cantor1d",
    "uniform": "uniform_cube",
    "uniform_cube": "uniform_cube",
    "random": "random",
}

# flag -> clave de SuiteConfig
SUITE_FLAGS = ("seed", "m", "alpha", "gamma", "sigma", "theta", "lambda0", "trials")


def _suite_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="archivo JSON con la configuración de la suite")
    parent.add_argument("--seed", type=int)
    parent.add_argument("--m", type=float)
    parent.add_argument("--alpha", type=float)
    parent.add_argument("--gamma", type=float)
    parent.add_argument("--sigma", type=int)
    parent.add_argument("--theta", type=float)
    parent.add_argument("--lambda0", type=float)
    parent.add_argument("--trials", type=int)
    parent.add_argument("--out", help="directorio de salida")
    parent.add_argument("--format", choices=REPORT_FORMATS, default="json")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cz-harness", description="Bilinear Calderón-Zygmund inequality harness")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _suite_parent()

    gen = sub.add_parser("gen", parents=[parent], help="generate a test measure")
    gen.add_argument("--kind", required=True, choices=sorted(KIND_ALIASES))
    gen.add_argument("--level", type=int)
    gen.add_argument("--count", type=int)
    gen.add_argument("--dim", type=int, default=2)

    check = sub.add_parser("check", parents=[parent], help="run inequality checks")
    check.add_argument("--suite", default="all", help="'all' or a comma separated list of checks")
    check.add_argument("--workers", type=int, default=1, help="processes running checks in parallel")

    decompose = sub.add_parser("decompose", parents=[parent], help="Calderón-Zygmund decomposition of a measure")
    decompose.add_argument("--measure", required=True, help="measure file for nu")
    decompose.add_argument("--reference", help="measure file for mu (default: nu's total variation)")
    decompose.add_argument("--lam", type=float, help="threshold; default 1.5 * 2^{n+1} ||nu|| / ||mu||")

    report = sub.add_parser("report", parents=[parent], help="re-emit a stored report")
    report.add_argument("--input", required=True, help="report.json written by check")
    return parser


def suite_config_from_args(args: argparse.Namespace):
    base = load_config()
    overrides = read_config_file(args.config) if args.config else {}
    overrides.update({key: getattr(args, key) for key in SUITE_FLAGS if getattr(args, key) is not None})
    return build_suite_config(overrides, base=base)


def _emit(text: str, out_dir: str | None, filename: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, filename), "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_gen(args: argparse.Namespace) -> int:
    kind = KIND_ALIASES[args.kind]
    seed = DEFAULT_SEED if args.seed is None else args.seed
    dim = {"cantor4corner": 2, "cantor1d": 1}.get(kind, args.dim)
    try:
        mu = generate(kind, level=args.level, count=args.count, seed=seed, dim=dim)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    meta = {"kind": kind, "level": args.level, "count": args.count, "seed": seed}
    _emit(dumps_measure(mu, meta), args.out, "measure.json")
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    config = suite_config_from_args(args)
    report = run_suite(config, args.suite, workers=args.workers)
    if args.out:
        for fmt in REPORT_FORMATS:
            write_report(report, args.out, fmt)
    else:
        sys.stdout.write(dumps_report(report, args.format))
    return report.exit_code


def cmd_decompose(args: argparse.Namespace) -> int:
    config = suite_config_from_args(args)
    nu = load_measure(args.measure)
    mu = load_measure(args.reference) if args.reference else nu.abs()
    if nu.dim != mu.dim:
        raise InputError("nu y mu deben tener la misma dimensión", path=args.reference)
    mass = float(mu.real_weights.sum())
    if mass <= 0:
        raise InputError("mu no tiene masa", path=args.reference or args.measure)
    lam = args.lam if args.lam is not None else 1.5 * 2 ** (nu.dim + 1) * nu.total_variation() / mass
    decomposition = cz_decompose(nu, mu, lam, config.m)
    verification = verify_cz(decomposition, nu, mu, config.m)
    payload = {"decomposition": decomposition.to_dict(), "verification": verification.to_dict()}
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out, "decomposition.json")
    return 0 if verification.passed else 1


def cmd_report(args: argparse.Namespace) -> int:
    data = load_report(args.input)
    _emit(dumps_report(data, args.format), args.out, f"report.{args.format}")
    return 0 if all(row.get("pass") is not False for row in data["checks"]) else 1


COMMANDS = {"gen": cmd_gen, "check": cmd_check, "decompose": cmd_decompose, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except HarnessError as exc:
        info = translate_exception(exc)
        logger.error("%s: %s", info.code, info.detail or info.message)
        sys.stderr.write(json.dumps({"error": info.to_dict()}, sort_keys=True) + "\n")
        return info.exit_code


if __name__ == "__main__":
    sys.exit(main())
