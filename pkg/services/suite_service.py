"""Runs groups of checks and serializes the suite report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Iterable

from .check_service import CHECKS, CheckReport, run_check
from .config_service import SuiteConfig
from .harness_errors import ConfigError, InputError

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "csv")
CSV_COLUMNS = ("name", "constant", "trials", "pass")


@dataclass
class SuiteReport:
    config: SuiteConfig
    checks: list[CheckReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        # los checks omitidos no cuentan como fallas
        return all(check.passed is not False for check in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> list[str]:
        return [check.name for check in self.checks if check.passed is False]

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "checks": [check.to_dict() for check in self.checks]}


def resolve_names(names: Iterable[str] | str | None) -> list[str]:
    """'all', None or a comma separated list, in registry order."""
    if names is None or names == "all":
        return list(CHECKS)
    if isinstance(names, str):
        names = [name.strip() for name in names.split(",") if name.strip()]
    names = list(names)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ConfigError(f"Checks desconocidos: {', '.join(unknown)}")
    if not names:
        raise ConfigError("No se pidió ningún check")
    return names


def run_suite(config: SuiteConfig, names: Iterable[str] | str | None = None, workers: int = 1) -> SuiteReport:
    """Run the named checks; with workers > 1 they run in a process pool.

    Every check seeds itself from the config, so the report does not depend
    on the worker count; results come back in request order.
    """
    if workers < 1:
        raise ConfigError("workers debe ser >= 1")
    resolved = resolve_names(names)
    report = SuiteReport(config)
    if workers == 1 or len(resolved) == 1:
        for name in resolved:
            logger.info("Ejecutando check %s", name)
            report.checks.append(run_check(name, config))
    else:
        logger.info("Ejecutando %d checks en %d procesos", len(resolved), workers)
        with Pool(min(workers, len(resolved))) as pool:
            report.checks.extend(pool.map(partial(run_check, config=config), resolved))
    if report.failures():
        logger.warning("Checks fallidos: %s", ", ".join(report.failures()))
    return report


def dumps_report(report: SuiteReport | dict, fmt: str = "json") -> str:
    """Serialize a report, or the dict of one read back by load_report."""
    data = report.to_dict() if isinstance(report, SuiteReport) else report
    if fmt == "json":
        return json.dumps(data, sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in data["checks"]:
            passed = "" if row.get("pass") is None else str(row["pass"]).lower()
            writer.writerow([row.get("name"), row.get("constant"), row.get("trials"), passed])
        return buffer.getvalue()
    raise ConfigError(f"Formato de reporte desconocido: {fmt}")


def write_report(report: SuiteReport, out_dir: str, fmt: str = "json") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"report.{fmt}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(report, fmt))
    logger.info("Reporte guardado en %s", path)
    return path


def load_report(path: str) -> dict:
    """Read back a JSON report written by write_report."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"no se pudo leer el archivo: {exc.strerror}", path=path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(exc.msg, path=path, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict) or not isinstance(data.get("checks"), list):
        raise InputError("el reporte debe tener una lista 'checks'", path=path)
    return data
