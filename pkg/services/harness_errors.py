from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

ErrorOrigin = Literal["input", "numerical", "internal"]


class HarnessError(RuntimeError):
    """Base class for every failure raised by the library."""

    DEFAULT_MESSAGE = "Falla del banco de pruebas"

    def __init__(self, message: str | None = None):
        super().__init__(message or self.DEFAULT_MESSAGE)


class SubResolutionError(HarnessError):
    """Raised when a query asks for a scale below the measure resolution."""

    DEFAULT_MESSAGE = "Escala por debajo de la resolución de la medida"


class DiagonalError(HarnessError):
    """Raised when a kernel is evaluated on the full diagonal x = y = z."""

    DEFAULT_MESSAGE = "Núcleo evaluado en la diagonal"


class GridWindowError(HarnessError):
    """Raised when a dyadic level falls outside the stored scale window."""

    DEFAULT_MESSAGE = "Nivel fuera de la ventana de la grilla"


class AccretivityError(HarnessError):
    """Raised when an accretive system violates its floor on some cube."""

    DEFAULT_MESSAGE = "La función no es acretiva"

    def __init__(self, message: str | None = None, cube: Any = None):
        super().__init__(message)
        self.cube = cube


class SmallBoundaryError(HarnessError):
    """Raised when a small-boundary scan is exhausted."""

    DEFAULT_MESSAGE = "No hay cubo de borde pequeño en el rango recorrido"

    def __init__(self, message: str | None = None, breakpoints: list[float] | None = None):
        super().__init__(message)
        self.breakpoints = list(breakpoints or [])


class DecompositionError(HarnessError):
    DEFAULT_MESSAGE = "Falló la descomposición de Calderón-Zygmund"


class WhitneyError(HarnessError):
    DEFAULT_MESSAGE = "Falló el cubrimiento de Whitney"


class SuppressionError(HarnessError):
    DEFAULT_MESSAGE = "Falló la construcción de la supresión"


class PreconditionError(HarnessError):
    """Raised when an input violates an operation precondition."""

    DEFAULT_MESSAGE = "Hipótesis no satisfecha"

    def __init__(self, message: str | None = None, witnesses: list[Any] | None = None):
        super().__init__(message)
        self.witnesses = list(witnesses or [])


class BudgetError(HarnessError):
    DEFAULT_MESSAGE = "La instancia excede el presupuesto de tamaño"


class InputError(HarnessError):
    """Raised for malformed input files; carries the position when known."""

    DEFAULT_MESSAGE = "Entrada mal formada"

    def __init__(
        self,
        message: str | None = None,
        *,
        path: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column

    @property
    def position(self) -> str | None:
        if self.line is None:
            return self.path
        where = f"{self.line}:{self.column or 0}"
        return f"{self.path}:{where}" if self.path else where


class ConfigError(HarnessError):
    DEFAULT_MESSAGE = "Configuración de la suite inválida"


@dataclass
class ErrorInfo:
    """Structured metadata describing a harness error."""

    code: str
    origin: ErrorOrigin
    message: str
    detail: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    ORIGIN_LABELS = {
        "input": "Datos de entrada",
        "numerical": "Cálculo numérico",
        "internal": "Aplicación",
    }

    EXIT_CODES = {
        "input": 2,
        "numerical": 1,
        "internal": 1,
    }

    @property
    def exit_code(self) -> int:
        return self.EXIT_CODES.get(self.origin, 1)

    def to_dict(self) -> dict:
        data = {
            "code": self.code,
            "origin": self.origin,
            "message": self.message,
        }
        if self.detail:
            data["detail"] = self.detail
        origin_label = self.ORIGIN_LABELS.get(self.origin)
        if origin_label:
            data["origin_label"] = origin_label
        if self.extra:
            data.update(self.extra)
        return data


def translate_exception(exc: Exception) -> ErrorInfo:
    """Translate a low level exception into an ErrorInfo."""

    detail = str(exc) or None

    if isinstance(exc, InputError):
        extra = {"position": exc.position} if exc.position else {}
        return ErrorInfo(
            code="parse_error",
            origin="input",
            message="El archivo de entrada no se pudo interpretar.",
            detail=detail,
            extra=extra,
        )

    if isinstance(exc, ConfigError):
        return ErrorInfo(
            code="config_error",
            origin="input",
            message="La configuración de la suite es inválida.",
            detail=detail,
        )

    if isinstance(exc, BudgetError):
        return ErrorInfo(
            code="budget_exceeded",
            origin="input",
            message="La instancia supera el tamaño permitido.",
            detail=detail,
        )

    if isinstance(exc, SubResolutionError):
        return ErrorInfo(
            code="sub_resolution",
            origin="input",
            message="Se pidió una escala menor que la resolución de la medida.",
            detail=detail,
        )

    if isinstance(exc, PreconditionError):
        return ErrorInfo(
            code="precondition",
            origin="input",
            message="Los datos no cumplen las hipótesis de la operación.",
            detail=detail,
            extra={"witnesses": [str(w) for w in exc.witnesses[:10]]} if exc.witnesses else {},
        )

    if isinstance(exc, GridWindowError):
        return ErrorInfo(
            code="grid_window",
            origin="input",
            message="El nivel pedido está fuera de la ventana de la grilla.",
            detail=detail,
        )

    if isinstance(exc, SmallBoundaryError):
        return ErrorInfo(
            code="small_boundary",
            origin="numerical",
            message="No se encontró un cubo con borde pequeño; probá con un t mayor.",
            detail=detail,
            extra={"breakpoints": exc.breakpoints[:20]} if exc.breakpoints else {},
        )

    if isinstance(exc, AccretivityError):
        return ErrorInfo(
            code="accretivity",
            origin="numerical",
            message="La función b no es acretiva en algún cubo activo.",
            detail=detail,
        )

    if isinstance(exc, (DecompositionError, WhitneyError, SuppressionError, DiagonalError)):
        return ErrorInfo(
            code="construction_failed",
            origin="numerical",
            message="Una construcción numérica no pudo completarse.",
            detail=detail,
        )

    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return ErrorInfo(
            code="invalid_argument",
            origin="input",
            message="Parámetros inválidos.",
            detail=detail,
        )

    return ErrorInfo(
        code="unexpected_error",
        origin="internal",
        message="Ocurrió un error inesperado al ejecutar la suite.",
        detail=detail,
    )
