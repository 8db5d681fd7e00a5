import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from services.harness_errors import (
    AccretivityError,
    BudgetError,
    ConfigError,
    InputError,
    PreconditionError,
    SmallBoundaryError,
    SuppressionError,
    translate_exception,
)


@pytest.mark.parametrize(
    ("exc", "code", "exit_code"),
    [
        (InputError("x", path="a.json", line=2, column=5), "parse_error", 2),
        (ConfigError("x"), "config_error", 2),
        (BudgetError("x"), "budget_exceeded", 2),
        (PreconditionError("x", witnesses=[[0.0, 1.0]]), "precondition", 2),
        (SmallBoundaryError("x", breakpoints=[0.1, 0.2]), "small_boundary", 1),
        (AccretivityError("x"), "accretivity", 1),
        (SuppressionError("x"), "construction_failed", 1),
        (ValueError("x"), "invalid_argument", 2),
        (RuntimeError("x"), "unexpected_error", 1),
    ],
)
def test_translation_codes(exc, code, exit_code):
    info = translate_exception(exc)

    assert info.code == code
    assert info.exit_code == exit_code


def test_input_error_position():
    info = translate_exception(InputError("bad", path="a.json", line=2, column=5))

    assert info.to_dict()["position"] == "a.json:2:5"
    assert info.to_dict()["origin_label"] == "Datos de entrada"
    assert InputError("bad", line=4).position == "4:0"
    assert InputError("bad").position is None


def test_extra_fields():
    assert translate_exception(PreconditionError("x", witnesses=[[0.5]])).to_dict()["witnesses"] == ["[0.5]"]
    assert translate_exception(SmallBoundaryError("x", breakpoints=[0.1])).to_dict()["breakpoints"] == [0.1]
    assert str(BudgetError()) == "La instancia excede el presupuesto de tamaño"
