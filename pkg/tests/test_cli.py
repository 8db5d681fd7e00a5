import json
import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

import cli
from services import config_service


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    monkeypatch.setattr(config_service, "CONFIG_FILE", str(tmp_path / "config" / "config.json"))
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"levels": [2], "trials": 10, "mc_trials": 200}), encoding="utf-8")
    return suite


def test_gen_is_byte_identical(tmp_path):
    assert cli.main(["gen", "--kind", "cantor4", "--level", "2", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["gen", "--kind", "cantor4corner", "--level", "2", "--out", str(tmp_path / "b")]) == 0

    first = (tmp_path / "a" / "measure.json").read_bytes()
    assert first == (tmp_path / "b" / "measure.json").read_bytes()
    assert json.loads(first)["meta"]["kind"] == "cantor4corner"


def test_gen_to_stdout(capsys):
    assert cli.main(["gen", "--kind", "random", "--count", "5", "--seed", "3"]) == 0

    data = json.loads(capsys.readouterr().out)
    assert len(data["atoms"]) == 5


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "--kind", "cantor4"],
        ["gen", "--kind", "cantor4", "--level", "9"],
        ["gen", "--kind", "uniform", "--count", "7", "--dim", "2"],
        ["check", "--suite", "no_existe"],
        ["report", "--input", "/nonexistent/report.json"],
        ["decompose", "--measure", "/nonexistent/measure.json"],
    ],
)
def test_input_errors_exit_with_two(argv, capsys):
    assert cli.main(argv) == 2

    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]
    assert error["origin"] == "input"


def test_malformed_config_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"levels": [2,]}', encoding="utf-8")

    assert cli.main(["check", "--suite", "basic_bound", "--config", str(bad)]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]
    assert error["position"].startswith(str(bad) + ":1:")


def test_check_writes_both_formats_and_report_replays(tmp_path, capsys, isolated_config):
    out = tmp_path / "out"
    code = cli.main(["check", "--suite", "martingale_identities", "--config", str(isolated_config), "--out", str(out)])

    assert code == 0
    data = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert [row["name"] for row in data["checks"]] == ["martingale_identities"]
    assert data["config"]["levels"] == [2]

    capsys.readouterr()
    assert cli.main(["report", "--input", str(out / "report.json"), "--format", "csv"]) == 0
    assert capsys.readouterr().out == (out / "report.csv").read_text(encoding="utf-8")


def test_check_flags_override_the_file(capsys, isolated_config):
    code = cli.main(["check", "--suite", "basic_bound", "--config", str(isolated_config), "--seed", "11"])

    data = json.loads(capsys.readouterr().out)
    assert code in (0, 1)
    assert data["config"]["seed"] == 11
    assert data["checks"][0]["seed"] == 11


def test_decompose_self_reference(tmp_path, capsys):
    measure = tmp_path / "measure.json"
    assert cli.main(["gen", "--kind", "cantor", "--level", "3", "--out", str(tmp_path)]) == 0
    capsys.readouterr()

    assert cli.main(["decompose", "--measure", str(measure)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["verification"]["passed"] is True
    assert payload["decomposition"]["cubes"] == []


def test_check_runs_with_workers(capsys, isolated_config):
    code = cli.main(
        ["check", "--suite", "martingale_identities,basic_bound", "--config", str(isolated_config), "--workers", "2"]
    )

    data = json.loads(capsys.readouterr().out)
    assert code in (0, 1)
    assert [row["name"] for row in data["checks"]] == ["martingale_identities", "basic_bound"]
