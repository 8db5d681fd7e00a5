import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from app import app
from services import config_service


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(config_service, "CONFIG_FILE", str(tmp_path / "config" / "config.json"))
    config_service.save_config({"levels": [2], "trials": 10, "mc_trials": 200})
    app.config["TESTING"] = True
    with app.test_client() as client:
        yield client


def test_health(client):
    assert client.get("/health").get_json() == {"status": "ok"}


def test_list_checks(client):
    checks = client.get("/checks").get_json()["checks"]
    names = [check["name"] for check in checks]

    assert "martingale_identities" in names
    assert next(c for c in checks if c["name"] == "bad_probability")["per_level"] is False


def test_run_check(client):
    response = client.post("/checks/martingale_identities", json={})

    assert response.status_code == 200
    data = response.get_json()
    assert data["name"] == "martingale_identities"
    assert data["pass"] is True
    assert list(data["per_level"]) == ["2"]


def test_unknown_check(client):
    assert client.post("/checks/no_existe", json={}).status_code == 404


def test_invalid_overrides(client):
    response = client.post("/checks/basic_bound", json={"levels": "dos"})

    assert response.status_code == 400
    assert response.get_json()["error"]["code"] == "config_error"


def test_create_measure(client):
    response = client.post("/measures", json={"kind": "cantor1d", "level": 2, "dim": 1})

    assert response.status_code == 200
    data = response.get_json()
    assert len(data["atoms"]) == 4
    assert data["meta"]["kind"] == "cantor1d"


@pytest.mark.parametrize(
    "body",
    [
        {"kind": "hexagonal"},
        {"kind": "cantor1d"},
        {"kind": "random", "count": "muchos"},
    ],
)
def test_create_measure_rejects_bad_requests(client, body):
    assert client.post("/measures", json=body).status_code == 400


def test_budget_is_an_input_error(client):
    response = client.post("/measures", json={"kind": "cantor4corner", "level": 9})

    assert response.status_code == 400
    assert response.get_json()["error"]["code"] == "budget_exceeded"


def test_config_roundtrip(client):
    assert client.post("/config", json={"trials": 25}).get_json()["ok"] is True
    assert client.get("/config").get_json()["trials"] == 25

    response = client.post("/config", json={"gamma": 2.0})
    assert response.status_code == 400
