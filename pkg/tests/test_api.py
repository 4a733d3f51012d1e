import json

import pytest
from fastapi.testclient import TestClient

QUBIT_DIMS = {"AI": 2, "AO": 2, "BI": 2, "BO": 2}


@pytest.fixture
def client(store_path):
    from main import create_app

    return TestClient(create_app())


def test_app_leaves_logging_configuration_alone(store_path, monkeypatch):
    import logging

    from main import create_app

    calls = []
    monkeypatch.setattr(logging, "basicConfig", lambda *args, **kwargs: calls.append(kwargs))
    create_app()
    assert calls == []


def test_home_lists_named_processes(client):
    body = client.get("/").json()
    assert body["service"] == "procmat"
    assert "wopt" in body["named"]


@pytest.mark.parametrize("route", ["/named/wocb", "/processes/wocb"])
def test_named_process(client, route):
    res = client.get(route)
    assert res.status_code == 200
    body = res.json()
    assert body["format"] == "pauli"
    assert "dense" not in body
    assert {c["term"] for c in body["pauli_coeffs"]} == {"IIII", "IZZI", "ZIXZ"}


def test_unknown_name_is_404(client):
    assert client.get("/named/nope").status_code == 404


def test_family_parameters_are_checked(client):
    assert client.get("/named/wqe", params={"q": 0.5, "eps": 0.2}).status_code == 200
    res = client.get("/named/wqe", params={"q": 0.5, "eps": 0.3})
    assert res.status_code == 422
    assert "eps_validity" in res.json()["detail"]
    assert client.get("/named/wqe", params={"q": 1.5}).status_code == 422


def test_validate_upload(client):
    text = json.dumps({"dims": QUBIT_DIMS,
                       "pauli_coeffs": [{"term": "IIII", "coeff": 0.25}, {"term": "IZII", "coeff": 0.1}]})
    res = client.post("/validate", files={"file": ("w.json", text, "application/json")})
    assert res.status_code == 200
    body = res.json()
    assert body["valid"] is False
    assert body["psd"] is True
    assert body["in_valid_subspace"] is False


def test_validate_malformed_upload(client):
    res = client.post("/validate", files={"file": ("w.json", "{", "application/json")})
    assert res.status_code == 422
    assert res.json()["detail"].startswith("process file")


def test_robustness_of_named_process(client):
    process = client.get("/named/wopt").json()
    res = client.post("/robustness", json={"process": process})
    assert res.status_code == 200
    body = res.json()
    assert body["lambda_opt"] == pytest.approx(0.309401, abs=1e-6)
    assert body["separable"] is False
    assert body["solver"]["status"] == "optimal"


def test_robustness_rejects_invalid_process(client):
    process = {"dims": QUBIT_DIMS, "pauli_coeffs": [{"term": "IIII", "coeff": 0.5}]}
    res = client.post("/robustness", json={"process": process})
    assert res.status_code == 422
    assert "trace" in res.json()["detail"]


def test_witness_route(client):
    body = client.get("/witness").json()
    assert body["check_passed"] is True
    assert body["certified"] is None
    assert len(body["terms"]) == 5


def test_region_route(client):
    rows = client.get("/region", params={"grid": 3}).json()
    assert [r["q"] for r in rows] == [0.0, 0.5, 1.0]
    assert all(r["eps_v"] <= r["eps_c"] + 1e-15 for r in rows)
    assert client.get("/region", params={"grid": 1}).status_code == 422


def test_werner_window_route(client):
    body = client.get("/werner-window").json()
    assert body["gamma_high"] == pytest.approx(0.26568, abs=1e-4)
    assert body["check_passed"] is True


def test_causal_lp_route(client):
    table = {"settings": [2, 2], "outcomes": [2, 2],
             "entries": [[y, x, x, y, 1.0] for x in range(2) for y in range(2)]}
    body = client.post("/causal-lp", json={"table": table}).json()
    assert body["causal"] is False
    assert body["certificate_value"] > 0
    uniform = {"settings": [2, 2], "outcomes": [2, 2],
               "entries": [[a, b, x, y, 0.25] for a in range(2) for b in range(2)
                           for x in range(2) for y in range(2)]}
    body = client.post("/causal-lp", json={"table": uniform}).json()
    assert body["causal"] is True
    assert "certificate" not in body


def test_bad_table_is_422(client):
    table = {"settings": [2, 2], "outcomes": [2, 2], "entries": [[0, 0, 0, 0, 1.0]]}
    assert client.post("/causal-lp", json={"table": table}).status_code == 422


def test_runs_route_starts_empty(client):
    assert client.get("/runs").json() == []
