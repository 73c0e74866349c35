"""HTTP surface: endpoint happy paths and the error-to-status mapping."""

import json
import os

import pytest
from fastapi.testclient import TestClient

from fedssp.service import create_app


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def fit_body(out_dir, **overrides):
    cfg = {
        "seed": 0,
        "out_dir": str(out_dir),
        "data": {"kind": "synth", "d": 8, "m": 2, "n_normal": 80,
                 "n_anomaly": 15, "noise_sigma": 0.1, "anomaly_scale": 3.0},
        "partition": {"n_gateways": 2},
        "hyperparams": {"m": 2, "rounds": 4, "inner_max_iters": 25,
                        "lambda1": 0.1, "lambda2": 0.1},
        "detect": {"quantile": 0.95},
    }
    cfg.update(overrides)
    return {"config": cfg}


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_fit_endpoint(client, tmp_path):
    r = client.post("/fit", json=fit_body(tmp_path / "run"))
    assert r.status_code == 200
    body = r.json()
    assert body["rounds_completed"] == 4
    assert body["stopped"] in ("converged", "max_rounds")
    assert os.path.exists(body["model_path"])
    assert os.path.exists(body["history_path"])


def test_detect_endpoint(client, tmp_path):
    client.post("/fit", json=fit_body(tmp_path / "run"))
    r = client.post("/detect", json={"model_dir": str(tmp_path / "run")})
    assert r.status_code == 200
    body = r.json()
    assert set(body) == {"report", "report_path", "scores_path"}
    rep = body["report"]
    assert rep["tp"] + rep["fn"] == 15
    assert 0.0 <= rep["f1"] <= 100.0
    assert os.path.exists(body["report_path"])
    # quantile override is honored
    r2 = client.post("/detect", json={"model_dir": str(tmp_path / "run"),
                                      "quantile": 0.5,
                                      "out_dir": str(tmp_path / "alt")})
    assert r2.status_code == 200
    assert r2.json()["report"]["threshold"] <= rep["threshold"]


def test_sweep_endpoint(client, tmp_path):
    r = client.post("/sweep", json={**fit_body(tmp_path / "sweep"),
                                    "p_values": [0.5], "q_values": [0.0, 0.5]})
    assert r.status_code == 200
    body = r.json()
    names = [c["cell"] for c in body["cells"]]
    assert names == ["baseline", "p0.5_q0", "p0.5_q0.5"]
    assert all(c["status"] == "ok" for c in body["cells"])
    assert os.path.exists(body["csv_path"])
    assert os.path.exists(body["json_path"])


def test_synth_endpoint(client, tmp_path):
    r = client.post("/synth", json={
        "spec": {"kind": "synth", "d": 5, "m": 2, "n_normal": 20,
                 "n_anomaly": 6},
        "out_dir": str(tmp_path / "data"),
        "seed": 2,
    })
    assert r.status_code == 200
    body = r.json()
    assert body["n_train"] == 20 and body["n_test"] == 12
    header = open(body["train_path"]).readline().strip()
    assert header == "f0,f1,f2,f3,f4,label"


def test_config_error_maps_to_400(client, tmp_path):
    # m exceeds the ambient dimension: rejected by the solver config check
    r = client.post("/fit", json=fit_body(
        tmp_path / "run",
        hyperparams={"m": 9, "rounds": 1}))
    assert r.status_code == 400
    detail = r.json()["detail"]
    assert detail["kind"] == "config"
    assert "m" in detail["message"]


def test_data_error_maps_to_400(client, tmp_path):
    r = client.post("/detect", json={"model_dir": str(tmp_path / "missing")})
    assert r.status_code == 400
    assert r.json()["detail"]["kind"] == "data"


def test_validation_error_maps_to_422(client):
    r = client.post("/fit", json={"config": {"out_dir": 7}})
    assert r.status_code == 422


def test_sweep_bad_exponent_maps_to_400(client, tmp_path):
    r = client.post("/sweep", json={**fit_body(tmp_path / "sweep"),
                                    "p_values": [1.0], "q_values": [0.5]})
    assert r.status_code == 400
    assert r.json()["detail"]["kind"] == "config"
