import asyncio
import inspect
import json

import numpy as np

from api import runs

from tests.conftest import harmonic_config


def test_index(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["endpoints"] == "/api/runs"


def test_create_and_fetch_run(client):
    response = client.post("/api/runs/", json=harmonic_config("lsc"))
    assert response.status_code == 201
    run = response.json()
    assert run["status"] == "completed"
    assert run["method"] == "lsc"
    assert run["diagnostics"]["accepted"] == 400

    fetched = client.get(f"/api/runs/{run['id']}")
    assert fetched.status_code == 200
    assert fetched.json()["csv_path"] == run["csv_path"]

    series = client.get(f"/api/runs/{run['id']}/series").json()
    assert len(series["t"]) == 21
    assert series["method"] == "lsc"
    assert np.all(np.array(series["stderr_real"]) >= 0.0)


def test_list_and_filter_runs(client):
    client.post("/api/runs/", json=harmonic_config("lsc"))
    client.post("/api/runs/", json=harmonic_config("quantum"))
    assert len(client.get("/api/runs/").json()) == 2
    quantum = client.get("/api/runs/", params={"method": "quantum"}).json()
    assert [r["method"] for r in quantum] == ["quantum"]


def test_invalid_config_is_rejected(client):
    payload = harmonic_config("lsc")
    payload.pop("temperature")
    assert client.post("/api/runs/", json=payload).status_code == 422
    assert client.post("/api/runs/", json=harmonic_config("lsc", t_max=2.05)).status_code == 422


def test_numerical_failure(client):
    response = client.post("/api/runs/", json=harmonic_config("quantum", quantum={"n_states": 5}))
    assert response.status_code == 500
    failed = client.get("/api/runs/").json()[0]
    assert failed["status"] == "failed"
    assert client.get(f"/api/runs/{failed['id']}/series").status_code == 409


def test_upload_config(client):
    content = json.dumps(harmonic_config("lsc", name="uploaded")).encode("utf-8")
    response = client.post("/api/runs/upload", files={"file": ("run.json", content, "application/json")})
    assert response.status_code == 201
    assert response.json()["csv_path"].endswith("uploaded.csv")

    bad = client.post("/api/runs/upload", files={"file": ("run.txt", b"{}", "text/plain")})
    assert bad.status_code == 400
    broken = client.post("/api/runs/upload", files={"file": ("bad.json", b"{not json", "application/json")})
    assert broken.status_code == 422


def test_missing_and_deleted_runs(client):
    assert client.get("/api/runs/999").status_code == 404
    assert client.get("/api/runs/999/series").status_code == 404
    run = client.post("/api/runs/", json=harmonic_config("lsc")).json()
    assert client.delete(f"/api/runs/{run['id']}").json() == {"message": "Расчет удален"}
    assert client.get(f"/api/runs/{run['id']}").status_code == 404
    assert client.delete(f"/api/runs/{run['id']}").status_code == 404


def test_run_launch_is_executed_off_the_event_loop(client, monkeypatch):
    assert not inspect.iscoroutinefunction(runs.create_run)

    in_event_loop = []
    launch = runs._launch

    def recording_launch(config, db):
        try:
            asyncio.get_running_loop()
            in_event_loop.append(True)
        except RuntimeError:
            in_event_loop.append(False)
        return launch(config, db)

    monkeypatch.setattr(runs, "_launch", recording_launch)
    content = json.dumps(harmonic_config("lsc", name="threaded")).encode("utf-8")
    response = client.post("/api/runs/upload", files={"file": ("run.json", content, "application/json")})
    assert response.status_code == 201
    assert in_event_loop == [False]
