from fastapi.testclient import TestClient

from api.main import app


client = TestClient(app)


def test_health():
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"
    body = client.get("/api/health").json()
    assert body["status"] == "ok"
    assert "cached_runs" in body and "timestamp" in body
    assert set(body["cache"]) == {"hits", "misses", "entries"}


def test_validate_reports_merton_violations():
    resp = client.post("/api/validate", json={"problem": "merton", "preset": "table1", "samples": 3})
    assert resp.status_code == 200
    body = resp.json()
    assert body["ok"] and body["problem"] == "merton3d"
    assert body["mesh"]["intervals"] == [10, 10, 10]
    assert {v["kind"] for v in body["violations"]}


def test_run_is_cached():
    payload = {
        "problem": {"name": "smoke", "samples": 11},
        "mesh": {"axes": [{"lo": 0.0, "hi": 1.0, "n": 10}]},
        "time": {"steps": [6, 12], "theta": 0.5},
    }
    first = client.post("/api/run", json=payload)
    assert first.status_code == 200
    data = first.json()["data"]
    assert not data["cached"]
    assert [r["steps"] for r in data["records"]] == [6, 12]
    assert "fitted" in data["orders"]
    assert any(entry["stage"] == "solve" for entry in data["debug_logs"])

    second = client.post("/api/run", json=payload).json()["data"]
    assert second["cached"]
    assert second["records"] == data["records"]


def test_invalid_run_payload():
    resp = client.post("/api/run", json={"time": {"theta": 0.1}})
    assert resp.status_code == 422
    assert resp.json()["ok"] is False
    resp = client.post("/api/validate", json={"problem": "merton", "preset": "nope"})
    assert resp.status_code == 422
