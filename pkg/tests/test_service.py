"""HTTP service endpoints over the in-process ASGI app."""

import json

from fastapi.testclient import TestClient

from openset_ensemble.service import app

client = TestClient(app)

SMALL_SPEC = {
    "c_known": 3,
    "n_unknown_source": 2,
    "n_unknown_target": 2,
    "samples_per_class": 15,
    "seed": 1,
}


def test_health():
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_generate_dataset(tmp_path):
    out = tmp_path / "bench.csv"
    resp = client.post("/datasets/generate", json={"spec": SMALL_SPEC, "out_path": str(out)})
    assert resp.status_code == 200
    body = resp.json()
    assert body["n_source"] == 5 * 15
    assert body["n_target"] == 5 * 15
    assert body["input_dim"] == 2
    assert out.exists()
    assert out.read_text().startswith("domain,label,feat_1,feat_2")


def test_generate_dataset_bad_path():
    resp = client.post(
        "/datasets/generate",
        json={"spec": SMALL_SPEC, "out_path": "/nonexistent-dir/bench.csv"},
    )
    assert resp.status_code == 400


def test_generate_dataset_invalid_spec():
    resp = client.post(
        "/datasets/generate",
        json={"spec": {"c_known": 0}, "out_path": "x.csv"},
    )
    assert resp.status_code == 422


def test_run_experiment_endpoint(tmp_path):
    body = {
        "dataset": {"synthetic": SMALL_SPEC},
        "methods": ["source_only"],
        "seeds": [0],
        "train_overrides": {"epochs": 2},
        "out_dir": str(tmp_path),
    }
    resp = client.post("/experiments/run", json=body)
    assert resp.status_code == 200
    result = resp.json()
    assert result["n_failed"] == 0
    assert result["runs"][0]["status"] == "ok"
    assert 0.0 <= result["runs"][0]["macc"] <= 1.0
    report = json.loads((tmp_path / "source_only_seed0_report.json").read_text())
    assert report["report"]["macc"] == result["runs"][0]["macc"]


def test_run_experiment_invalid_method():
    resp = client.post(
        "/experiments/run",
        json={"methods": ["bogus"], "seeds": [0], "out_dir": "/tmp/x"},
    )
    assert resp.status_code == 422
