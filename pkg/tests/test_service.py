"""HTTP facade tests on a scaled-down workspace.

One module-scoped workspace goes through the whole lifecycle: register,
calibrate, generate, verify, localize, bench.  Error mapping gets its
own fresh workspace where nothing is calibrated yet.
"""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from provmark.service import create_app

from test_workflows import tiny_config


def make_client(tmp_path):
    root = tmp_path / "ws"
    root.mkdir()
    tiny_config().save(root / "config.json")
    return TestClient(create_app(root), raise_server_exceptions=False)


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    client = make_client(tmp_path_factory.mktemp("service"))
    assert client.post("/register", json={"user_id": "alice", "seed": 0}).status_code == 200
    assert client.post("/calibrate", json={"user_id": "alice", "seed": 0}).status_code == 200
    return client


@pytest.fixture(scope="module")
def generated(client):
    resp = client.post("/generate", json={"user_id": "alice", "n": 2,
                                          "timestamps": [50, 51],
                                          "preview": True})
    assert resp.status_code == 200
    return resp.json()


# ---- lifecycle -----------------------------------------------------------

def test_health_reflects_state(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["calibrated"] is True
    assert "alice" in body["registered_users"]


def test_register_reports_fingerprint(client):
    body = client.post("/register", json={"user_id": "bob", "seed": 1}).json()
    assert body["user_id"] == "bob"
    assert len(body["fingerprint"]) > 0
    assert body["registered_users"] == 2


def test_generate_writes_paths(generated):
    assert generated["user_id"] == "alice"
    assert generated["timestamps"] == [50, 51]
    assert len(generated["paths"]) == 2
    assert all(p.endswith(".pait") for p in generated["paths"])


def test_verify_own_image(client, generated):
    resp = client.post("/verify", json={"path": generated["paths"][0]})
    body = resp.json()
    assert resp.status_code == 200
    assert body["user_id"] == "alice"         # claimed user from the sidecar
    assert body["timestamp"] == 50
    assert body["vanilla_pass"] is True
    assert body["classification"] != "invalid_or_nonwatermarked"


def test_verify_from_preview_quantizes_but_passes(client, generated):
    resp = client.post("/verify", json={"path": generated["paths"][0],
                                        "from_preview": True})
    assert resp.status_code == 200
    assert resp.json()["vanilla_pass"] is True


def test_verify_under_wrong_registered_user(client, generated):
    resp = client.post("/verify", json={"path": generated["paths"][0],
                                        "user_id": "bob"})
    body = resp.json()
    assert resp.status_code == 200
    assert body["vanilla_pass"] is False
    assert body["classification"] == "invalid_or_nonwatermarked"
    assert body["ownership_affirmed"] is False


def test_localize_returns_mask(client, generated):
    body = client.post("/localize", json={"path": generated["paths"][1]}).json()
    assert body["user_id"] == "alice"
    assert len(body["mask"]) == 8 and len(body["mask"][0]) == 8
    assert body["tampered_pixels"] == sum(map(sum, body["mask"]))


def test_theory_endpoint_reports_all_chain_lengths(client):
    body = client.get("/theory", params={"n_trials": 50}).json()
    assert set(body["per_t"]) == {"1", "5", "6"}
    for cell in body["per_t"].values():
        assert set(cell["closed_form"]) == {"valid", "wrong", "plain_claim"}


def test_attack_bench_endpoint(client):
    resp = client.post("/attack", json={"user_id": "alice", "seed": 1,
                                        "include_optimization": False})
    body = resp.json()
    assert resp.status_code == 200
    assert "benign" in body["summary"]
    assert body["n_rows"] > 0
    with open(body["csv_path"]) as fh:
        header = fh.readline().strip().split(",")
    assert header[0] == "image_id" and "classification" in header


def test_localization_bench_endpoint(client):
    resp = client.post("/localization-bench", json={"user_id": "alice", "seed": 2})
    assert resp.status_code == 200
    assert "per_ratio" in resp.json()


# ---- error mapping -------------------------------------------------------

def test_uncalibrated_verify_maps_to_409(tmp_path):
    fresh = make_client(tmp_path)
    fresh.post("/register", json={"user_id": "carol", "seed": 3})
    paths = fresh.post("/generate", json={"user_id": "carol", "n": 1,
                                          "timestamps": [60]}).json()["paths"]
    resp = fresh.post("/verify", json={"path": paths[0]})
    assert resp.status_code == 409
    assert resp.json()["exit_code"] == 3


def test_unknown_user_maps_to_422(client):
    resp = client.post("/generate", json={"user_id": "nobody", "n": 1})
    assert resp.status_code == 422
    assert resp.json()["exit_code"] == 4


def test_missing_file_maps_to_422(client):
    resp = client.post("/verify", json={"path": "/nope/missing.pait"})
    assert resp.status_code == 422
    assert resp.json()["exit_code"] == 4


def test_corrupt_tensor_maps_to_422(client, generated, tmp_path):
    import shutil
    from pathlib import Path
    src = Path(generated["paths"][0])
    dst = tmp_path / src.name
    shutil.copy(src, dst)
    shutil.copy(src.with_suffix(".json"), dst.with_suffix(".json"))
    raw = bytearray(dst.read_bytes())
    raw[-1] ^= 0xFF                      # breaks the payload checksum
    dst.write_bytes(bytes(raw))
    resp = client.post("/verify", json={"path": str(dst)})
    assert resp.status_code == 422
    assert resp.json()["exit_code"] == 4


def test_provenance_mismatch_maps_to_409(client, generated, tmp_path):
    import shutil
    from pathlib import Path
    src = Path(generated["paths"][1])
    dst = tmp_path / src.name
    shutil.copy(src, dst)
    sidecar = json.loads(src.with_suffix(".json").read_text())
    sidecar["schedule_hash"] = "0" * 16   # claims a different pipeline
    dst.with_suffix(".json").write_text(json.dumps(sidecar))
    resp = client.post("/verify", json={"path": str(dst)})
    assert resp.status_code == 409
    assert resp.json()["exit_code"] == 5


def test_request_validation_is_fastapis(client):
    resp = client.post("/register", json={"user_id": ""})
    assert resp.status_code == 422        # pydantic, not a domain error
    assert "exit_code" not in resp.json()
