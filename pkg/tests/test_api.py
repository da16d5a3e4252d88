import pytest
from fastapi.testclient import TestClient

from main import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_root(client):
    assert client.get("/").json()["docs"] == "/docs"


# ---------------------------------------------------------------------------
# Charges
# ---------------------------------------------------------------------------

def test_list_workloads(client):
    workloads = {w["name"]: w for w in client.get("/api/workloads/").json()}
    assert workloads["alexnet"]["conv_layers"] == 5
    assert workloads["vgg16"]["conv_layers"] == 13
    assert workloads["hog"]["kind"] == "hog"


def test_count_builtin(client):
    body = client.get("/api/workloads/alexnet/count").json()
    assert body["report"]["macs"] == 665_784_864
    assert body["ratio_vs_hog"] == pytest.approx(36.9, rel=0.04)


def test_count_hog_for_image_size(client):
    body = client.get("/api/workloads/hog/count", params={"image_h": 64, "image_w": 64}).json()
    assert body["report"]["pixels"] == 4096


def test_count_unknown_workload(client):
    assert client.get("/api/workloads/resnet/count").status_code == 404


def test_trace(client):
    layers = client.get("/api/workloads/alexnet/trace").json()["layers"]
    conv5 = next(layer for layer in layers if layer["name"] == "conv5")
    assert (conv5["channels"], conv5["height"], conv5["width"]) == (256, 13, 13)


def test_count_posted_descriptor(client):
    document = {"name": "one", "input": {"h": 32, "w": 32, "c": 1}, "layers": [
        {"kind": "conv", "name": "c", "in_channels": 1, "out_channels": 1, "kernel_h": 1, "kernel_w": 1},
    ]}
    body = client.post("/api/workloads/count", json=document).json()
    assert body["workload"] == "one"
    assert body["report"]["gop_per_mpixel"] == pytest.approx(0.002)


def test_count_posted_descriptor_with_bad_layer(client):
    document = {"name": "bad", "input": {"h": 8, "w": 8, "c": 3}, "layers": [
        {"kind": "conv", "name": "c1", "in_channels": 4, "out_channels": 1, "kernel_h": 1, "kernel_w": 1},
    ]}
    response = client.post("/api/workloads/count", json=document)
    assert response.status_code == 422
    assert "c1" in response.json()["detail"]


def test_hardwire(client):
    body = client.get("/api/workloads/hardwire").json()
    assert body["multipliers_affordable"] == 10_000
    assert body["weights_in_sram"] == 153_600


# ---------------------------------------------------------------------------
# HOG
# ---------------------------------------------------------------------------

def test_extract(client, fixture_dir):
    with open(fixture_dir / "scene64.pgm", "rb") as f:
        response = client.post("/api/hog/extract", files={"file": ("scene64.pgm", f, "image/x-portable-graymap")},
                               data={"levels": "1"})
    assert response.status_code == 200
    body = response.json()
    assert (body["width"], body["height"]) == (64, 64)
    assert body["analytical_match"]
    assert [m["cell_size"] for m in body["maps"]] == [8, 4]
    assert body["features"] is None


def test_extract_with_features(client, fixture_dir):
    with open(fixture_dir / "scene64.pgm", "rb") as f:
        response = client.post("/api/hog/extract", files={"file": ("scene64.pgm", f)},
                               data={"levels": "1", "include_features": "true"})
    assert response.json()["features"]["format"] == "hog-features/1"


def test_extract_bad_image(client):
    response = client.post("/api/hog/extract", files={"file": ("x.pgm", b"P2\n1 1\n255\n0")})
    assert response.status_code == 400


def test_extract_bad_config(client, fixture_dir):
    with open(fixture_dir / "scene64.pgm", "rb") as f:
        response = client.post("/api/hog/extract", files={"file": ("scene64.pgm", f)}, data={"num_bins": "0"})
    assert response.status_code == 422


# ---------------------------------------------------------------------------
# CNN
# ---------------------------------------------------------------------------

def test_cnn_run(client):
    body = client.post("/api/cnn/run", json={"arch": "alexnet", "upto_layer": 1}).json()
    assert [layer["name"] for layer in body["layers"]] == ["conv1"]
    assert body["layers"][0]["macs"] == 105_415_200
    assert body["ops"]["macs"] == 105_415_200
    assert 0 <= body["aggregate_sparsity"] <= 1


def test_cnn_unknown_arch(client):
    assert client.post("/api/cnn/run", json={"arch": "hog"}).status_code == 404


def test_cnn_bad_upto(client):
    assert client.post("/api/cnn/run", json={"arch": "alexnet", "upto_layer": 9}).status_code == 400


# ---------------------------------------------------------------------------
# Énergie
# ---------------------------------------------------------------------------

def test_validate(client):
    body = client.get("/api/energy/validate").json()
    assert body["passed"]
    assert len(body["checks"]) == 18


def test_ratios(client):
    ratios = {row["name"]: row["ratio"] for row in client.get("/api/energy/ratios").json()}
    assert ratios["VGG-16"] == pytest.approx(13485.8)


def test_budget(client):
    verdicts = {row["name"]: row["passed"] for row in client.get("/api/energy/budget").json()}
    assert verdicts == {"HOG": True, "AlexNet": False, "VGG-16": False}


def test_project(client):
    body = client.post("/api/energy/project",
                       json={"entry": "AlexNet", "techniques": "quant=8,prune=0.151,rlc,dataflow=1.4"}).json()
    assert body["projected_energy_nj_per_pixel"] == pytest.approx(11.726, rel=1e-3)
    assert body["baseline_memory_bytes"] == 4_668_160


def test_project_unknown_entry(client):
    assert client.post("/api/energy/project", json={"entry": "ResNet"}).status_code == 404


def test_project_bad_techniques(client):
    assert client.post("/api/energy/project", json={"techniques": "dataflow=9"}).status_code == 400


def test_pareto(client):
    body = client.get("/api/energy/pareto").json()
    assert [p["label"] for p in body["frontier"]] == ["HOG", "AlexNet-CONV3", "AlexNet-CONV5", "VGG"]
    assert all(check["passed"] for check in body["checks"])


# ---------------------------------------------------------------------------
# Vérification
# ---------------------------------------------------------------------------

def test_verify_group(client):
    body = client.get("/api/verify/", params={"group": "tradeoff"}).json()
    assert body["passed"]
    assert {row["group"] for row in body["checks"]} == {"tradeoff"}


def test_verify_unknown_group(client):
    assert client.get("/api/verify/", params={"group": "nope"}).status_code == 404
