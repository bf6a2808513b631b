import numpy as np
import pytest
from fastapi.testclient import TestClient

from flatcert.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_ledger_endpoint(client):
    r = client.post("/ledger", json={"n": 3, "eps1": 0.25, "eta": 0.2})
    assert r.status_code == 200
    doc = r.json()
    assert doc["alpha_warning"] is True
    assert doc["passed"] is True
    assert doc["constants"]["flatness_threshold"]["approx"] == "underflow"


def test_ledger_rejects_bad_params(client):
    r = client.post("/ledger", json={"n": 3, "eps1": 0.25, "eta": 0.4})
    assert r.status_code == 400
    assert "eta" in r.json()["detail"]


def test_exact_solve_certify_flow(client):
    r = client.post(
        "/surface/exact",
        json={"kind": "affine", "a": [0.005, -0.002], "resolution": 33},
    )
    assert r.status_code == 200
    gf1 = r.json()["gf1"]
    assert gf1.startswith("gf1\nbasedim 2\n")

    r = client.post(
        "/certify", json={"surface_gf1": gf1, "eps": 1e-2, "resolution": 33}
    )
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is True
    nu = body["certificate"]["nu"]
    expected = np.array([-0.005, 0.002, 1.0])
    expected /= np.linalg.norm(expected)
    assert np.allclose(nu, expected, atol=1e-9)


def test_solve_endpoint_with_preset(client):
    r = client.post(
        "/surface/solve",
        json={"preset": "saddle", "eps": 1e-2, "resolution": 33},
    )
    assert r.status_code == 200
    body = r.json()
    assert body["residual_sup"] < 1e-9
    assert body["iterations"] >= 1


def test_audit_endpoint(client):
    surf = client.post(
        "/surface/solve",
        json={"preset": "saddle", "eps": 1e-2, "resolution": 65},
    ).json()["gf1"]
    r = client.post(
        "/audit", json={"surface_gf1": surf, "eps": 1e-2, "resolution": 65}
    )
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is True
    assert body["csv"].startswith("m,radius,measured,bound")


def test_certify_slab_violation_400(client):
    surf = client.post(
        "/surface/exact",
        json={"kind": "affine", "a": [0.02, 0.0], "resolution": 33},
    ).json()["gf1"]
    r = client.post(
        "/certify", json={"surface_gf1": surf, "eps": 1e-3, "resolution": 33}
    )
    assert r.status_code == 400
    assert "slab" in r.json()["detail"]


def test_certify_failing_stage_reports(client):
    # two full-height sheets at tiny flatness: well-formed input, failing verdict
    import flatcert.grid as fg
    from flatcert.mse import exact_solution
    import tempfile, pathlib

    field = exact_solution("affine", a=(0.0, 0.0), resolution=33)
    vals = field.values.copy()
    sel = np.argwhere(field.covered())
    vals[tuple(sel[::2].T)] = 1e-5
    bad = field.with_values(vals)
    with tempfile.NamedTemporaryFile("w", suffix=".gf", delete=False) as fh:
        path = pathlib.Path(fh.name)
    fg.write_gf1(bad, path)
    gf1 = path.read_text()
    path.unlink()
    r = client.post(
        "/certify", json={"surface_gf1": gf1, "eps": 1e-5, "resolution": 33}
    )
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] is False
    # the jagged graph survives the sandwich but cannot stay close to its
    # harmonic replacement at the certified radius
    assert body["certificate"]["failed_stage"] == "inclusion_analytic"
    assert any(s["name"] == "sandwich" for s in body["certificate"]["stages"])


def test_iterate_endpoint(client):
    surf = client.post(
        "/surface/solve",
        json={"preset": "saddle", "eps": 1e-2, "resolution": 33, "q": 0.12},
    ).json()["gf1"]
    r = client.post(
        "/iterate",
        json={"surface_gf1": surf, "eps": 1e-2, "steps": 2, "resolution": 33},
    )
    assert r.status_code == 200
    body = r.json()
    assert len(body["certificates"]) >= 1
    assert body["eps_sequence"][0] == pytest.approx(1e-2, rel=0.2)
