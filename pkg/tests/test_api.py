"""
HTTP tests for the ICU-SIR query server.
"""

import os
import sys

import httpx
import pytest
from fastapi.testclient import TestClient

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir import __version__
from src.icusir.api import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


class TestHealth:
    """Tests for the health endpoint."""

    def test_health(self, client):
        """Health reports status and version."""
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "version": __version__}


class TestZonesEndpoint:
    """Tests for /api/zones."""

    def test_default_tips(self, client):
        """Default parameters return the reference tips."""
        data = client.get("/api/zones", params={"n": 16}).json()
        tips = data["proportions"]
        assert tips["green_at_istar"] == pytest.approx(3 / 14, abs=1e-12)
        assert tips["yellow_at_istar"] == pytest.approx(15 / 28, abs=1e-12)
        assert len(data["i"]) == 16
        assert set(data["curves"]) == {"phi", "b_curve", "psi", "psi_tilde"}
        assert data["counts"]["green_at_istar"] == pytest.approx(14_357_143, abs=1)

    def test_faster_contact_shrinks_zones(self, client):
        """beta = 1.01 moves both tips left."""
        base = client.get("/api/zones", params={"n": 4}).json()["proportions"]
        fast = client.get("/api/zones", params={"n": 4, "beta": 1.01}).json()["proportions"]
        assert all(fast[k] < base[k] for k in base)

    def test_invalid_params(self, client):
        """Inconsistent rates come back as an error payload."""
        data = client.get("/api/zones", params={"gamma": 0.5}).json()
        assert "error" in data


class TestPointEndpoints:
    """Tests for classify, value and greedy."""

    @pytest.mark.parametrize("s,i,zone", [
        (0.30, 0.03, "Green"),
        (0.45, 0.03, "BandMinusGreen"),
        (0.70, 0.01, "YellowMinusBand"),
        (0.90, 0.01, "Infeasible"),
    ])
    def test_classify(self, client, s, i, zone):
        """Zone labels match the reference points."""
        data = client.post("/api/classify", json={"s": s, "i": i}).json()
        assert data["zone"] == zone
        assert data["viable"] == (zone != "Infeasible")

    def test_value(self, client):
        """The affine cost has a non-positive HJ residual with argmax 0."""
        data = client.post("/api/value", json={"s": 0.45, "i": 0.03, "hj_controls": 16}).json()
        assert data["W"] > 0
        assert len(data["gradient"]) == 2
        assert data["hj_residual"] <= 1e-8
        assert data["argmax_a"] == 0.0

    def test_value_outside_yellow(self, client):
        """Infeasible points return an error payload."""
        data = client.post("/api/value", json={"s": 0.9, "i": 0.01}).json()
        assert "error" in data

    def test_value_rejects_bad_cost(self, client):
        """Unknown cost kinds fail request validation."""
        r = client.post("/api/value", json={"s": 0.45, "i": 0.03, "cost": {"kind": "nope"}})
        assert r.status_code == 422

    def test_greedy(self, client):
        """Greedy summary from the band reaches the green zone."""
        body = {"s": 0.45, "i": 0.03, "step": 0.05,
                "cost": {"kind": "multiplicative_si", "lambda": 1.0}}
        data = client.post("/api/greedy", json=body).json()
        assert data["segments"] == ["flight", "slide"]
        assert data["tau_green"] > 0
        assert data["max_infection"] <= 0.056 + 1e-9
        assert data["endpoint"][0] == pytest.approx(3 / 14, abs=1e-9)


async def test_health_async():
    """The app also answers through an async client."""
    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport, base_url="http://test") as ac:
        r = await ac.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
