import math

import pytest
from fastapi.testclient import TestClient

from mmac.service import (
    ConfigModel,
    ErrorRatesRequest,
    FigureRequest,
    RateRegionRequest,
    SweepModel,
    TagModel,
    ThresholdRequest,
    app,
    handle_error_rates,
    handle_figure,
    handle_rate_region,
    handle_threshold,
)

client = TestClient(app)


def bpsk_gaussian_config(**overrides):
    doc = dict(
        snr_db=10.0, rho=0.5, g_mag2=0.1, theta=math.pi / 4, n=1,
        tag=TagModel(c1=(1.0, 0.0), c0=(-1.0, 0.0)), tx_modulation="GAUSSIAN",
    )
    doc.update(overrides)
    return ConfigModel(**doc)


class TestHealth:
    def test_healthz(self):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"


class TestThresholdEndpoint:
    def test_anchor_values(self):
        resp = client.post("/threshold", json={"lambdas": [1.0, 10.0, 20.0]})
        assert resp.status_code == 200
        rows = resp.json()["rows"]
        assert rows[0]["lambda_bisect"] == pytest.approx(2.25, abs=0.01)
        assert rows[1]["lambda_bisect"] == pytest.approx(4.71, abs=0.01)
        assert rows[2]["lambda_bisect"] == pytest.approx(7.38, abs=0.01)
        assert rows[1]["lambda_asymptotic"] == 2.5

    def test_rejects_nonpositive(self):
        resp = client.post("/threshold", json={"lambdas": [0.0]})
        assert resp.status_code == 422


class TestRateRegionEndpoint:
    def test_polygon_rows(self):
        request = RateRegionRequest(config=bpsk_gaussian_config())
        resp = client.post("/rate-region", json=request.model_dump(mode="json"))
        assert resp.status_code == 200
        body = resp.json()
        lines = body["csv"].strip().split("\n")
        assert lines[0] == "label,R2,R1"
        assert len(lines) == 5  # o, B1, C, D
        assert body["series"][0]["strictly_convex"] is True

    def test_area_grows_with_channel_gain(self):
        request = RateRegionRequest(
            config=bpsk_gaussian_config(),
            sweep=SweepModel(variable="G_MAG2", values=[0.01, 0.1, 1.0]),
        )
        out = handle_rate_region(request)
        areas = [s.area for s in out.series]
        assert areas[0] < areas[1] < areas[2]

    def test_config_error_maps_to_422(self):
        # zero backscatter channel has no slope test
        request = RateRegionRequest(config=bpsk_gaussian_config(g_mag2=0.0))
        resp = client.post("/rate-region", json=request.model_dump(mode="json"))
        assert resp.status_code == 422


class TestErrorRatesEndpoint:
    def test_ser_sync_row_structure(self):
        request = ErrorRatesRequest(
            config=ConfigModel(theta="uniform", rho=1.0, g_mag2=0.1),
            mode="SER_SYNC",
            sweep=SweepModel(variable="SNR_DB", values=[5.0, 10.0]),
            trials=50_000,
            seed=3,
        )
        out = handle_error_rates(request)
        assert [r["x"] for r in out.rows] == [5.0, 10.0]
        for row in out.rows:
            assert row["lower_bound"] <= row["analytic"] <= row["upper_bound"]
            assert abs(row["mc_rate"] - row["analytic"]) <= 4 * row["mc_ci"]

    def test_ber_mode_has_empty_analytic_column(self):
        request = ErrorRatesRequest(
            config=ConfigModel(theta="uniform", rho=1.0, g_mag2=0.1, n=2),
            mode="BER_SYNC",
            sweep=SweepModel(variable="SNR_DB", values=[15.0]),
            trials=20_000,
            seed=3,
        )
        out = handle_error_rates(request)
        line = out.csv.strip().split("\n")[1]
        assert line.split(",")[1] == ""  # analytic column empty for bounds-only

    def test_alpha_sweep_applies_to_alpha(self):
        request = ErrorRatesRequest(
            config=ConfigModel(theta="uniform", rho=1.0, g_mag2=0.1, n=2),
            mode="SER_ASYNC",
            sweep=SweepModel(variable="ALPHA", values=[0.0, 0.5]),
            trials=20_000,
            seed=5,
        )
        out = handle_error_rates(request)
        assert out.rows[0]["analytic"] > out.rows[1]["analytic"]

    def test_http_roundtrip(self):
        request = ErrorRatesRequest(
            config=ConfigModel(theta="uniform", rho=1.0, g_mag2=0.1),
            mode="SER_SYNC",
            sweep=SweepModel(variable="SNR_DB", values=[5.0]),
            trials=20_000,
            seed=9,
        )
        resp = client.post("/error-rates", json=request.model_dump(mode="json"))
        assert resp.status_code == 200
        assert resp.json()["csv"].startswith("x,analytic,")


class TestFigureEndpoint:
    def test_fig4_bundle(self):
        out = handle_figure(FigureRequest(id="fig4", seed=1))
        assert set(out.files) == {"fig4.csv"}
        lines = out.files["fig4.csv"].strip().split("\n")
        assert len(lines) == 1 + 3 * 4  # three polygons of four vertices

    def test_fig7_ratio_column(self):
        out = handle_figure(FigureRequest(id="fig7", seed=1))
        lines = out.files["fig7.csv"].strip().split("\n")
        assert lines[0] == "lambda,lambda_bisect,lambda_asymptotic,ratio"
        ratios = [float(line.split(",")[3]) for line in lines[1:]]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 1.02

    def test_unknown_id_rejected(self):
        resp = client.post("/figure", json={"id": "fig99", "seed": 1})
        assert resp.status_code == 422

    def test_determinism(self):
        a = handle_figure(FigureRequest(id="fig9", seed=7, trials=5_000))
        b = handle_figure(FigureRequest(id="fig9", seed=7, trials=5_000))
        assert a.files == b.files


class TestMiEndpoint:
    def test_rows(self):
        request = {
            "config": bpsk_gaussian_config().model_dump(mode="json"),
            "samples": 50_000,
            "seed": 2,
        }
        resp = client.post("/mi", json=request)
        assert resp.status_code == 200
        rows = {r["quantity"]: r["value"] for r in resp.json()["rows"]}
        assert rows["sum_rate_lower_bound"] <= rows["sum_rate_exact"]
        assert abs(rows["sum_rate_mc"] - rows["sum_rate_exact"]) < 0.05


class TestThresholdRequestModel:
    def test_validator(self):
        with pytest.raises(ValueError):
            ThresholdRequest(lambdas=[])
        with pytest.raises(ValueError):
            ThresholdRequest(lambdas=[-1.0])
