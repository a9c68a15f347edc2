"""FastAPI service exposing the rate-region and error-rate computations.

The CLI is a thin client of this layer: every subcommand marshals its
arguments into one of the request models below and either calls the
handler in-process or POSTs it to a running server.  Handlers are pure
(output depends only on the request, seeds included), so responses,
including the rendered CSV text, are byte-stable.
"""

from __future__ import annotations

import math
from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .analytics import (
    NumericalError,
    ThresholdMethod,
    ber_x2_bounds_async,
    ber_x2_bounds_sync,
    detection_threshold,
    ser_x1_async,
    ser_x1_async_asymptotic_bounds,
    ser_x1_bounds_sync,
    ser_x1_sync,
)
from .model import ConfigError, SystemConfig, parse_config
from .numerics import ConvergenceError, QuadratureError
from .rate_region import (
    convexity_slopes,
    rate_tag_given_tx,
    rate_tag_lower_bound,
    rate_tag_upper_bound,
    region_area,
    region_vertices,
    sum_rate_exact,
    sum_rate_lower_bound,
)
from .simulate import TagStrategy, run_ber_x2, run_mi_estimates, run_ser_x1

SWEEP_VARIABLES = ("SNR_DB", "G_MAG2", "THETA", "ALPHA", "N")
ERROR_MODES = ("SER_SYNC", "SER_ASYNC", "BER_SYNC", "BER_ASYNC")
FIGURE_IDS = ("fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11")


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

class TagModel(BaseModel):
    c1: tuple[float, float] = (1.0, 0.0)
    c0: tuple[float, float] = (0.0, 0.0)


class ConfigModel(BaseModel):
    """Mirrors the JSON config file schema, field for field."""

    snr_db: float = 10.0
    rho: float = 0.5
    g_mag2: float = 0.1
    theta: float | Literal["uniform"] = math.pi / 4
    n: int = 1
    alpha: float = 0.0
    tag: TagModel = Field(default_factory=TagModel)
    tx_modulation: Literal["QPSK", "GAUSSIAN"] = "QPSK"

    def to_system(self) -> tuple[SystemConfig, float]:
        doc = self.model_dump()
        doc["tag"] = {"c1": list(self.tag.c1), "c0": list(self.tag.c0)}
        return parse_config(doc)


class SweepModel(BaseModel):
    variable: Literal["SNR_DB", "G_MAG2", "THETA", "ALPHA", "N"]
    values: list[float] = Field(min_length=1)

    @field_validator("values")
    @classmethod
    def _finite(cls, values):
        if not all(math.isfinite(v) for v in values):
            raise ValueError("sweep values must be finite")
        return values


class RateRegionRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    sweep: SweepModel | None = None


class RegionSeries(BaseModel):
    label: str
    vertices: dict[str, tuple[float, float]]  # name -> (R2, R1)
    r1_slope: float
    r2_slope: float
    strictly_convex: bool
    degenerate: bool
    area: float


class RateRegionResponse(BaseModel):
    series: list[RegionSeries]
    csv: str
    meta: dict


class ConvexityRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    sweep: SweepModel | None = None


class ConvexityResponse(BaseModel):
    rows: list[dict]
    csv: str
    meta: dict


class ThresholdRequest(BaseModel):
    lambdas: list[float] = Field(min_length=1)

    @field_validator("lambdas")
    @classmethod
    def _positive(cls, values):
        if not all(v > 0 and math.isfinite(v) for v in values):
            raise ValueError("lambda values must be positive and finite")
        return values


class ThresholdResponse(BaseModel):
    rows: list[dict]
    csv: str
    meta: dict


class ErrorRatesRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    mode: Literal["SER_SYNC", "SER_ASYNC", "BER_SYNC", "BER_ASYNC"]
    sweep: SweepModel
    trials: int = Field(default=200_000, ge=1)
    seed: int = 1


class ErrorRatesResponse(BaseModel):
    rows: list[dict]
    csv: str
    meta: dict


class FigureRequest(BaseModel):
    id: str
    seed: int = 1
    trials: int | None = Field(default=None, ge=1)


class FigureResponse(BaseModel):
    files: dict[str, str]
    meta: dict


class MiRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    samples: int = Field(default=1_000_000, ge=10_000)
    seed: int = 1


class MiResponse(BaseModel):
    rows: list[dict]
    csv: str
    meta: dict


# ---------------------------------------------------------------------------
# CSV rendering
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".12g")
    if value is None:
        return ""
    return str(value)


def render_csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _meta(request: BaseModel, **extra) -> dict:
    meta = {"version": __version__, "request": request.model_dump(mode="json")}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# Sweep helpers
# ---------------------------------------------------------------------------

def _apply_sweep_value(base: ConfigModel, variable: str, value: float) -> ConfigModel:
    doc = base.model_dump()
    if variable == "SNR_DB":
        doc["snr_db"] = value
    elif variable == "G_MAG2":
        doc["g_mag2"] = value
    elif variable == "THETA":
        doc["theta"] = value
    elif variable == "ALPHA":
        doc["alpha"] = value
    elif variable == "N":
        if value != int(value):
            raise ConfigError(f"N sweep values must be integers, got {value}")
        doc["n"] = int(value)
    else:
        raise ConfigError(f"unknown sweep variable {variable!r}")
    return ConfigModel(**doc)


def _sweep_points(config: ConfigModel, sweep: SweepModel | None,
                  default_label: str = "base"):
    if sweep is None:
        yield default_label, config
        return
    for value in sweep.values:
        yield f"{sweep.variable}={_fmt(float(value))}", _apply_sweep_value(
            config, sweep.variable, value
        )


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

_VERTEX_ORDER = ("o", "B1", "C", "D")


def handle_rate_region(request: RateRegionRequest) -> RateRegionResponse:
    series = []
    rows = []
    for label, cfg_model in _sweep_points(request.config, request.sweep):
        config, _ = cfg_model.to_system()
        vertices = region_vertices(config)
        slopes = convexity_slopes(config)
        named = {
            "o": vertices.o, "A1": vertices.A1, "B1": vertices.B1,
            "A2": vertices.A2, "B2": vertices.B2, "C": vertices.C,
            "D": vertices.D,
        }
        series.append(RegionSeries(
            label=label,
            vertices={k: (v.r2, v.r1) for k, v in named.items()},
            r1_slope=slopes.r1_slope,
            r2_slope=slopes.r2_slope,
            strictly_convex=slopes.strictly_convex,
            degenerate=vertices.degenerate,
            area=region_area(vertices),
        ))
        for name in _VERTEX_ORDER:
            point = named[name]
            rows.append([f"{label}:{name}", point.r2, point.r1])
    csv = render_csv(["label", "R2", "R1"], rows)
    return RateRegionResponse(series=series, csv=csv, meta=_meta(request))


def handle_convexity(request: ConvexityRequest) -> ConvexityResponse:
    rows = []
    for label, cfg_model in _sweep_points(request.config, request.sweep):
        config, _ = cfg_model.to_system()
        slopes = convexity_slopes(config)
        rows.append({
            "label": label,
            "r1_slope": slopes.r1_slope,
            "r2_slope": slopes.r2_slope,
            "strictly_convex": slopes.strictly_convex,
        })
    csv = render_csv(
        ["label", "r1_slope", "r2_slope", "strictly_convex"],
        [[r["label"], r["r1_slope"], r["r2_slope"], r["strictly_convex"]] for r in rows],
    )
    return ConvexityResponse(rows=rows, csv=csv, meta=_meta(request))


def handle_threshold(request: ThresholdRequest) -> ThresholdResponse:
    rows = []
    for lam in request.lambdas:
        bis = detection_threshold(lam, method=ThresholdMethod.BISECTION).threshold
        rows.append({
            "lambda": lam,
            "lambda_bisect": bis,
            "lambda_asymptotic": lam / 4.0,
        })
    csv = render_csv(
        ["lambda", "lambda_bisect", "lambda_asymptotic"],
        [[r["lambda"], r["lambda_bisect"], r["lambda_asymptotic"]] for r in rows],
    )
    return ThresholdResponse(rows=rows, csv=csv, meta=_meta(request))


def _error_rate_row(mode: str, config: SystemConfig, alpha: float,
                    trials: int, seed: int):
    """(analytic, lower, upper, mc_rate, mc_ci); analytic NaN for BER modes."""
    if mode == "SER_SYNC":
        analytic = ser_x1_sync(config)
        bounds = ser_x1_bounds_sync(config)
        mc = run_ser_x1(config, 0.0, trials, seed)
    elif mode == "SER_ASYNC":
        analytic = ser_x1_async(config, alpha)
        bounds = ser_x1_async_asymptotic_bounds(config)
        mc = run_ser_x1(config, alpha, trials, seed)
    elif mode == "BER_SYNC":
        analytic = math.nan
        bounds = ber_x2_bounds_sync(config)
        mc = run_ber_x2(config, 0.0, TagStrategy.FULL, trials, seed)
    elif mode == "BER_ASYNC":
        analytic = math.nan
        bounds = ber_x2_bounds_async(config, alpha)
        mc = run_ber_x2(config, alpha, TagStrategy.FULL, trials, seed)
    else:
        raise ConfigError(f"unknown error-rate mode {mode!r}")
    return analytic, bounds.lower, bounds.upper, mc.rate, mc.ci_halfwidth_95


def handle_error_rates(request: ErrorRatesRequest) -> ErrorRatesResponse:
    rows = []
    for value in request.sweep.values:
        cfg_model = _apply_sweep_value(request.config, request.sweep.variable, value)
        config, alpha = cfg_model.to_system()
        analytic, lo, hi, mc, ci = _error_rate_row(
            request.mode, config, alpha, request.trials, request.seed
        )
        rows.append({
            "x": float(value),
            "analytic": analytic,
            "lower_bound": lo,
            "upper_bound": hi,
            "mc_rate": mc,
            "mc_ci": ci,
        })
    csv = render_csv(
        ["x", "analytic", "lower_bound", "upper_bound", "mc_rate", "mc_ci"],
        [[r["x"], r["analytic"], r["lower_bound"], r["upper_bound"],
          r["mc_rate"], r["mc_ci"]] for r in rows],
    )
    return ErrorRatesResponse(rows=rows, csv=csv, meta=_meta(request))


def handle_mi(request: MiRequest) -> MiResponse:
    config, _ = request.config.to_system()
    sum_mc, tag_mc = run_mi_estimates(config, request.samples, request.seed)
    rows = [
        {"quantity": "sum_rate_exact", "value": sum_rate_exact(config)},
        {"quantity": "sum_rate_lower_bound", "value": sum_rate_lower_bound(config)},
        {"quantity": "sum_rate_mc", "value": sum_mc},
        {"quantity": "tag_rate_exact", "value": rate_tag_given_tx(config)},
        {"quantity": "tag_rate_lower_bound", "value": rate_tag_lower_bound(config)},
        {"quantity": "tag_rate_upper_bound", "value": rate_tag_upper_bound(config)},
        {"quantity": "tag_rate_mc", "value": tag_mc},
    ]
    csv = render_csv(["quantity", "value"],
                     [[r["quantity"], r["value"]] for r in rows])
    return MiResponse(rows=rows, csv=csv, meta=_meta(request))


# ---------------------------------------------------------------------------
# Canned figure bundles
# ---------------------------------------------------------------------------

def _figure_defaults() -> ConfigModel:
    # BPSK tag, Gaussian Tx, the rate-study operating point
    return ConfigModel(
        snr_db=10.0, rho=0.5, g_mag2=0.1, theta=math.pi / 4, n=1,
        tag=TagModel(c1=(1.0, 0.0), c0=(-1.0, 0.0)), tx_modulation="GAUSSIAN",
    )


def _detection_defaults(g2_rho: float, n: int) -> ConfigModel:
    # on/off tag, QPSK Tx, uniform phase; rho folded into g_mag2
    return ConfigModel(
        snr_db=10.0, rho=1.0, g_mag2=g2_rho, theta="uniform", n=n,
        tag=TagModel(c1=(1.0, 0.0), c0=(0.0, 0.0)), tx_modulation="QPSK",
    )


def _figure_files(request: FigureRequest) -> dict[str, str]:
    fid = request.id
    seed = request.seed
    trials = request.trials or 200_000
    snr_grid = [0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0]
    alpha_grid = [round(0.05 * k, 2) for k in range(11)]
    if fid == "fig4":
        resp = handle_rate_region(RateRegionRequest(
            config=_figure_defaults(),
            sweep=SweepModel(variable="G_MAG2", values=[0.01, 0.1, 1.0]),
        ))
        return {"fig4.csv": resp.csv}
    if fid == "fig5":
        files = {}
        for label, g2_rho, n in (("n2_g0.1", 0.1, 2), ("n4_g0.1", 0.1, 4),
                                 ("n4_g0.05", 0.05, 4)):
            resp = handle_error_rates(ErrorRatesRequest(
                config=_detection_defaults(g2_rho, n),
                mode="BER_SYNC",
                sweep=SweepModel(variable="SNR_DB", values=snr_grid),
                trials=trials, seed=seed,
            ))
            files[f"fig5_{label}.csv"] = resp.csv
        return files
    if fid == "fig6":
        resp = handle_threshold(ThresholdRequest(
            lambdas=[0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
        ))
        return {"fig6.csv": resp.csv}
    if fid == "fig7":
        lams = [10.0 * 10 ** (k / 6.0) for k in range(13)]  # 10 .. 1000
        resp = handle_threshold(ThresholdRequest(lambdas=lams))
        rows = [[r["lambda"], r["lambda_bisect"], r["lambda_asymptotic"],
                 r["lambda_bisect"] / r["lambda_asymptotic"]] for r in resp.rows]
        return {"fig7.csv": render_csv(
            ["lambda", "lambda_bisect", "lambda_asymptotic", "ratio"], rows
        )}
    if fid == "fig8":
        files = {}
        for label, g2_rho in (("g0.1", 0.1), ("g0.01", 0.01)):
            resp = handle_error_rates(ErrorRatesRequest(
                config=_detection_defaults(g2_rho, 1),
                mode="SER_SYNC",
                sweep=SweepModel(variable="SNR_DB", values=snr_grid),
                trials=trials, seed=seed,
            ))
            files[f"fig8_{label}.csv"] = resp.csv
        return files
    if fid == "fig9":
        files = {}
        for n in (2, 6):
            resp = handle_error_rates(ErrorRatesRequest(
                config=_detection_defaults(0.1, n),
                mode="SER_ASYNC",
                sweep=SweepModel(variable="ALPHA", values=alpha_grid),
                trials=trials, seed=seed,
            ))
            files[f"fig9_n{n}.csv"] = resp.csv
        return files
    if fid == "fig10":
        files = {}
        for n in (2, 3):
            cfg = _detection_defaults(0.1, n)
            cfg = ConfigModel(**{**cfg.model_dump(), "snr_db": 20.0})
            resp = handle_error_rates(ErrorRatesRequest(
                config=cfg,
                mode="BER_ASYNC",
                sweep=SweepModel(variable="ALPHA", values=alpha_grid),
                trials=trials, seed=seed,
            ))
            files[f"fig10_n{n}.csv"] = resp.csv
        return files
    if fid == "fig11":
        resp = handle_rate_region(RateRegionRequest(
            config=_figure_defaults(),
            sweep=SweepModel(variable="SNR_DB", values=[0.0, 10.0, 20.0, 30.0]),
        ))
        return {"fig11.csv": resp.csv}
    raise ConfigError(f"unknown figure id {fid!r}; known: {', '.join(FIGURE_IDS)}")


def handle_figure(request: FigureRequest) -> FigureResponse:
    files = _figure_files(request)
    return FigureResponse(files=files, meta=_meta(request))


# ---------------------------------------------------------------------------
# FastAPI wiring
# ---------------------------------------------------------------------------

app = FastAPI(title="mmac", version=__version__)


def _wrap(handler, request):
    try:
        return handler(request)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except (NumericalError, QuadratureError, ConvergenceError) as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/rate-region", response_model=RateRegionResponse)
def rate_region_endpoint(request: RateRegionRequest) -> RateRegionResponse:
    return _wrap(handle_rate_region, request)


@app.post("/convexity", response_model=ConvexityResponse)
def convexity_endpoint(request: ConvexityRequest) -> ConvexityResponse:
    return _wrap(handle_convexity, request)


@app.post("/threshold", response_model=ThresholdResponse)
def threshold_endpoint(request: ThresholdRequest) -> ThresholdResponse:
    return _wrap(handle_threshold, request)


@app.post("/error-rates", response_model=ErrorRatesResponse)
def error_rates_endpoint(request: ErrorRatesRequest) -> ErrorRatesResponse:
    return _wrap(handle_error_rates, request)


@app.post("/figure", response_model=FigureResponse)
def figure_endpoint(request: FigureRequest) -> FigureResponse:
    return _wrap(handle_figure, request)


@app.post("/mi", response_model=MiResponse)
def mi_endpoint(request: MiRequest) -> MiResponse:
    return _wrap(handle_mi, request)
