"""Command-line front end; a thin client of the service layer.

Each subcommand builds a request model, obtains the response either
in-process (default) or from a running server (--server URL), and writes
the returned CSV plus a JSON metadata sidecar.  Nothing is written on
failure.  Exit codes: 0 success, 2 usage or config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .analytics import NumericalError
from .model import ConfigError, load_config
from .numerics import ConvergenceError, QuadratureError
from .service import (
    ConfigModel,
    ConvexityRequest,
    ErrorRatesRequest,
    FigureRequest,
    MiRequest,
    RateRegionRequest,
    SweepModel,
    TagModel,
    ThresholdRequest,
    handle_convexity,
    handle_error_rates,
    handle_figure,
    handle_mi,
    handle_rate_region,
    handle_threshold,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_ENDPOINTS = {
    "rate-region": (RateRegionRequest, handle_rate_region, "/rate-region"),
    "convexity": (ConvexityRequest, handle_convexity, "/convexity"),
    "threshold": (ThresholdRequest, handle_threshold, "/threshold"),
    "error-rates": (ErrorRatesRequest, handle_error_rates, "/error-rates"),
    "figure": (FigureRequest, handle_figure, "/figure"),
    "mi": (MiRequest, handle_mi, "/mi"),
}


def _config_model(path: str | None) -> ConfigModel:
    if path is None:
        return ConfigModel()
    config, alpha = load_config(path)  # validates schema and ranges
    phase = "uniform" if config.channel.is_random_phase else config.channel.fixed_phase
    return ConfigModel(
        snr_db=config.snr_db,
        rho=config.rho,
        g_mag2=config.g_mag2,
        theta=phase,
        n=config.n,
        alpha=alpha,
        tag=TagModel(
            c1=(config.tag.c1.real, config.tag.c1.imag),
            c0=(config.tag.c0.real, config.tag.c0.imag),
        ),
        tx_modulation=config.tx_modulation.value,
    )


def _parse_sweep(text: str | None) -> SweepModel | None:
    if text is None:
        return None
    var, _, values = text.partition("=")
    if not values:
        raise ConfigError(f"sweep must look like VAR=v1,v2,..., got {text!r}")
    try:
        parsed = [float(v) for v in values.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values in {text!r}: {exc}") from exc
    try:
        return SweepModel(variable=var.strip().upper(), values=parsed)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _dispatch(command: str, request, server: str | None):
    req_cls, handler, path = _ENDPOINTS[command]
    assert isinstance(request, req_cls)
    if server is None:
        return handler(request)
    # remote mode: same request model over HTTP
    import httpx

    response = httpx.post(
        server.rstrip("/") + path,
        json=request.model_dump(mode="json"),
        timeout=None,
    )
    if response.status_code == 422:
        raise ConfigError(response.text)
    if response.status_code != 200:
        raise NumericalError(f"server error {response.status_code}: {response.text}")
    return _response_from_json(command, response.json())


def _response_from_json(command: str, payload: dict):
    from . import service

    model = {
        "rate-region": service.RateRegionResponse,
        "convexity": service.ConvexityResponse,
        "threshold": service.ThresholdResponse,
        "error-rates": service.ErrorRatesResponse,
        "figure": service.FigureResponse,
        "mi": service.MiResponse,
    }[command]
    return model(**payload)


def _write_outputs(out: Path, csv_text: str, meta: dict) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _cmd_rate_region(args) -> int:
    request = RateRegionRequest(
        config=_config_model(args.config), sweep=_parse_sweep(args.sweep)
    )
    resp = _dispatch("rate-region", request, args.server)
    meta = dict(resp.meta)
    meta["series"] = [s.model_dump() for s in resp.series]
    _write_outputs(Path(args.out), resp.csv, meta)
    return EXIT_OK


def _cmd_convexity(args) -> int:
    request = ConvexityRequest(
        config=_config_model(args.config), sweep=_parse_sweep(args.sweep)
    )
    resp = _dispatch("convexity", request, args.server)
    _write_outputs(Path(args.out), resp.csv, resp.meta)
    return EXIT_OK


def _cmd_threshold(args) -> int:
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"bad lambda list {args.lambdas!r}") from exc
    request = ThresholdRequest(lambdas=lambdas)
    resp = _dispatch("threshold", request, args.server)
    _write_outputs(Path(args.out), resp.csv, resp.meta)
    return EXIT_OK


def _cmd_error_rates(args) -> int:
    sweep = _parse_sweep(args.sweep)
    if sweep is None:
        raise ConfigError("error-rates requires --sweep VAR=v1,v2,...")
    request = ErrorRatesRequest(
        config=_config_model(args.config),
        mode=args.mode,
        sweep=sweep,
        trials=args.trials,
        seed=args.seed,
    )
    resp = _dispatch("error-rates", request, args.server)
    _write_outputs(Path(args.out), resp.csv, resp.meta)
    return EXIT_OK


def _cmd_figure(args) -> int:
    request = FigureRequest(id=args.id, seed=args.seed, trials=args.trials)
    resp = _dispatch("figure", request, args.server)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(resp.files):
        (out_dir / name).write_text(resp.files[name])
    (out_dir / f"{args.id}.json").write_text(
        json.dumps(resp.meta, indent=2, sort_keys=True) + "\n"
    )
    return EXIT_OK


def _cmd_mi(args) -> int:
    request = MiRequest(
        config=_config_model(args.config), samples=args.samples, seed=args.seed
    )
    resp = _dispatch("mi", request, args.server)
    _write_outputs(Path(args.out), resp.csv, resp.meta)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmac",
        description="Achievable rates and detection error rates for "
                    "multiplicative multiple-access (ambient backscatter) links.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--server", default=None, metavar="URL",
        help="send the request to a running service instead of computing in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True, sweep=True):
        if config:
            p.add_argument("--config", metavar="PATH", default=None,
                           help="JSON config file (defaults used when omitted)")
        if sweep:
            p.add_argument("--sweep", metavar="VAR=v1,v2,...", default=None,
                           help="sweep variable: SNR_DB, G_MAG2, THETA, ALPHA or N")
        p.add_argument("--out", metavar="PATH", required=True,
                       help="output CSV path (figure: output directory)")

    p = sub.add_parser("rate-region", help="achievable-region polygons")
    add_common(p)
    p.set_defaults(func=_cmd_rate_region)

    p = sub.add_parser("convexity", help="boundary slopes and the convexity test")
    add_common(p)
    p.set_defaults(func=_cmd_convexity)

    p = sub.add_parser("threshold", help="energy-detection thresholds")
    p.add_argument("--lambdas", metavar="v1,v2,...", required=True,
                   help="equivalent detection SNR values")
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("error-rates", help="analytic/bound/Monte-Carlo error rates")
    add_common(p)
    p.add_argument("--mode", required=True,
                   choices=["SER_SYNC", "SER_ASYNC", "BER_SYNC", "BER_ASYNC"])
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_error_rates)

    p = sub.add_parser("figure", help="canned sweep bundles fig4..fig11")
    p.add_argument("--id", required=True, help="one of fig4..fig11")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", metavar="DIR", required=True)
    p.set_defaults(func=_cmd_figure)

    p = sub.add_parser("mi", help="mutual-information quantities, exact vs Monte Carlo")
    p.add_argument("--config", metavar="PATH", default=None)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=_cmd_mi)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"mmac: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, QuadratureError, ConvergenceError) as exc:
        print(f"mmac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
