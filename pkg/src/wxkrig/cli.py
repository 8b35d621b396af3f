"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 load error, 3 network error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys

from . import __version__
from .covariance import WEIGHTINGS
from .config import DRY_MODES, load_config, resolve
from .elevation import DEFAULT_ENDPOINT, ElevationCache, fetch_elevations
from .errors import ElevationServiceError, LoadError, PanelStructureError
from .evaluation import (
    DAILY,
    DIRECT,
    TWO_STAGE,
    EvaluationReport,
    distribution_report,
    evaluate,
    kfold_split,
)
from .geo import METRICS, validate_panel
from .indexes import POLICIES
from .interpolate import METHODS, FieldSnapshot, predict_point
from .io import (
    emit_report,
    load_dataset,
    load_stations,
    write_moments,
    write_predictions,
    write_stations,
)

logger = logging.getLogger("wxkrig")

EXIT_OK, EXIT_INVALID, EXIT_LOAD, EXIT_NETWORK = 0, 1, 2, 3


def _csv_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _common(p, data=True):
    p.add_argument("--config", help="key=value configuration file")
    if data:
        p.add_argument("--stations", help="stations CSV")
        p.add_argument("--observations", help="observations CSV (long format)")
    p.add_argument("--distance", choices=METRICS, default=None)
    p.add_argument("--log-level", default="WARNING")


def _method_opts(p):
    p.add_argument("--methods", type=_csv_list, default=None,
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--k", type=int, default=None, help="number of folds (10)")
    p.add_argument("--seed", type=int, default=None, help="fold seed (42)")
    p.add_argument("--p", type=float, default=None, help="IDW power (2)")
    p.add_argument("--n-max", dest="n_max", type=int, default=None,
                   help="IDW neighbour cap (20)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="Box-Cox lambda for TGK (1/3)")
    p.add_argument("--fit-nugget", dest="fit_nugget", action="store_const", const=True,
                   default=None)
    p.add_argument("--weighting", choices=WEIGHTINGS, default=None,
                   help="variogram fit weights: empirical N/gamma_hat^2 or model N/gamma^2")
    p.add_argument("--pooling", choices=("mean", "pooled"), default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--format", choices=("csv", "markdown", "plot-data"), default=None)


def _index_opts(p):
    p.add_argument("--dry-threshold", dest="dry_threshold", choices=DRY_MODES, default=None)
    p.add_argument("--policy", choices=POLICIES, default=None,
                   help="missing-day policy for index computation")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wxkrig",
        description="Spatial interpolation of daily precipitation and precipitation indexes.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load and validate a dataset")
    _common(p)

    p = sub.add_parser("interpolate", help="predict one target on one date")
    _common(p)
    p.add_argument("--date", required=True, type=dt.date.fromisoformat)
    p.add_argument("--lat", required=True, type=float)
    p.add_argument("--lon", required=True, type=float)
    p.add_argument("--elev", type=float, default=None, help="target elevation (UK)")
    p.add_argument("--target-id", default="target")
    p.add_argument("--method", default="IDW", type=str.upper, choices=METHODS)
    p.add_argument("--variable", default="P", choices=("P", "T"))
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    p = sub.add_parser("cv-daily", help="cross-validate methods on daily precipitation")
    _common(p)
    _method_opts(p)

    p = sub.add_parser("cv-index", help="cross-validate index interpolation")
    _common(p)
    _method_opts(p)
    _index_opts(p)
    p.add_argument("--approach", choices=(DIRECT, TWO_STAGE, "both"), default=None)
    p.add_argument("--index", dest="indexes", type=_csv_list, default=None,
                   help="MFP, CDD or MFP,CDD")

    p = sub.add_parser("moments", help="average sample skewness and kurtosis")
    _common(p)
    _index_opts(p)
    p.add_argument("--variables", type=_csv_list,
                   default=("P", "cbrt_P", "T", "MFP", "cbrt_MFP", "CDD", "cbrt_CDD"))
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "markdown"), default=None)

    p = sub.add_parser("fetch-elev", help="fill station elevations from EPQS")
    _common(p, data=False)
    p.add_argument("--stations", help="stations CSV")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--elevation-cache", dest="elevation_cache", default=None)
    p.add_argument("--offline", action="store_const", const=True, default=None)
    p.add_argument("--output", required=True, help="stations CSV to write")
    return parser


_CONFIG_KEYS = ("stations", "observations", "methods", "indexes", "approach", "k", "seed",
                "p", "n_max", "lam", "dry_threshold", "distance", "policy", "pooling",
                "fit_nugget", "weighting", "out", "format", "elevation_cache", "endpoint", "offline")


def _config(args):
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
    return resolve(flags, file_values)


def _load(cfg, reject_negative=True):
    if not (cfg.stations and cfg.observations):
        raise LoadError("--stations and --observations are required")
    return load_dataset(cfg.stations, cfg.observations, reject_negative)


def cmd_validate(args, cfg):
    panel = _load(cfg, reject_negative=False)
    report = validate_panel(panel)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_interpolate(args, cfg):
    panel = _load(cfg)
    if args.date not in panel.dates:
        raise LoadError(f"no observations on {args.date.isoformat()}")
    j = panel.dates.index(args.date)
    data = panel.precip if args.variable == "P" else panel.tmax
    if data is None:
        raise LoadError("panel has no temperature data")
    snap = FieldSnapshot(panel.stations, data[:, j], args.date.isoformat())
    value, variance, fell_back = predict_point(
        args.method, snap, (args.lat, args.lon), cfg.interp_options(), args.elev
    )
    write_predictions([(args.date.isoformat(), args.target_id, args.method, value,
                        variance, fell_back)], sys.stdout)
    return EXIT_OK


def _emit(report: EvaluationReport, cfg, basename):
    path = emit_report(report, cfg.out, cfg.format, basename)
    print(path)


def cmd_cv_daily(args, cfg):
    panel = _load(cfg)
    folds = kfold_split(panel.station_ids, cfg.k, cfg.seed)
    report = evaluate(panel, cfg.methods, (DAILY,), folds=folds,
                      opts=cfg.eval_options(cfg.format == "plot-data"))
    _emit(report, cfg, "cv_daily")
    return EXIT_OK


def cmd_cv_index(args, cfg):
    panel = _load(cfg)
    folds = kfold_split(panel.station_ids, cfg.k, cfg.seed)
    approaches = (DIRECT, TWO_STAGE) if cfg.approach == "both" else (cfg.approach,)
    report = evaluate(panel, cfg.methods, approaches, cfg.indexes, folds=folds,
                      opts=cfg.eval_options(cfg.format == "plot-data"))
    _emit(report, cfg, "cv_index_" + "_".join(approaches))
    return EXIT_OK


def cmd_moments(args, cfg):
    panel = _load(cfg)
    rows = distribution_report(panel, args.variables, cfg.eval_options())
    fmt = cfg.format if cfg.format in ("csv", "markdown") else "csv"
    print(write_moments(rows, cfg.out, fmt))
    return EXIT_OK


def cmd_fetch_elev(args, cfg):
    if not cfg.stations:
        raise LoadError("--stations is required")
    stations = load_stations(cfg.stations)
    cache = ElevationCache(cfg.elevation_cache)
    filled = fetch_elevations(stations, cfg.endpoint or DEFAULT_ENDPOINT, cache,
                              offline=cfg.offline)
    write_stations(filled, args.output)
    print(args.output)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "interpolate": cmd_interpolate,
    "cv-daily": cmd_cv_daily,
    "cv-index": cmd_cv_index,
    "moments": cmd_moments,
    "fetch-elev": cmd_fetch_elev,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (LoadError, PanelStructureError, FileNotFoundError) as exc:
        print(f"load error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except ElevationServiceError as exc:
        print(f"elevation error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD


if __name__ == "__main__":
    sys.exit(main())
