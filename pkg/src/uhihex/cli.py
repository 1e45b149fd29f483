"""Command-line entry point.

Usage::

    uhihex --config cfg.json                 # full pipeline
    uhihex --config cfg.json --stage fit     # one stage, config-derived paths
    uhihex fit --features hex/d480/features.csv --out fits/
    uhihex demo --out demo/

Exit codes: 0 success, 2 config error, 3 ingestion error, 4 numeric
failure, 5 service failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .demo import generate_demo
from .errors import ConfigError, UHIError
from .features import INDEPENDENT_VARIABLES
from .indices import RadiometricConstants
from .models import MODEL_KINDS

logger = logging.getLogger("uhihex")


def _add_common(p):
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhihex", description="Urban heat island hexagon analysis")
    parser.add_argument("--config", type=Path, help="pipeline config JSON")
    parser.add_argument("--stage", choices=pipeline.STAGES, help="run only this stage of the configured pipeline")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--jobs", type=int, help="worker processes for model fitting")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("indices", help="compute LST, NDVI, NDWI grids")
    for band in pipeline.BAND_KEYS:
        p.add_argument(f"--{band}", type=Path, required=True)
    p.add_argument("--m-l", type=float, required=True)
    p.add_argument("--a-l", type=float, required=True)
    p.add_argument("--k1", type=float, required=True)
    p.add_argument("--k2", type=float, required=True)
    p.add_argument("--wavelength", type=float)
    p.add_argument("--ndvi-range", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("geocode", help="fill in missing building coordinates")
    p.add_argument("--buildings", type=Path, required=True)
    p.add_argument("--base-url")
    p.add_argument("--rate-limit", type=float, default=1.0)
    p.add_argument("--max-concurrency", type=int, default=1)
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("grid", help="build hexagon grid definitions")
    p.add_argument("--reference", type=Path, required=True, help="raster whose extent the grids cover")
    p.add_argument("--diameters", type=float, nargs="+", default=list(pipeline.DEFAULT_DIAMETERS))
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("aggregate", help="aggregate rasters and buildings onto grids")
    p.add_argument("--grids", type=Path, nargs="+", required=True)
    p.add_argument("--lst", type=Path, required=True)
    p.add_argument("--ndvi", type=Path, required=True)
    p.add_argument("--ndwi", type=Path, required=True)
    p.add_argument("--population", type=Path, required=True)
    p.add_argument("--buildings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("fit", help="fit models on feature tables")
    p.add_argument("--features", type=Path, nargs="+", required=True)
    p.add_argument("--diameters", type=float, nargs="+", help="default: parsed from d<D> directory names")
    p.add_argument("--models", nargs="+", choices=MODEL_KINDS, default=list(MODEL_KINDS))
    p.add_argument("--variables", nargs="+", choices=INDEPENDENT_VARIABLES, default=list(INDEPENDENT_VARIABLES))
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("report", help="combine fit documents into the selection report")
    p.add_argument("fits", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("demo", help="write the synthetic demo dataset and config")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--buildings", type=int, default=2000)
    _add_common(p)
    return parser


def _run(args) -> int:
    cmd = args.command
    if cmd is None:
        if args.config is None:
            raise ConfigError("either --config or a subcommand is required")
        config = pipeline.PipelineConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.stage:
            pipeline.run_stage(args.stage, config, args.jobs)
        else:
            report = pipeline.run_pipeline(config, args.jobs)
            d, kind = report.chosen
            print(f"chosen model: {d:g}m {kind}")
        return 0
    if cmd == "indices":
        extra = {"wavelength": args.wavelength} if args.wavelength else {}
        constants = RadiometricConstants(m_l=args.m_l, a_l=args.a_l, k1=args.k1, k2=args.k2, **extra)
        bands = {b: getattr(args, b) for b in pipeline.BAND_KEYS}
        pipeline.stage_indices(bands, constants, args.out, tuple(args.ndvi_range) if args.ndvi_range else None)
    elif cmd == "geocode":
        cfg = None
        if args.base_url:
            cfg = {
                "base_url": args.base_url,
                "rate_limit": args.rate_limit,
                "max_concurrency": args.max_concurrency,
                "cache_dir": str(args.cache_dir) if args.cache_dir else None,
            }
        pipeline.stage_geocode(args.buildings, args.out, cfg)
    elif cmd == "grid":
        pipeline.stage_grid(args.reference, args.diameters, args.out)
    elif cmd == "aggregate":
        pipeline.stage_aggregate(args.grids, args.lst, args.ndvi, args.ndwi, args.population, args.buildings, args.out)
    elif cmd == "fit":
        if args.diameters and len(args.diameters) != len(args.features):
            raise ConfigError("--diameters must match --features one to one")
        pipeline.stage_fit(args.features, args.out, args.models, args.variables, args.diameters, args.jobs or 1)
    elif cmd == "report":
        report = pipeline.stage_report(args.fits, args.out)
        print(f"chosen model: {report.chosen[0]:g}m {report.chosen[1]}")
    elif cmd == "demo":
        path = generate_demo(args.out, seed=args.seed or 0, size=args.size, n_buildings=args.buildings)
        print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except UHIError as exc:
        print(f"uhihex: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        # unreadable or malformed inputs outside the toolkit's own checks
        print(f"uhihex: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
