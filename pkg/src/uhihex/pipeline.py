"""End-to-end pipeline: indices, hex grids, aggregation, fits, report.

Each stage reads and writes files so it can be run on its own. Running the
stages in order against one output directory produces exactly what
:func:`run_pipeline` produces.

Output layout::

    indices/{lst,ndvi,ndwi}.asc
    buildings/geocoded.csv, buildings/rejected.csv
    grids/d<D>.json
    hex/d<D>/features.csv, hex/d<D>/hexes.geojson
    fits/d<D>/{ols,sar,sem}.json, fits/d<D>/weights.csv
    report/report.{csv,json,txt}
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .diagnostics import SelectionReport, build_selection_report, diagnose
from .errors import ConfigError, IngestionError, UHIError
from .features import (
    INDEPENDENT_VARIABLES,
    FeatureTable,
    assemble_feature_table,
    building_sums,
    dump_buildings,
    load_buildings,
)
from .geocode import GeocodeClient, geocode
from .hexgrid import (
    DEFAULT_DIAMETERS,
    aggregate_rasters,
    build_hexgrid,
    dump_grid,
    grid_from_dict,
    hexes_to_geojson,
)
from .indices import (
    RadiometricConstants,
    brightness_temperature,
    emissivity,
    land_surface_temperature,
    ndvi,
    ndwi,
    toa_radiance,
    vegetation_proportion,
)
from .models import MODEL_KINDS, DesignMatrix, ModelFit, fit_model, fit_ols
from .raster import load_raster, save_raster
from .weights import build_weights

logger = logging.getLogger(__name__)

STAGES = ("indices", "geocode", "grid", "aggregate", "fit", "report")
BAND_KEYS = ("red", "nir", "green", "swir", "thermal")
INPUT_KEYS = BAND_KEYS + ("population", "buildings")
INCOMPLETE_MARKER = "_INCOMPLETE"


@dataclass
class PipelineConfig:
    inputs: Dict[str, Path]
    radiometric: RadiometricConstants
    output_dir: Path
    diameters: List[float] = field(default_factory=lambda: list(DEFAULT_DIAMETERS))
    models: List[str] = field(default_factory=lambda: list(MODEL_KINDS))
    variables: List[str] = field(default_factory=lambda: list(INDEPENDENT_VARIABLES))
    ndvi_range: Optional[tuple] = None
    geocode: Optional[dict] = None
    seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path = Path(".")) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - {
            "inputs", "radiometric", "output_dir", "diameters", "models",
            "variables", "ndvi_range", "geocode", "seed", "jobs",
        }
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        inputs = doc.get("inputs") or {}
        missing = [k for k in INPUT_KEYS if not inputs.get(k)]
        if missing:
            raise ConfigError(f"config lacks input path(s): {', '.join(missing)}")
        paths = {k: (base_dir / inputs[k]) for k in INPUT_KEYS}
        absent = [f"{k}={p}" for k, p in paths.items() if not p.is_file()]
        if absent:
            raise ConfigError(f"input file(s) not found: {', '.join(absent)}")
        if "radiometric" not in doc:
            raise ConfigError("config lacks radiometric constants")
        try:
            constants = RadiometricConstants.from_dict(doc["radiometric"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad radiometric constants: {exc}") from None
        diameters = [float(d) for d in doc.get("diameters", DEFAULT_DIAMETERS)]
        if not diameters or any(not d > 0 for d in diameters):
            raise ConfigError("diameters must be a non-empty list of positive numbers")
        if len(set(diameters)) != len(diameters):
            raise ConfigError("diameters must be distinct")
        models = list(doc.get("models", MODEL_KINDS))
        if not models or any(m not in MODEL_KINDS for m in models):
            raise ConfigError(f"models must be drawn from {MODEL_KINDS}")
        variables = list(doc.get("variables", INDEPENDENT_VARIABLES))
        bad = [v for v in variables if v not in INDEPENDENT_VARIABLES]
        if bad or not variables:
            raise ConfigError(f"unknown variable(s): {', '.join(bad) or '(none given)'}")
        ndvi_range = doc.get("ndvi_range")
        if ndvi_range is not None:
            if len(ndvi_range) != 2 or not float(ndvi_range[1]) > float(ndvi_range[0]):
                raise ConfigError("ndvi_range must be [min, max] with max > min")
            ndvi_range = (float(ndvi_range[0]), float(ndvi_range[1]))
        if "output_dir" not in doc:
            raise ConfigError("config lacks output_dir")
        geo = doc.get("geocode")
        if geo is not None and not geo.get("base_url"):
            raise ConfigError("geocode settings need base_url")
        return cls(
            inputs=paths,
            radiometric=constants,
            output_dir=base_dir / doc["output_dir"],
            diameters=diameters,
            models=models,
            variables=variables,
            ndvi_range=ndvi_range,
            geocode=geo,
            seed=int(doc.get("seed", 0)),
            jobs=int(doc.get("jobs", 1)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except ValueError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc, path.parent)


def _atomic_write(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dtag(d: float) -> str:
    return f"d{d:g}"


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# -- stages ------------------------------------------------------------------


def stage_indices(bands: Dict[str, Path], constants: RadiometricConstants, out_dir: Path, ndvi_range=None):
    """Compute LST (Celsius), NDVI and NDWI grids from raw bands."""
    red, nir = load_raster(bands["red"]), load_raster(bands["nir"])
    green, swir = load_raster(bands["green"]), load_raster(bands["swir"])
    thermal = load_raster(bands["thermal"])
    nd = ndvi(red, nir)
    nw = ndwi(green, swir)
    lo, hi = ndvi_range if ndvi_range else (None, None)
    eps = emissivity(vegetation_proportion(nd, lo, hi))
    bt = brightness_temperature(toa_radiance(thermal, constants), constants)
    lst = land_surface_temperature(bt, eps, constants, output_celsius=True)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, grid in (("lst", lst), ("ndvi", nd), ("ndwi", nw)):
        tmp = out_dir / f".{name}.asc.tmp"
        save_raster(grid, tmp)
        os.replace(tmp, out_dir / f"{name}.asc")
    return {"lst": out_dir / "lst.asc", "ndvi": out_dir / "ndvi.asc", "ndwi": out_dir / "ndwi.asc"}


def stage_geocode(buildings_csv: Path, out_dir: Path, geocode_cfg: Optional[dict] = None):
    """Resolve missing building locations; writes ``geocoded.csv`` and ``rejected.csv``.

    The network is touched only when some record lacks coordinates.
    """
    with open(buildings_csv, newline="") as fh:
        records = load_buildings(fh)
    rejected: List[str] = []
    if any(r.needs_geocoding for r in records):
        if not geocode_cfg:
            raise ConfigError("buildings lack coordinates but no geocode service is configured")
        client = GeocodeClient.from_config(geocode_cfg, default_cache=Path(out_dir) / "cache")
        records, rejected = geocode(client, records)
    out_dir = Path(out_dir)
    _atomic_write(out_dir / "geocoded.csv", dump_buildings(records))
    _atomic_write(out_dir / "rejected.csv", "address_key\n" + "".join(_csv_field(k) + "\n" for k in rejected))
    return out_dir / "geocoded.csv"


def _csv_field(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def stage_grid(reference_raster: Path, diameters: Sequence[float], out_dir: Path):
    """Write one hex grid definition per diameter covering the reference raster."""
    bbox = load_raster(reference_raster).bounds
    paths = []
    for d in diameters:
        grid = build_hexgrid(bbox, d)
        path = Path(out_dir) / f"{_dtag(d)}.json"
        _atomic_write(path, dump_grid(grid))
        paths.append(path)
    return paths


def stage_aggregate(grid_paths: Sequence[Path], lst: Path, ndvi_path: Path, ndwi_path: Path,
                    population: Path, buildings_csv: Path, out_dir: Path):
    """Aggregate rasters and buildings onto each grid; write feature tables and GeoJSON."""
    layers = {
        "lst": (load_raster(lst), "mean"),
        "ndvi": (load_raster(ndvi_path), "mean"),
        "ndwi": (load_raster(ndwi_path), "mean"),
        "population": (load_raster(population), "sum"),
    }
    with open(buildings_csv, newline="") as fh:
        buildings = load_buildings(fh)
    outputs = []
    for gp in grid_paths:
        grid = grid_from_dict(json.loads(Path(gp).read_text()))
        aggs = aggregate_rasters(grid, layers)
        table = assemble_feature_table(
            grid, aggs["lst"], aggs["ndvi"], aggs["ndwi"], aggs["population"], building_sums(grid, buildings)
        )
        if len(table) == 0:
            raise IngestionError(f"no hexagon at {grid.diameter:g} m has LST coverage")
        d_dir = Path(out_dir) / _dtag(grid.diameter)
        _atomic_write(d_dir / "features.csv", table.to_csv())
        props = {
            cell: {"lst": float(table["lst"][i]), "ndvi": float(table["ndvi"][i]), "ndwi": float(table["ndwi"][i])}
            for i, cell in enumerate(table.cells)
        }
        _atomic_write(d_dir / "hexes.geojson", _dump_json(hexes_to_geojson(grid, props)))
        outputs.append(d_dir / "features.csv")
    return outputs


def fit_table(table: FeatureTable, diameter: float, models: Sequence[str], variables: Sequence[str]):
    """Fit the requested models on one feature table.

    Returns ``(documents, weights)`` where ``documents`` maps model kind to a
    JSON-ready dict.
    """
    w = build_weights(table.cells)
    if w.dropped:
        table = table.subset(w.cells)
    design, dropped_vars = DesignMatrix.from_table(table, variables, drop_constant=True)
    if dropped_vars:
        logger.warning("%gm: dropping constant regressor(s) %s", diameter, ", ".join(dropped_vars))
    ols = fit_ols(design)
    docs = {}
    for kind in models:
        fit = ols if kind == "OLS" else fit_model(kind, design, w)
        fit.diagnostics = diagnose(fit, ols, design, w)
        docs[kind] = {
            "diameter": float(diameter),
            "variables": design.names,
            "dropped_variables": dropped_vars,
            "dropped_cells": [list(c) for c in w.dropped],
            "cells": [list(c) for c in w.cells],
            "fit": fit.to_dict(),
        }
    return docs, w


def _fit_job(args):
    features_csv, diameter, models, variables = args
    with open(features_csv, newline="") as fh:
        table = FeatureTable.from_csv(fh, diameter)
    docs, w = fit_table(table, diameter, models, variables)
    return {k: _dump_json(v) for k, v in docs.items()}, w.to_triplets_csv()


def _diameter_from_path(path: Path) -> float:
    name = Path(path).parent.name
    if not name.startswith("d"):
        raise ConfigError(f"cannot infer diameter from {path}; expected a d<diameter> directory")
    return float(name[1:])


def stage_fit(features: Sequence[Path], out_dir: Path, models: Sequence[str] = MODEL_KINDS,
              variables: Sequence[str] = INDEPENDENT_VARIABLES, diameters: Optional[Sequence[float]] = None,
              jobs: int = 1):
    """Fit each feature table; writes ``<kind>.json`` and ``weights.csv`` per diameter."""
    if diameters is None:
        diameters = [_diameter_from_path(p) for p in features]
    args = [(Path(p), float(d), list(models), list(variables)) for p, d in zip(features, diameters)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_job, args))
    else:
        results = [_fit_job(a) for a in args]
    written = []
    for (_, d, _, _), (docs, triplets) in zip(args, results):
        d_dir = Path(out_dir) / _dtag(d)
        _atomic_write(d_dir / "weights.csv", triplets)
        for kind, text in docs.items():
            path = d_dir / f"{kind.lower()}.json"
            _atomic_write(path, text)
            written.append(path)
    return written


def load_fit_document(path):
    doc = json.loads(Path(path).read_text())
    return float(doc["diameter"]), ModelFit.from_dict(doc["fit"])


def stage_report(fit_paths: Sequence[Path], out_dir: Path) -> SelectionReport:
    fits = []
    for p in fit_paths:
        d, fit = load_fit_document(p)
        fits.append((d, fit, None))
    order = {k: i for i, k in enumerate(MODEL_KINDS)}
    fits.sort(key=lambda t: (-t[0], order[t[1].kind]))
    report = build_selection_report(fits)
    out_dir = Path(out_dir)
    _atomic_write(out_dir / "report.csv", report.to_csv())
    _atomic_write(out_dir / "report.json", report.to_json())
    _atomic_write(out_dir / "report.txt", report.to_text())
    return report


# -- orchestration -----------------------------------------------------------


class StageFailure(UHIError):
    def __init__(self, stage: str, cause: UHIError):
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"stage '{stage}' failed: {cause}")


def stage_paths(config: PipelineConfig) -> dict:
    out = Path(config.output_dir)
    return {
        "indices": out / "indices",
        "buildings": out / "buildings",
        "grids": out / "grids",
        "hex": out / "hex",
        "fits": out / "fits",
        "report": out / "report",
    }


def run_stage(stage: str, config: PipelineConfig, jobs: Optional[int] = None):
    """Run one stage, reading earlier stage outputs from the output directory."""
    p = stage_paths(config)
    tags = [_dtag(d) for d in config.diameters]
    if stage == "indices":
        return stage_indices({k: config.inputs[k] for k in BAND_KEYS}, config.radiometric, p["indices"], config.ndvi_range)
    if stage == "geocode":
        return stage_geocode(config.inputs["buildings"], p["buildings"], config.geocode)
    if stage == "grid":
        return stage_grid(p["indices"] / "lst.asc", config.diameters, p["grids"])
    if stage == "aggregate":
        return stage_aggregate(
            [p["grids"] / f"{t}.json" for t in tags],
            p["indices"] / "lst.asc",
            p["indices"] / "ndvi.asc",
            p["indices"] / "ndwi.asc",
            config.inputs["population"],
            p["buildings"] / "geocoded.csv",
            p["hex"],
        )
    if stage == "fit":
        return stage_fit(
            [p["hex"] / t / "features.csv" for t in tags],
            p["fits"],
            config.models,
            config.variables,
            config.diameters,
            jobs or config.jobs,
        )
    if stage == "report":
        paths = [p["fits"] / t / f"{k.lower()}.json" for t in tags for k in config.models]
        return stage_report(paths, p["report"])
    raise ConfigError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")


def run_pipeline(config: PipelineConfig, jobs: Optional[int] = None) -> SelectionReport:
    """Run every stage in order.

    A marker file sits in the output directory while the run is in progress
    and stays behind, naming the failed stage, if any stage fails.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE_MARKER
    np.random.seed(config.seed)
    report = None
    for stage in STAGES:
        marker.write_text(f"running {stage}\n")
        logger.info("stage %s", stage)
        try:
            result = run_stage(stage, config, jobs)
        except UHIError as exc:
            marker.write_text(f"failed at {stage}: {exc}\n")
            raise StageFailure(stage, exc) from exc
        except (OSError, ValueError) as exc:
            marker.write_text(f"failed at {stage}: {exc}\n")
            raise StageFailure(stage, IngestionError(str(exc))) from exc
        if stage == "report":
            report = result
    marker.unlink()
    return report
