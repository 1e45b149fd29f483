"""Building records and the per-hexagon feature table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .errors import BuildingFormatError, GeometryMismatchError, IngestionError
from .hexgrid import HexAggregate, HexCellId, HexGrid, aggregate_points
from .raster import GeoPoint

FLAG_COLUMNS = (
    "residential",
    "commercial",
    "market_hawker",
    "multistorey_carpark",
    "precinct_pavilion",
    "miscellaneous",
)
REQUIRED_BUILDING_COLUMNS = ("address_key", "height_storeys", "dwelling_units") + FLAG_COLUMNS
OPTIONAL_BUILDING_COLUMNS = ("x", "y")

BUILDING_VARIABLES = (
    "total_height",
    "total_dwelling_units",
    "total_residential",
    "total_commercial",
    "total_market_hawker",
    "total_multistorey_carpark",
    "total_precinct_pavilion",
    "total_miscellaneous",
)
SURFACE_VARIABLES = ("ndvi", "ndwi", "total_population")
INDEPENDENT_VARIABLES = SURFACE_VARIABLES + BUILDING_VARIABLES
FEATURE_COLUMNS = ("q", "r", "lst") + INDEPENDENT_VARIABLES


@dataclass(frozen=True)
class BuildingRecord:
    address_key: str
    height_storeys: int
    dwelling_units: int
    residential_flag: int = 0
    commercial_flag: int = 0
    market_hawker_flag: int = 0
    multistorey_carpark_flag: int = 0
    precinct_pavilion_flag: int = 0
    miscellaneous_flag: int = 0
    location: Optional[GeoPoint] = None

    def __post_init__(self):
        if self.height_storeys < 0:
            raise ValueError(f"negative height for {self.address_key!r}")
        if self.dwelling_units < 0:
            raise ValueError(f"negative dwelling units for {self.address_key!r}")
        for name in FLAG_COLUMNS:
            if getattr(self, name + "_flag") not in (0, 1):
                raise ValueError(f"{name} flag must be 0 or 1 for {self.address_key!r}")

    @property
    def needs_geocoding(self) -> bool:
        return self.location is None

    def attribute_vector(self) -> Tuple[int, ...]:
        """Values summed per hexagon, in ``BUILDING_VARIABLES`` order."""
        return (self.height_storeys, self.dwelling_units) + tuple(
            getattr(self, name + "_flag") for name in FLAG_COLUMNS
        )


def _parse_int(value, row, column):
    try:
        return int(value.strip())
    except (ValueError, AttributeError):
        raise BuildingFormatError(f"row {row}, column {column!r}: expected an integer, got {value!r}") from None


def load_buildings(source: Union[str, TextIO]) -> List[BuildingRecord]:
    """Parse a building CSV.

    Required columns are ``REQUIRED_BUILDING_COLUMNS``; ``x``/``y`` are
    optional and a blank pair marks the record for geocoding. Row numbers in
    errors count the header as row 1.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_BUILDING_COLUMNS if c not in header]
    if missing:
        raise BuildingFormatError(f"missing required column(s): {', '.join(missing)}")
    has_xy = "x" in header and "y" in header

    records = []
    for rowno, row in enumerate(reader, start=2):
        key = (row["address_key"] or "").strip()
        if not key:
            raise BuildingFormatError(f"row {rowno}: empty address_key")
        height = _parse_int(row["height_storeys"], rowno, "height_storeys")
        if height < 0:
            raise BuildingFormatError(f"row {rowno}, column 'height_storeys': negative height {height}")
        units = _parse_int(row["dwelling_units"], rowno, "dwelling_units")
        if units < 0:
            raise BuildingFormatError(f"row {rowno}, column 'dwelling_units': negative count {units}")
        flags = {}
        for name in FLAG_COLUMNS:
            v = _parse_int(row[name], rowno, name)
            if v not in (0, 1):
                raise BuildingFormatError(f"row {rowno}, column {name!r}: flag must be 0 or 1, got {v}")
            flags[name + "_flag"] = v
        location = None
        if has_xy:
            xs, ys = (row["x"] or "").strip(), (row["y"] or "").strip()
            if xs or ys:
                try:
                    location = GeoPoint(float(xs), float(ys))
                except ValueError:
                    raise BuildingFormatError(f"row {rowno}: non-numeric coordinates ({xs!r}, {ys!r})") from None
                if not (math.isfinite(location.x) and math.isfinite(location.y)):
                    raise BuildingFormatError(f"row {rowno}: non-finite coordinates")
        records.append(BuildingRecord(key, height, units, location=location, **flags))
    return records


def dump_buildings(records: Iterable[BuildingRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REQUIRED_BUILDING_COLUMNS[:1] + ("x", "y") + REQUIRED_BUILDING_COLUMNS[1:])
    for b in records:
        xy = ("", "") if b.location is None else (repr(float(b.location.x)), repr(float(b.location.y)))
        writer.writerow(
            [b.address_key, *xy, b.height_storeys, b.dwelling_units]
            + [getattr(b, name + "_flag") for name in FLAG_COLUMNS]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class FeatureTable:
    """One row per hexagon with LST coverage, sorted by ``(q, r)``."""

    cells: List[HexCellId]
    columns: Dict[str, np.ndarray]
    diameter: Optional[float] = None

    def __post_init__(self):
        n = len(self.cells)
        for name in ("lst",) + INDEPENDENT_VARIABLES:
            if name not in self.columns:
                raise ValueError(f"feature table lacks column {name!r}")
            if len(self.columns[name]) != n:
                raise ValueError(f"column {name!r} has {len(self.columns[name])} rows, expected {n}")
        if list(self.cells) != sorted(self.cells):
            raise ValueError("feature table rows must be sorted by (q, r)")

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    def subset(self, keep: Sequence[HexCellId]) -> "FeatureTable":
        """Rows for ``keep`` (which must be a subset of ``cells``), in sorted order."""
        index = {c: i for i, c in enumerate(self.cells)}
        cells = sorted(keep)
        idx = np.array([index[c] for c in cells], dtype=int)
        return replace(self, cells=cells, columns={k: v[idx] for k, v in self.columns.items()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FEATURE_COLUMNS)
        cols = [self.columns[name] for name in FEATURE_COLUMNS[2:]]
        for i, cell in enumerate(self.cells):
            writer.writerow([cell.q, cell.r] + [repr(float(c[i])) for c in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source: Union[str, TextIO], diameter: Optional[float] = None) -> "FeatureTable":
        if isinstance(source, str):
            source = io.StringIO(source)
        reader = csv.DictReader(source)
        missing = [c for c in FEATURE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestionError(f"feature table missing column(s): {', '.join(missing)}")
        rows = []
        for rowno, row in enumerate(reader, start=2):
            try:
                cell = HexCellId(int(row["q"]), int(row["r"]))
                vals = [float(row[c]) for c in FEATURE_COLUMNS[2:]]
            except (TypeError, ValueError):
                raise IngestionError(f"feature table row {rowno}: malformed value") from None
            rows.append((cell, vals))
        rows.sort(key=lambda t: t[0])
        cells = [c for c, _ in rows]
        if len(set(cells)) != len(cells):
            raise IngestionError("feature table contains duplicate cells")
        data = np.array([v for _, v in rows], dtype=float).reshape(len(rows), len(FEATURE_COLUMNS) - 2)
        columns = {name: data[:, j].copy() for j, name in enumerate(FEATURE_COLUMNS[2:])}
        return cls(cells, columns, diameter)


def _as_mapping(agg) -> Dict[HexCellId, float]:
    if agg is None:
        return {}
    if isinstance(agg, Mapping):
        return {HexCellId(*k): float(v) for k, v in agg.items()}
    out = {}
    for a in agg:
        if not isinstance(a, HexAggregate):
            raise TypeError("aggregates must be HexAggregate items or a cell->value mapping")
        out[a.cell] = a.value
    return out


def building_sums(grid: HexGrid, buildings: Iterable[BuildingRecord]) -> Dict[HexCellId, np.ndarray]:
    """Sum building attribute vectors per hexagon. Ungeocoded records are skipped."""
    pts = [(b.location, b.attribute_vector()) for b in buildings if b.location is not None]
    return {cell: vec for cell, (vec, _) in aggregate_points(grid, pts).items()}


def assemble_feature_table(
    hexgrid: HexGrid,
    lst_agg,
    ndvi_agg,
    ndwi_agg,
    pop_agg=None,
    building_sums: Optional[Mapping[HexCellId, Sequence[float]]] = None,
    grids: Sequence[Optional[HexGrid]] = (),
) -> FeatureTable:
    """Join per-hexagon aggregates into one table.

    A row is emitted for every hexagon with LST, NDVI and NDWI values.
    Missing population and building sums are filled with zero. ``grids``
    lists the grids the aggregates were built on, when known, and must all
    equal ``hexgrid``.
    """
    for g in grids:
        if g is not None and g != hexgrid:
            raise GeometryMismatchError("aggregates were computed on a different hexagon grid")
    lst = _as_mapping(lst_agg)
    nd = _as_mapping(ndvi_agg)
    nw = _as_mapping(ndwi_agg)
    pop = _as_mapping(pop_agg)
    bsums = {HexCellId(*k): np.asarray(v, float) for k, v in (building_sums or {}).items()}
    for cell, vec in bsums.items():
        if vec.shape != (len(BUILDING_VARIABLES),):
            raise IngestionError(f"building sums for {cell} have {vec.size} entries, expected {len(BUILDING_VARIABLES)}")

    cells = sorted(c for c in lst if c in nd and c in nw)
    n = len(cells)
    zero = np.zeros(len(BUILDING_VARIABLES))
    bmat = np.array([bsums.get(c, zero) for c in cells], dtype=float).reshape(n, len(BUILDING_VARIABLES))
    columns = {
        "lst": np.array([lst[c] for c in cells], float),
        "ndvi": np.array([nd[c] for c in cells], float),
        "ndwi": np.array([nw[c] for c in cells], float),
        "total_population": np.array([pop.get(c, 0.0) for c in cells], float),
    }
    for j, name in enumerate(BUILDING_VARIABLES):
        columns[name] = bmat[:, j].copy()
    return FeatureTable(cells, columns, hexgrid.diameter)
