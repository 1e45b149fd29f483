"""Regular hexagonal tessellations and aggregation onto them.

Hexagons are pointy-top. ``diameter`` is the flat-to-flat width, so the
circumradius is ``diameter / sqrt(3)``. Cells are addressed with axial
coordinates ``(q, r)``; cell ``(0, 0)`` is centered on the lower-left corner
of the bounding box.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import GeometryMismatchError, IngestionError
from .raster import GeoPoint, RasterGrid

SQRT3 = math.sqrt(3.0)

# circumradius = diameter * _RADIUS_PER_DIAMETER. Use 0.5 to treat diameter as
# vertex-to-vertex instead of flat-to-flat.
_RADIUS_PER_DIAMETER = 1.0 / SQRT3

DEFAULT_DIAMETERS = (600.0, 500.0, 480.0, 400.0, 300.0, 200.0)

AXIAL_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


class HexCellId(NamedTuple):
    q: int
    r: int

    def neighbors(self) -> List["HexCellId"]:
        return [HexCellId(self.q + dq, self.r + dr) for dq, dr in AXIAL_NEIGHBORS]


class HexAggregate(NamedTuple):
    cell: HexCellId
    value: float
    contributing_count: int


@dataclass(frozen=True)
class HexGrid:
    diameter: float
    origin: GeoPoint
    bbox: Tuple[float, float, float, float]

    @property
    def radius(self) -> float:
        """Center-to-vertex distance."""
        return self.diameter * _RADIUS_PER_DIAMETER

    @property
    def column_spacing(self) -> float:
        return SQRT3 * self.radius

    @property
    def row_spacing(self) -> float:
        return 1.5 * self.radius

    @property
    def cell_area(self) -> float:
        return 1.5 * SQRT3 * self.radius**2

    def center(self, cell) -> GeoPoint:
        q, r = cell
        s = self.radius
        return GeoPoint(
            self.origin.x + s * SQRT3 * (q + r / 2.0),
            self.origin.y + s * 1.5 * r,
        )

    def centers(self, q: np.ndarray, r: np.ndarray):
        s = self.radius
        return (
            self.origin.x + s * SQRT3 * (q + r / 2.0),
            self.origin.y + s * 1.5 * r,
        )

    def vertices(self, cell) -> List[Tuple[float, float]]:
        """Polygon ring (closed, counter-clockwise) of ``cell``."""
        cx, cy = self.center(cell)
        ring = []
        for i in range(6):
            angle = math.radians(60 * i + 30)
            ring.append((cx + self.radius * math.cos(angle), cy + self.radius * math.sin(angle)))
        ring.append(ring[0])
        return ring

    def locate(self, p) -> HexCellId:
        q, r = self.locate_many(np.array([p[0]], float), np.array([p[1]], float))
        return HexCellId(int(q[0]), int(r[0]))

    def locate_many(self, x: np.ndarray, y: np.ndarray):
        """Vectorized locate; returns integer arrays ``(q, r)``."""
        s = self.radius
        px = (np.asarray(x, float) - self.origin.x) / s
        py = (np.asarray(y, float) - self.origin.y) / s
        fq = (SQRT3 / 3.0) * px - py / 3.0
        fr = (2.0 / 3.0) * py
        return cube_round(fq, fr)

    def cells_covering_bbox(self) -> List[HexCellId]:
        """Every cell whose hexagon intersects the bounding box, sorted."""
        xmin, ymin, xmax, ymax = self.bbox
        pad = self.radius
        r_lo = math.floor((ymin - pad - self.origin.y) / self.row_spacing) - 1
        r_hi = math.ceil((ymax + pad - self.origin.y) / self.row_spacing) + 1
        out = []
        for r in range(r_lo, r_hi + 1):
            shift = r / 2.0
            q_lo = math.floor((xmin - pad - self.origin.x) / self.column_spacing - shift) - 1
            q_hi = math.ceil((xmax + pad - self.origin.x) / self.column_spacing - shift) + 1
            for q in range(q_lo, q_hi + 1):
                cx, cy = self.center((q, r))
                if (
                    cx + self.column_spacing / 2 >= xmin
                    and cx - self.column_spacing / 2 <= xmax
                    and cy + self.radius >= ymin
                    and cy - self.radius <= ymax
                ):
                    out.append(HexCellId(q, r))
        return sorted(out)


def cube_round(fq, fr):
    """Round fractional axial coordinates to the containing hexagon.

    The cube coordinate with the largest rounding error is recomputed from
    the other two so that ``q + r + s == 0`` holds.
    """
    fq = np.asarray(fq, float)
    fr = np.asarray(fr, float)
    fs = -fq - fr
    q = np.rint(fq)
    r = np.rint(fr)
    s = np.rint(fs)
    dq = np.abs(q - fq)
    dr = np.abs(r - fr)
    ds = np.abs(s - fs)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(np.int64), r.astype(np.int64)


def build_hexgrid(bbox: Sequence[float], diameter: float) -> HexGrid:
    """Tessellate ``bbox = (xmin, ymin, xmax, ymax)`` with hexagons of ``diameter``."""
    if not (diameter > 0 and math.isfinite(diameter)):
        raise ValueError(f"hexagon diameter must be positive, got {diameter}")
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bounding box {tuple(bbox)}")
    return HexGrid(float(diameter), GeoPoint(xmin, ymin), (xmin, ymin, xmax, ymax))


def _overlaps(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _group(q, r, weights_list):
    """Sum each weight array per distinct ``(q, r)``; returns cells sorted and sums."""
    q = np.asarray(q, np.int64)
    r = np.asarray(r, np.int64)
    r0 = r.min()
    span = int(r.max() - r0) + 1
    keys, inverse, counts = np.unique(q * span + (r - r0), return_inverse=True, return_counts=True)
    cells = np.stack([np.floor_divide(keys, span), np.mod(keys, span) + r0], axis=1)
    inverse = inverse.reshape(-1)
    sums = [np.bincount(inverse, weights=w, minlength=len(keys)) for w in weights_list]
    return cells, counts, sums


def _pixel_cells(grid: HexGrid, raster: RasterGrid):
    if not _overlaps(grid.bbox, raster.bounds):
        raise GeometryMismatchError(f"raster extent {raster.bounds} does not overlap grid {grid.bbox}")
    xs, ys = raster.cell_centers()
    return grid.locate_many(xs.ravel(), ys.ravel())


def _aggregate_located(q, r, raster: RasterGrid, stat: str) -> List[HexAggregate]:
    if stat not in ("mean", "sum"):
        raise ValueError(f"unknown statistic {stat!r}")
    mask = raster.valid_mask.ravel()
    if not mask.any():
        return []
    q, r = q[mask], r[mask]
    values = raster.values.ravel()[mask]
    cells, counts, (sums,) = _group(q, r, [values])
    if stat == "mean":
        # clamp to each hexagon's own range so rounding never leaves it
        r0 = r.min()
        span = int(r.max() - r0) + 1
        order = np.argsort(q * span + (r - r0), kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        lo = np.minimum.reduceat(values[order], starts)
        hi = np.maximum.reduceat(values[order], starts)
        result = np.clip(sums / counts, lo, hi)
    else:
        result = sums
    return [
        HexAggregate(HexCellId(int(c[0]), int(c[1])), float(v), int(n))
        for c, v, n in zip(cells, result, counts)
    ]


def aggregate_raster(grid: HexGrid, raster: RasterGrid, stat: str = "mean") -> List[HexAggregate]:
    """Aggregate raster cells into hexagons by cell center.

    Nodata cells are ignored; hexagons with no contributing cell are omitted.
    Output is sorted by ``(q, r)``.
    """
    if stat not in ("mean", "sum"):
        raise ValueError(f"unknown statistic {stat!r}")
    q, r = _pixel_cells(grid, raster)
    return _aggregate_located(q, r, raster, stat)


def aggregate_rasters(grid: HexGrid, layers: Dict[str, Tuple[RasterGrid, str]]) -> Dict[str, List[HexAggregate]]:
    """Aggregate several rasters, locating pixels once per distinct geometry."""
    located = []
    out = {}
    for name, (raster, stat) in layers.items():
        for ref, qr in located:
            if ref.same_geometry(raster):
                break
        else:
            qr = _pixel_cells(grid, raster)
            located.append((raster, qr))
        out[name] = _aggregate_located(qr[0], qr[1], raster, stat)
    return out


def aggregate_points(
    grid: HexGrid, points: Iterable[Tuple[Sequence[float], Sequence[float]]]
) -> Dict[HexCellId, Tuple[np.ndarray, int]]:
    """Component-wise sums of attribute vectors per hexagon.

    Returns ``{cell: (sum_vector, point_count)}`` in ``(q, r)`` order.
    """
    points = list(points)
    if not points:
        return {}
    arity = len(points[0][1])
    for i, (_, attrs) in enumerate(points):
        if len(attrs) != arity:
            raise IngestionError(f"point {i} has {len(attrs)} attributes, expected {arity}")
    xy = np.array([p for p, _ in points], dtype=float).reshape(-1, 2)
    attrs = np.array([a for _, a in points], dtype=float).reshape(len(points), arity)
    q, r = grid.locate_many(xy[:, 0], xy[:, 1])
    cells, counts, sums = _group(q, r, [attrs[:, j] for j in range(arity)])
    out = {}
    for i, c in enumerate(cells):
        vec = np.array([s[i] for s in sums]) if arity else np.zeros(0)
        out[HexCellId(int(c[0]), int(c[1]))] = (vec, int(counts[i]))
    return out


def aggregates_to_csv(aggregates: Iterable[HexAggregate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q", "r", "value", "count"])
    for agg in aggregates:
        writer.writerow([agg.cell.q, agg.cell.r, repr(float(agg.value)), agg.contributing_count])
    return buf.getvalue()


def hexes_to_geojson(grid: HexGrid, rows: Dict[HexCellId, dict], crs_note: str = "") -> dict:
    """FeatureCollection of hexagon polygons with per-cell properties.

    Coordinates stay in the working planar CRS; ``crs_note`` is recorded in
    the collection's ``properties`` for downstream tooling.
    """
    features = []
    for cell in sorted(rows):
        props = {"q": cell.q, "r": cell.r}
        props.update(rows[cell])
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [[list(v) for v in grid.vertices(cell)]]},
                "properties": props,
            }
        )
    return {
        "type": "FeatureCollection",
        "properties": {
            "diameter_m": grid.diameter,
            "crs": crs_note or "planar CRS of the input rasters (meters)",
        },
        "features": features,
    }


def grid_to_dict(grid: HexGrid) -> dict:
    return {"diameter": grid.diameter, "origin": list(grid.origin), "bbox": list(grid.bbox)}


def grid_from_dict(d: dict) -> HexGrid:
    return HexGrid(float(d["diameter"]), GeoPoint(*map(float, d["origin"])), tuple(map(float, d["bbox"])))


def dump_grid(grid: HexGrid) -> str:
    return json.dumps(grid_to_dict(grid), indent=2) + "\n"
