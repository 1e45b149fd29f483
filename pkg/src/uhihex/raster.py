"""Georeferenced single-band rasters and the ESRI ASCII Grid format.

Storage is row-major and north-up: ``values[0, 0]`` is the north-west
cell, and ``(origin_x, origin_y)`` is the lower-left (south-west) corner of
the grid in a planar CRS measured in meters.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple, Optional, TextIO, Union

import numpy as np

from .errors import DomainError, GeometryMismatchError, RasterFormatError

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
_REQUIRED_KEYS = _HEADER_KEYS[:5]


class GeoPoint(NamedTuple):
    x: float
    y: float


class GridStats(NamedTuple):
    min: float
    max: float
    mean: float
    valid_count: int


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """A single raster band.

    Parameters
    ----------
    values : ndarray
        ``(rows, cols)`` float array, north row first.
    origin_x, origin_y : float
        Lower-left corner of the grid.
    cell_size : float
        Edge length of a square cell in meters.
    nodata : float or None
        Sentinel marking missing cells. ``None`` means every cell is valid.
    """

    values: np.ndarray
    origin_x: float
    origin_y: float
    cell_size: float
    nodata: Optional[float] = None
    _mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"raster values must be a non-empty 2-D array, got shape {values.shape}")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if not (math.isfinite(self.origin_x) and math.isfinite(self.origin_y)):
            raise ValueError("origin must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.nodata is None:
            mask = np.ones(values.shape, dtype=bool)
        elif math.isnan(self.nodata):
            mask = ~np.isnan(values)
        else:
            mask = values != self.nodata
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("raster contains non-finite values outside the nodata mask")
        mask.setflags(write=False)
        object.__setattr__(self, "_mask", mask)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def valid_mask(self) -> np.ndarray:
        """Boolean array, True where the cell holds data."""
        return self._mask

    @property
    def bounds(self):
        """``(xmin, ymin, xmax, ymax)`` of the grid extent."""
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.cols * self.cell_size,
            self.origin_y + self.rows * self.cell_size,
        )

    def same_geometry(self, other: "RasterGrid") -> bool:
        return (
            self.shape == other.shape
            and self.origin_x == other.origin_x
            and self.origin_y == other.origin_y
            and self.cell_size == other.cell_size
        )

    def with_values(self, values: np.ndarray, valid: Optional[np.ndarray] = None) -> "RasterGrid":
        """Return a raster with this geometry, writing nodata where ``valid`` is False."""
        nodata = self.nodata if self.nodata is not None else DEFAULT_NODATA
        out = np.array(values, dtype=np.float64)
        if valid is None:
            valid = self._mask
        if not valid.all():
            out[~valid] = nodata
            return RasterGrid(out, self.origin_x, self.origin_y, self.cell_size, nodata)
        return RasterGrid(out, self.origin_x, self.origin_y, self.cell_size, self.nodata)

    def cell_centers(self):
        """Return ``(x, y)`` arrays of every cell center, each shaped like ``values``."""
        cols = self.origin_x + (np.arange(self.cols) + 0.5) * self.cell_size
        ys = self.origin_y + (self.rows - np.arange(self.rows) - 0.5) * self.cell_size
        return np.meshgrid(cols, ys)

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (
            self.same_geometry(other)
            and _same_nodata(self.nodata, other.nodata)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def _same_nodata(a, b):
    if a is None or b is None:
        return a is b
    return a == b or (math.isnan(a) and math.isnan(b))


def require_same_geometry(*grids: RasterGrid):
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GeometryMismatchError(
                "raster geometries differ: "
                f"{first.shape}@({first.origin_x}, {first.origin_y}, {first.cell_size}) vs "
                f"{g.shape}@({g.origin_x}, {g.origin_y}, {g.cell_size})"
            )


def _parse_number(token, line, what):
    try:
        return float(token)
    except ValueError:
        raise RasterFormatError(f"non-numeric {what} {token!r}", line) from None


def read_ascii_grid(source: Union[str, bytes, BinaryIO, TextIO]) -> RasterGrid:
    """Parse an ESRI ASCII Grid.

    ``source`` may be the text itself, raw bytes, or an open file object.
    Header keywords are case-insensitive. Errors carry the 1-based line
    number of the offending token.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("ascii")
    lines = source.splitlines()

    header = {}
    lineno = 0
    while lineno < len(lines):
        parts = lines[lineno].split()
        if not parts:
            lineno += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        if len(parts) != 2:
            raise RasterFormatError(f"header {parts[0]!r} must have exactly one value", lineno + 1)
        if key in header:
            raise RasterFormatError(f"duplicate header {parts[0]!r}", lineno + 1)
        header[key] = (parts[1], lineno + 1)
        lineno += 1

    for key in _REQUIRED_KEYS:
        if key not in header:
            raise RasterFormatError(f"missing header {key!r}", lineno + 1)

    def integer(key):
        token, line = header[key]
        try:
            value = int(token)
        except ValueError:
            raise RasterFormatError(f"{key} must be an integer, got {token!r}", line) from None
        if value < 1:
            raise RasterFormatError(f"{key} must be positive, got {value}", line)
        return value

    def real(key):
        token, line = header[key]
        return _parse_number(token, line, key)

    ncols = integer("ncols")
    nrows = integer("nrows")
    xll = real("xllcorner")
    yll = real("yllcorner")
    cellsize = real("cellsize")
    if not (cellsize > 0 and math.isfinite(cellsize)):
        raise RasterFormatError(f"cellsize must be positive, got {cellsize}", header["cellsize"][1])
    nodata = real("nodata_value") if "nodata_value" in header else None

    body = lines[lineno:]
    expected = nrows * ncols
    try:
        data = np.array(" ".join(body).split(), dtype=np.float64)
    except ValueError:
        data = None
    if data is None:
        # slow path only to locate the bad token
        for offset, text in enumerate(body):
            for token in text.split():
                _parse_number(token, lineno + offset + 1, "value")
        raise RasterFormatError("unparseable data section")
    if data.size != expected:
        raise RasterFormatError(
            f"expected {expected} values ({nrows} rows x {ncols} cols), found {data.size}",
            len(lines),
        )
    values = data.reshape(nrows, ncols)
    mask = np.ones(values.shape, bool) if nodata is None else (
        ~np.isnan(values) if math.isnan(nodata) else values != nodata
    )
    bad = ~np.isfinite(values) & mask
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise RasterFormatError(f"non-finite value at row {r}, col {c}", _line_of(body, lineno, r, c, ncols))
    return RasterGrid(values, xll, yll, cellsize, nodata)


def _line_of(body, first_line, row, col, ncols):
    target = row * ncols + col
    seen = 0
    for offset, text in enumerate(body):
        seen += len(text.split())
        if seen > target:
            return first_line + offset + 1
    return None


def _format_value(v: float) -> str:
    # shortest repr round-trips exactly; integral values lose the ".0"
    s = repr(v)
    return s[:-2] if s.endswith(".0") else s


def write_ascii_grid(grid: RasterGrid, target: Optional[BinaryIO] = None) -> bytes:
    """Serialize ``grid`` as an ESRI ASCII Grid.

    Values are written in shortest round-trip form, so reading the output
    back reproduces the grid bit for bit. Returns the encoded bytes, and also
    writes them to ``target`` when given.
    """
    out = io.StringIO()
    out.write(f"ncols {grid.cols}\n")
    out.write(f"nrows {grid.rows}\n")
    out.write(f"xllcorner {_format_value(float(grid.origin_x))}\n")
    out.write(f"yllcorner {_format_value(float(grid.origin_y))}\n")
    out.write(f"cellsize {_format_value(float(grid.cell_size))}\n")
    if grid.nodata is not None:
        out.write(f"NODATA_value {_format_value(float(grid.nodata))}\n")
    fmt = _format_value
    for row in grid.values.tolist():
        out.write(" ".join([fmt(v) for v in row]))
        out.write("\n")
    payload = out.getvalue().encode("ascii")
    if target is not None:
        target.write(payload)
    return payload


def load_raster(path) -> RasterGrid:
    with open(path, "rb") as fh:
        return read_ascii_grid(fh)


def save_raster(grid: RasterGrid, path):
    with open(path, "wb") as fh:
        write_ascii_grid(grid, fh)


def cell_center(grid: RasterGrid, row: int, col: int) -> GeoPoint:
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise IndexError(f"cell ({row}, {col}) outside {grid.rows}x{grid.cols} grid")
    return GeoPoint(
        grid.origin_x + (col + 0.5) * grid.cell_size,
        grid.origin_y + (grid.rows - row - 0.5) * grid.cell_size,
    )


def grid_stats(grid: RasterGrid) -> GridStats:
    """Min, max, mean and count over non-nodata cells."""
    valid = grid.values[grid.valid_mask]
    if valid.size == 0:
        raise DomainError("raster has no valid cells")
    mean = float(valid.mean())
    lo, hi = float(valid.min()), float(valid.max())
    # guard against the mean drifting one ulp outside the range
    mean = min(max(mean, lo), hi)
    return GridStats(lo, hi, mean, int(valid.size))
