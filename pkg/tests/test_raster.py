import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uhihex.errors import DomainError, RasterFormatError
from uhihex.raster import RasterGrid, cell_center, grid_stats, read_ascii_grid, write_ascii_grid

HEADER = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\n"


def test_read_simple_grid():
    g = read_ascii_grid(HEADER + "1 2\n3 4\n")
    assert g.shape == (2, 2)
    assert g.values.ravel().tolist() == [1, 2, 3, 4]
    assert g.cell_size == 30
    assert g.nodata is None


def test_first_data_row_is_north():
    g = read_ascii_grid(HEADER + "1 2\n3 4\n")
    assert cell_center(g, 0, 0).y > cell_center(g, 1, 0).y
    assert g.values[0, 0] == 1


def test_header_keywords_case_insensitive():
    text = "NCOLS 1\nNRows 1\nXLLCORNER 5\nyllCorner 6\nCELLSIZE 2\nnodata_value -1\n7\n"
    g = read_ascii_grid(text)
    assert (g.origin_x, g.origin_y, g.nodata) == (5, 6, -1)


def test_value_count_mismatch_reports_line():
    with pytest.raises(RasterFormatError, match="expected 4 values") as exc:
        read_ascii_grid(HEADER + "1 2\n3\n")
    assert exc.value.line == 7


def test_non_numeric_token_reports_line():
    with pytest.raises(RasterFormatError, match="non-numeric") as exc:
        read_ascii_grid(HEADER + "1 2\n3 x\n")
    assert exc.value.line == 7


@pytest.mark.parametrize(
    "text, line",
    [
        ("ncols two\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\n1 2 3 4\n", 1),
        ("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize -3\n1 2 3 4\n", 5),
        ("ncols 2\nnrows 2\nxllcorner 0\ncellsize 30\n1 2 3 4\n", 5),
        ("ncols 2\nnrows 2\nxllcorner 0 1\nyllcorner 0\ncellsize 30\n1 2 3 4\n", 3),
    ],
)
def test_malformed_header(text, line):
    with pytest.raises(RasterFormatError) as exc:
        read_ascii_grid(text)
    assert exc.value.line == line


def test_nodata_cell_excluded_from_stats():
    g = read_ascii_grid(HEADER + "NODATA_value -9999\n1 2\n3 -9999\n")
    s = grid_stats(g)
    assert (s.min, s.max, s.mean, s.valid_count) == (1, 3, 2, 3)


def test_write_single_cell():
    g = RasterGrid(np.array([[5.0]]), 0.0, 0.0, 30.0)
    text = write_ascii_grid(g).decode()
    assert text.splitlines()[-1] == "5"


def test_write_emits_nodata_token():
    g = RasterGrid(np.array([[1.5, -9999.0]]), 0.0, 0.0, 30.0, -9999.0)
    lines = write_ascii_grid(g).decode().splitlines()
    assert "NODATA_value -9999" in lines
    assert lines[-1].split() == ["1.5", "-9999"]


def test_write_to_stream():
    g = RasterGrid(np.array([[0.1, 0.2]]), 1.0, 2.0, 3.0)
    buf = io.BytesIO()
    payload = write_ascii_grid(g, buf)
    assert buf.getvalue() == payload
    assert read_ascii_grid(io.BytesIO(payload)) == g


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(
    values=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite),
    ox=st.floats(-1e7, 1e7),
    oy=st.floats(-1e7, 1e7),
    cs=st.floats(1e-3, 1e4),
    nodata=st.one_of(st.none(), st.sampled_from([-9999.0, -3.4028234663852886e38, 0.0])),
)
def test_round_trip_is_bit_exact(values, ox, oy, cs, nodata):
    g = RasterGrid(values, ox, oy, cs, nodata)
    back = read_ascii_grid(write_ascii_grid(g))
    assert back == g
    assert back.values.tobytes() == g.values.tobytes()


def test_cell_center_examples():
    g1 = RasterGrid(np.zeros((1, 1)), 0.0, 0.0, 30.0)
    assert cell_center(g1, 0, 0) == (15, 15)
    g2 = RasterGrid(np.zeros((2, 2)), 0.0, 0.0, 100.0)
    # x = 0 + 1.5*100, y = 0 + (2 - 0 - 0.5)*100
    assert cell_center(g2, 0, 1) == (150, 150)
    with pytest.raises(IndexError):
        cell_center(g2, 5, 0)


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(1, 50), cols=st.integers(1, 50), cs=st.floats(0.5, 500), ox=st.floats(-1e6, 1e6))
def test_corner_centers_inside_bbox(rows, cols, cs, ox):
    g = RasterGrid(np.zeros((rows, cols)), ox, -ox, cs)
    xmin, ymin, xmax, ymax = g.bounds
    for r, c in [(0, 0), (0, cols - 1), (rows - 1, 0), (rows - 1, cols - 1)]:
        x, y = cell_center(g, r, c)
        assert xmin < x < xmax and ymin < y < ymax


def test_constant_grid_stats():
    g = RasterGrid(np.full((3, 4), 0.1), 0, 0, 1)
    s = grid_stats(g)
    assert s.min == s.max == s.mean == 0.1


def test_all_nodata_stats_error():
    g = RasterGrid(np.full((2, 2), -1.0), 0, 0, 1, -1.0)
    with pytest.raises(DomainError):
        grid_stats(g)


@settings(max_examples=50, deadline=None)
@given(values=arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                     elements=st.sampled_from([-9999.0, 0.1, 1e3, -2.5, 7.0, 1e-7])))
def test_stats_invariants(values):
    g = RasterGrid(values, 0, 0, 1, -9999.0)
    nodata_count = int(np.sum(values == -9999.0))
    if nodata_count == values.size:
        return
    s = grid_stats(g)
    assert s.min <= s.mean <= s.max
    assert s.valid_count + nodata_count == values.size


def test_nonfinite_values_rejected():
    with pytest.raises(RasterFormatError, match="non-finite"):
        read_ascii_grid(HEADER + "1 2\n3 inf\n")
    with pytest.raises(ValueError):
        RasterGrid(np.array([[math.nan]]), 0, 0, 1)
