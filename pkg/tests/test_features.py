import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uhihex.errors import BuildingFormatError, GeometryMismatchError, IngestionError
from uhihex.features import (
    BUILDING_VARIABLES,
    FEATURE_COLUMNS,
    INDEPENDENT_VARIABLES,
    BuildingRecord,
    FeatureTable,
    assemble_feature_table,
    building_sums,
    dump_buildings,
    load_buildings,
)
from uhihex.hexgrid import HexAggregate, HexCellId, build_hexgrid
from uhihex.raster import GeoPoint

HEADER = "address_key,x,y,height_storeys,dwelling_units,residential,commercial,market_hawker,multistorey_carpark,precinct_pavilion,miscellaneous\n"


def test_load_example_row():
    recs = load_buildings(HEADER + "BLK 1,10.5,20,12,80,1,1,0,0,0,0\n")
    (b,) = recs
    assert b.height_storeys == 12 and b.commercial_flag == 1
    assert b.location == GeoPoint(10.5, 20.0)
    assert not b.needs_geocoding


def test_missing_coordinates_flagged():
    (b,) = load_buildings(HEADER + "BLK 2,,,4,10,1,0,0,0,0,0\n")
    assert b.needs_geocoding


def test_header_only_is_empty():
    assert load_buildings(HEADER) == []


def test_bad_flag_names_row_and_column():
    with pytest.raises(BuildingFormatError, match=r"row 3.*'commercial'"):
        load_buildings(HEADER + "A,1,1,4,10,1,0,0,0,0,0\nB,1,1,4,10,1,2,0,0,0,0\n")


def test_negative_height():
    with pytest.raises(BuildingFormatError, match="height_storeys"):
        load_buildings(HEADER + "A,1,1,-4,10,1,0,0,0,0,0\n")


def test_missing_column():
    with pytest.raises(BuildingFormatError, match="dwelling_units"):
        load_buildings("address_key,height_storeys\nA,3\n")


def test_non_integer_value():
    with pytest.raises(BuildingFormatError, match=r"row 2"):
        load_buildings(HEADER + "A,1,1,four,10,1,0,0,0,0,0\n")


def test_record_validation():
    with pytest.raises(ValueError):
        BuildingRecord("A", 3, 1, commercial_flag=2)
    with pytest.raises(ValueError):
        BuildingRecord("A", -1, 1)


records_st = st.lists(
    st.builds(
        BuildingRecord,
        address_key=st.text("ABC123 -", min_size=1, max_size=8).map(lambda s: "K" + s.strip()),
        height_storeys=st.integers(0, 60),
        dwelling_units=st.integers(0, 500),
        residential_flag=st.integers(0, 1),
        commercial_flag=st.integers(0, 1),
        location=st.one_of(st.none(), st.builds(GeoPoint, st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))),
    ),
    max_size=10,
)


@settings(max_examples=40, deadline=None)
@given(records_st)
def test_dump_load_round_trip(records):
    assert load_buildings(dump_buildings(records)) == records


def _aggs(d):
    return [HexAggregate(HexCellId(*k), v, 1) for k, v in d.items()]


def test_assemble_rules():
    g = build_hexgrid((0, 0, 1000, 1000), 200)
    lst = _aggs({(0, 0): 30.0, (1, 0): 31.0, (0, 1): 32.0})
    nd = _aggs({(0, 0): 0.1, (1, 0): 0.2, (5, 5): 0.3})
    nw = _aggs({(0, 0): -0.1, (1, 0): -0.2, (0, 1): 0.0})
    pop = _aggs({(1, 0): 250.0})
    sums = {HexCellId(0, 0): np.arange(8.0)}
    t = assemble_feature_table(g, lst, nd, nw, pop, sums, grids=[g, g])
    assert t.cells == [(0, 0), (1, 0)]  # (0, 1) lacks ndvi; (5, 5) lacks lst
    assert t["total_population"].tolist() == [0.0, 250.0]
    assert t["total_height"].tolist() == [0.0, 0.0]
    assert t["total_miscellaneous"].tolist() == [7.0, 0.0]
    assert t.diameter == 200


def test_assemble_grid_mismatch():
    g = build_hexgrid((0, 0, 1000, 1000), 200)
    other = build_hexgrid((0, 0, 1000, 1000), 300)
    with pytest.raises(GeometryMismatchError):
        assemble_feature_table(g, [], [], [], grids=[other])


def test_building_sums_skip_ungeocoded():
    g = build_hexgrid((0, 0, 1000, 1000), 300)
    c = g.center((1, 1))
    recs = [
        BuildingRecord("A", 10, 100, residential_flag=1, location=c),
        BuildingRecord("B", 12, 50, commercial_flag=1, location=GeoPoint(c.x + 1, c.y)),
        BuildingRecord("C", 99, 99),
    ]
    sums = building_sums(g, recs)
    assert list(sums) == [(1, 1)]
    assert dict(zip(BUILDING_VARIABLES, sums[(1, 1)].tolist())) == {
        "total_height": 22, "total_dwelling_units": 150, "total_residential": 1, "total_commercial": 1,
        "total_market_hawker": 0, "total_multistorey_carpark": 0, "total_precinct_pavilion": 0,
        "total_miscellaneous": 0,
    }


def _table(n=5, seed=0):
    rng = np.random.default_rng(seed)
    cells = sorted(HexCellId(int(q), 0) for q in range(n))
    cols = {name: rng.random(n) for name in ("lst",) + INDEPENDENT_VARIABLES}
    return FeatureTable(cells, cols, 300.0)


def test_csv_round_trip_and_column_order():
    t = _table()
    text = t.to_csv()
    assert text.splitlines()[0] == ",".join(FEATURE_COLUMNS)
    back = FeatureTable.from_csv(text, 300.0)
    assert back.cells == t.cells
    for k in t.columns:
        assert back[k].tobytes() == t[k].tobytes()
    assert back.to_csv() == text


def test_feature_columns_fixed_order():
    assert FEATURE_COLUMNS == (
        "q", "r", "lst", "ndvi", "ndwi", "total_population", "total_height", "total_dwelling_units",
        "total_residential", "total_commercial", "total_market_hawker", "total_multistorey_carpark",
        "total_precinct_pavilion", "total_miscellaneous",
    )


def test_table_rejects_unsorted_and_duplicates():
    t = _table()
    with pytest.raises(ValueError):
        FeatureTable(list(reversed(t.cells)), t.columns)
    text = t.to_csv()
    dup = text + text.splitlines()[1] + "\n"
    with pytest.raises(IngestionError, match="duplicate"):
        FeatureTable.from_csv(dup)


def test_subset():
    t = _table(6)
    s = t.subset([HexCellId(4, 0), HexCellId(1, 0)])
    assert s.cells == [(1, 0), (4, 0)]
    assert s["lst"].tolist() == [t["lst"][1], t["lst"][4]]
