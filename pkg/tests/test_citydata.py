import shutil

import numpy as np
import pandas as pd
import pytest

from chargeplan.citydata import (
    ChargerPlan,
    DataValidationError,
    k_nearest_stations,
    k_nearest_with_padding,
    load_city_dataset,
    read_plan_csv,
    stations_within_radius,
    write_city_dataset,
    write_plan_csv,
)

from conftest import make_city, north_of, station


def test_tiny_source_loads(tiny_source_dir):
    ds = load_city_dataset(tiny_source_dir, "source")
    assert ds.role == "source"
    assert len(ds.stations) == 3
    assert len(ds.pois) == 20
    assert ds.T == 13
    assert all(s.has_demand for s in ds.stations)


def test_tiny_target_has_no_demand(tiny_target_dir):
    ds = load_city_dataset(tiny_target_dir, "target")
    assert ds.role == "target"
    assert all(s.demand_slow is None and s.demand_fast is None for s in ds.stations)
    with pytest.raises(ValueError):
        ds.demand_arrays()


def test_out_of_range_demand_names_row(tiny_source_dir, tmp_path):
    bad = tmp_path / "city"
    shutil.copytree(tiny_source_dir, bad)
    df = pd.read_csv(bad / "stations.csv", dtype={"id": str})
    df.loc[1, "demand_slow_4"] = 1.3
    df.to_csv(bad / "stations.csv", index=False)
    with pytest.raises(DataValidationError) as err:
        load_city_dataset(bad, "source")
    msg = " ".join(err.value.issues)
    assert "demand out of range" in msg
    assert "row 2" in msg and "demand_slow_4" in msg


def test_missing_file_and_bad_schema(tiny_source_dir, tmp_path):
    city = tmp_path / "city"
    shutil.copytree(tiny_source_dir, city)
    (city / "pois.csv").unlink()
    df = pd.read_csv(city / "transport.csv").drop(columns=["kind"])
    df.to_csv(city / "transport.csv", index=False)
    with pytest.raises(DataValidationError) as err:
        load_city_dataset(city, "source")
    issues = err.value.issues
    assert any("missing file" in i and "pois.csv" in i for i in issues)
    assert any("transport.csv" in i and "kind" in i for i in issues)


def test_role_contracts(tiny_source_dir, tiny_target_dir):
    with pytest.raises(DataValidationError, match="target city must not carry demand"):
        load_city_dataset(tiny_source_dir, "target")
    with pytest.raises(DataValidationError, match="requires demand columns"):
        load_city_dataset(tiny_target_dir, "source")


def test_wrong_T_is_reported(tiny_source_dir):
    with pytest.raises(DataValidationError, match="expected T=12"):
        load_city_dataset(tiny_source_dir, "source", T=12)


def test_round_trip(tiny_source_dir, tmp_path):
    ds = load_city_dataset(tiny_source_dir, "source")
    write_city_dataset(ds, tmp_path / "copy")
    again = load_city_dataset(tmp_path / "copy", "source")
    assert again == ds


def test_radius_query_examples():
    lone = make_city([station("a", 30.0, 120.0)])
    assert stations_within_radius(lone, "a", 1000) == []

    near = make_city([station("a", 30.0, 120.0), station("b", north_of(30.0, 500), 120.0)])
    assert [s.id for s in stations_within_radius(near, "a", 1000)] == ["b"]

    far = make_city([station("a", 30.0, 120.0), station("b", north_of(30.0, 1500), 120.0)])
    assert stations_within_radius(far, "a", 1000) == []


def test_knn_examples():
    # three collinear stations at 0, 100 and 200 m
    ds = make_city([
        station("s0", 30.0, 120.0),
        station("s1", north_of(30.0, 100), 120.0),
        station("s2", north_of(30.0, 200), 120.0),
    ])
    assert k_nearest_stations(ds, "s1", 1) == ["s1"]
    # both neighbors lie 100 m away; ties break by id
    assert k_nearest_stations(ds, "s1", 3) == ["s1", "s0", "s2"]
    assert k_nearest_stations(ds, "s0", 3) == ["s0", "s1", "s2"]

    pair = make_city([station("a", 30.0, 120.0), station("b", north_of(30.0, 50), 120.0)])
    ids, padded = k_nearest_with_padding(pair, "a", 3)
    assert ids == ["a", "b", "b"] and padded


def test_plan_helpers(tmp_path):
    plan = ChargerPlan({"x": (1, 2), "y": (0, 3)})
    ns, nf = plan.arrays(["y", "x"])
    assert ns.tolist() == [0, 1] and nf.tolist() == [3, 2]
    assert plan.within_bounds(1, 3) and not plan.within_bounds(0, 3)
    assert plan.total_chargers() == 6
    write_plan_csv(plan, tmp_path / "p.csv")
    assert read_plan_csv(tmp_path / "p.csv") == plan
    with pytest.raises(ValueError):
        ChargerPlan({"x": (-1, 0)})


def test_station_invariants():
    with pytest.raises(ValueError, match="demand out of range"):
        station("a", 30.0, 120.0, demand=(1.2, 0.1))
    with pytest.raises(ValueError):
        station("a", 30.0, 120.0, cost_slow=0.0)
    with pytest.raises(DataValidationError, match="not unique"):
        make_city([station("a", 30.0, 120.0), station("a", 30.1, 120.0)])


def test_distance_uses_great_circle():
    ds = make_city([station("a", 0.0, 0.0), station("b", 0.0, 0.009)])
    # 0.009 degrees of longitude on the equator is about 1000.8 m
    assert stations_within_radius(ds, "a", 1001.0)
    assert not stations_within_radius(ds, "a", 1000.0)
    assert np.isclose(0.009 * np.pi / 180 * 6_371_000.0, 1000.7, atol=0.1)
