"""Shared builders for small hand-made cities."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from chargeplan.citydata import ChargingStation, CityDataset, GeoPoint, PointTable, RoadNetwork

FIXTURES = Path(__file__).parent / "fixtures"

# one degree of latitude in meters on the haversine sphere
M_PER_DEG = 6_371_000.0 * np.pi / 180.0


def north_of(lat0: float, meters: float) -> float:
    return lat0 + meters / M_PER_DEG


def station(sid, lat, lon, n_slow=0, n_fast=0, T=2, cost_slow=1.0, cost_fast=1.0, price_slow=1.0,
            price_fast=1.0, demand=None):
    ps = tuple([price_slow] * T) if np.isscalar(price_slow) else tuple(price_slow)
    pf = tuple([price_fast] * T) if np.isscalar(price_fast) else tuple(price_fast)
    ds_, df_ = (None, None) if demand is None else (tuple([demand[0]] * T), tuple([demand[1]] * T))
    return ChargingStation(sid, GeoPoint(lat, lon), n_slow, n_fast, cost_slow, cost_fast, ps, pf, ds_, df_)


def make_city(stations, role="target", pois=None, transport=None, roads=None, parking=None, population=None):
    def table(rows):
        if not rows:
            return PointTable.empty()
        lat, lon, attr = zip(*rows)
        return PointTable(np.array(lat, float), np.array(lon, float), np.array(attr, dtype=object))

    def mass(rows):
        if rows is None:
            return None
        lat, lon, attr = zip(*rows)
        return PointTable(np.array(lat, float), np.array(lon, float), np.array(attr, float))

    return CityDataset(
        role=role,
        stations=tuple(stations),
        pois=table(pois),
        transport=table(transport),
        roads=roads if roads is not None else RoadNetwork.empty(),
        parking_sessions=mass(parking),
        population=mass(population),
    )


@pytest.fixture
def tiny_source_dir():
    return FIXTURES / "tiny_source"


@pytest.fixture
def tiny_target_dir():
    return FIXTURES / "tiny_target"


ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion(capsys):
    """Record and print the one-line verdict of an acceptance criterion."""
    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
