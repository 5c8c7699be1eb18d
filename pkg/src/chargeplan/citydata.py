"""City data model, CSV ingestion and spatial queries.

A city is a set of charging stations plus context tables (POIs, transport
facilities, road graph) and optional proxy tables used by the parking and
population baselines.  Everything is immutable once loaded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

EARTH_RADIUS_M = 6_371_000.0

POI_CATEGORIES = (
    "company",
    "school",
    "hotel",
    "fast food",
    "spot",
    "community",
    "hospital",
    "life service",
)
TRANSPORT_KINDS = ("subway", "bus", "parking")

FILES = {
    "stations": "stations.csv",
    "pois": "pois.csv",
    "transport": "transport.csv",
    "roads_nodes": "roads_nodes.csv",
    "roads_edges": "roads_edges.csv",
    "parking_sessions": "parking_sessions.csv",
    "population": "population.csv",
}
OPTIONAL_FILES = ("parking_sessions", "population")


class DataValidationError(ValueError):
    """Raised when ingested tables violate the data model.

    ``issues`` holds one human-readable string per violation, each naming the
    file and, where applicable, the row or column at fault.
    """

    def __init__(self, issues: Sequence[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters (broadcasts over numpy arrays)."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _unit_xyz(lat, lon):
    la = np.radians(np.asarray(lat, dtype=float))
    lo = np.radians(np.asarray(lon, dtype=float))
    return np.column_stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)])


def _chord(r_m: float) -> float:
    # chord length on the unit sphere for a great-circle distance r_m
    return 2.0 * np.sin(min(r_m / EARTH_RADIUS_M, np.pi) / 2.0)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class ChargingStation:
    """One station: location, charger counts, unit costs, price and demand series.

    Price and demand series are tuples of length T.  Demand series are
    utilization rates in [0, 1] and are ``None`` for target-city candidates.
    """

    id: str
    location: GeoPoint
    n_slow: int
    n_fast: int
    cost_slow: float
    cost_fast: float
    price_slow: tuple
    price_fast: tuple
    demand_slow: Optional[tuple] = None
    demand_fast: Optional[tuple] = None

    def __post_init__(self):
        if self.n_slow < 0 or self.n_fast < 0:
            raise ValueError(f"station {self.id}: negative charger count")
        if not (self.cost_slow > 0 and self.cost_fast > 0):
            raise ValueError(f"station {self.id}: unit costs must be positive")
        if len(self.price_slow) != len(self.price_fast):
            raise ValueError(f"station {self.id}: price schedules differ in length")
        if min(self.price_slow + self.price_fast, default=0.0) < 0:
            raise ValueError(f"station {self.id}: negative price")
        for name in ("demand_slow", "demand_fast"):
            series = getattr(self, name)
            if series is None:
                continue
            if len(series) != len(self.price_slow):
                raise ValueError(f"station {self.id}: {name} has wrong length")
            if any(not 0.0 <= v <= 1.0 for v in series):
                raise ValueError(f"station {self.id}: demand out of range")

    @property
    def has_demand(self) -> bool:
        return self.demand_slow is not None and self.demand_fast is not None


@dataclass(frozen=True, eq=False)
class PointTable:
    """Points with one attribute column (category, kind, count or persons)."""

    lat: np.ndarray
    lon: np.ndarray
    attr: np.ndarray

    def __len__(self):
        return len(self.lat)

    def __eq__(self, other):
        if not isinstance(other, PointTable):
            return NotImplemented
        return (
            np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
            and np.array_equal(self.attr, other.attr)
        )

    @classmethod
    def empty(cls, attr_dtype=object) -> "PointTable":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=attr_dtype))

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(_unit_xyz(self.lat, self.lon) if len(self) else np.zeros((0, 3)))

    def within(self, center: GeoPoint, r: float) -> np.ndarray:
        """Indices of points within great-circle distance ``r`` of ``center``."""
        if len(self) == 0:
            return np.zeros(0, dtype=int)
        xyz = _unit_xyz([center.lat], [center.lon])[0]
        # pad the chord a little and filter on the exact haversine distance
        cand = np.asarray(self.tree.query_ball_point(xyz, _chord(r) * (1 + 1e-9) + 1e-12), dtype=int)
        if cand.size == 0:
            return cand
        d = haversine_m(center.lat, center.lon, self.lat[cand], self.lon[cand])
        return np.sort(cand[d <= r])


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Intersections (nodes) and streets (edges, by node index, length in meters)."""

    node_ids: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    length_m: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("node_ids", "lat", "lon", "edge_u", "edge_v", "length_m")
        )

    @classmethod
    def empty(cls) -> "RoadNetwork":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(np.zeros(0, dtype=object), z, z, zi, zi, z)

    @cached_property
    def nodes(self) -> PointTable:
        return PointTable(self.lat, self.lon, self.node_ids)


@dataclass(frozen=True, eq=False)
class CityDataset:
    role: str
    stations: tuple
    pois: PointTable
    transport: PointTable
    roads: RoadNetwork
    parking_sessions: Optional[PointTable] = None
    population: Optional[PointTable] = None
    name: str = ""

    def __post_init__(self):
        issues = []
        if self.role not in ("source", "target"):
            issues.append(f"role must be 'source' or 'target', got {self.role!r}")
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            issues.append("station ids are not unique")
        if len({len(s.price_slow) for s in self.stations}) > 1:
            issues.append("stations disagree on the number of intervals T")
        for s in self.stations:
            if self.role == "source" and not s.has_demand:
                issues.append(f"source station {s.id} lacks demand series")
            if self.role == "target" and (s.demand_slow is not None or s.demand_fast is not None):
                issues.append(f"target station {s.id} carries demand series")
        if len(self.roads.length_m) and np.any(self.roads.length_m <= 0):
            issues.append("road edge lengths must be > 0")
        if issues:
            raise DataValidationError(issues)

    def __eq__(self, other):
        if not isinstance(other, CityDataset):
            return NotImplemented
        return (
            self.role == other.role
            and self.stations == other.stations
            and self.pois == other.pois
            and self.transport == other.transport
            and self.roads == other.roads
            and self.parking_sessions == other.parking_sessions
            and self.population == other.population
        )

    @property
    def T(self) -> int:
        return len(self.stations[0].price_slow) if self.stations else 0

    @cached_property
    def station_ids(self) -> tuple:
        return tuple(s.id for s in self.stations)

    @cached_property
    def index(self) -> dict:
        return {s.id: i for i, s in enumerate(self.stations)}

    @cached_property
    def station_lat(self) -> np.ndarray:
        return np.array([s.location.lat for s in self.stations], dtype=float)

    @cached_property
    def station_lon(self) -> np.ndarray:
        return np.array([s.location.lon for s in self.stations], dtype=float)

    @cached_property
    def station_table(self) -> PointTable:
        return PointTable(self.station_lat, self.station_lon, np.array(self.station_ids, dtype=object))

    @cached_property
    def cost_slow(self) -> np.ndarray:
        return np.array([s.cost_slow for s in self.stations], dtype=float)

    @cached_property
    def cost_fast(self) -> np.ndarray:
        return np.array([s.cost_fast for s in self.stations], dtype=float)

    @cached_property
    def price_slow(self) -> np.ndarray:
        return np.array([s.price_slow for s in self.stations], dtype=float).reshape(len(self.stations), -1)

    @cached_property
    def price_fast(self) -> np.ndarray:
        return np.array([s.price_fast for s in self.stations], dtype=float).reshape(len(self.stations), -1)

    def station(self, station_id: str) -> ChargingStation:
        try:
            return self.stations[self.index[station_id]]
        except KeyError:
            raise KeyError(f"unknown station id {station_id!r}") from None

    def deployed_plan(self) -> "ChargerPlan":
        return ChargerPlan({s.id: (s.n_slow, s.n_fast) for s in self.stations})

    def demand_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Observed (slow, fast) demand as two (n_stations, T) arrays."""
        if not all(s.has_demand for s in self.stations):
            raise ValueError("dataset has stations without demand series")
        ys = np.array([s.demand_slow for s in self.stations], dtype=float)
        yf = np.array([s.demand_fast for s in self.stations], dtype=float)
        return ys, yf


@dataclass(frozen=True)
class ChargerPlan:
    """Per-station (n_slow, n_fast) charger counts."""

    entries: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for sid, (ns, nf) in self.entries.items():
            if int(ns) != ns or int(nf) != nf or ns < 0 or nf < 0:
                raise ValueError(f"invalid charger counts for station {sid}: {(ns, nf)}")
            clean[sid] = (int(ns), int(nf))
        object.__setattr__(self, "entries", clean)

    def __getitem__(self, station_id):
        try:
            return self.entries[station_id]
        except KeyError:
            raise KeyError(f"station {station_id!r} missing from plan") from None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __hash__(self):
        return hash(tuple(sorted(self.entries.items())))

    @classmethod
    def zeros(cls, station_ids: Iterable[str]) -> "ChargerPlan":
        return cls({sid: (0, 0) for sid in station_ids})

    @classmethod
    def from_arrays(cls, station_ids, n_slow, n_fast) -> "ChargerPlan":
        return cls({sid: (int(a), int(b)) for sid, a, b in zip(station_ids, n_slow, n_fast)})

    def arrays(self, station_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """(n_slow, n_fast) integer arrays ordered like ``station_ids``."""
        ns = np.array([self[s][0] for s in station_ids], dtype=int)
        nf = np.array([self[s][1] for s in station_ids], dtype=int)
        return ns, nf

    def covers(self, station_ids: Iterable[str]) -> bool:
        return all(s in self.entries for s in station_ids)

    def within_bounds(self, u_slow: int, u_fast: int) -> bool:
        return all(0 <= a <= u_slow and 0 <= b <= u_fast for a, b in self.entries.values())

    def total_chargers(self) -> int:
        return sum(a + b for a, b in self.entries.values())


# --------------------------------------------------------------------------
# spatial queries


def _sorted_by_distance(ds: CityDataset, d: np.ndarray, idx: np.ndarray) -> list:
    ids = np.array(ds.station_ids, dtype=object)[idx]
    order = sorted(range(len(idx)), key=lambda k: (d[k], ids[k]))
    return [int(idx[k]) for k in order]


def stations_within_radius(
    ds: CityDataset, center: Union[GeoPoint, str], r: float
) -> list:
    """Stations within great-circle distance ``r`` (meters) of ``center``.

    ``center`` is a station id or a point.  A station id excludes that station
    itself; a point excludes stations located exactly at it.  Results are
    ordered by ascending distance, ties by id.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if isinstance(center, str):
        own = ds.index.get(center)
        if own is None:
            raise KeyError(f"unknown station id {center!r}")
        point = ds.stations[own].location
    else:
        own = None
        point = center
    idx = ds.station_table.within(point, r)
    d = haversine_m(point.lat, point.lon, ds.station_lat[idx], ds.station_lon[idx])
    if own is not None:
        keep = idx != own
    else:
        keep = d > 0
    idx, d = idx[keep], d[keep]
    return [ds.stations[i] for i in _sorted_by_distance(ds, d, idx)]


def k_nearest_stations(ds: CityDataset, center: str, k: int) -> list:
    """The station itself followed by its k-1 nearest neighbors.

    Cities with fewer than ``k`` stations are padded by repeating the last
    element; use :func:`k_nearest_with_padding` to see the padding flag.
    """
    return k_nearest_with_padding(ds, center, k)[0]


def k_nearest_with_padding(ds: CityDataset, center: str, k: int) -> tuple[list, bool]:
    if k < 1:
        raise ValueError("k must be >= 1")
    own = ds.index.get(center)
    if own is None:
        raise KeyError(f"unknown station id {center!r}")
    loc = ds.stations[own].location
    others = np.array([i for i in range(len(ds.stations)) if i != own], dtype=int)
    d = haversine_m(loc.lat, loc.lon, ds.station_lat[others], ds.station_lon[others])
    ordered = [own] + _sorted_by_distance(ds, d, others)[: k - 1]
    padded = len(ordered) < k
    while len(ordered) < k:
        ordered.append(ordered[-1])
    return [ds.station_ids[i] for i in ordered], padded


# --------------------------------------------------------------------------
# ingestion and serialization


def _read_csv(path: Path, required: Sequence[str], issues: list, label: str) -> Optional[pd.DataFrame]:
    if not path.exists():
        issues.append(f"missing file: {path}")
        return None
    try:
        df = pd.read_csv(
            path, encoding="utf-8", keep_default_na=False, na_values=[""], float_precision="round_trip",
            dtype={c: str for c in ("id", "node_id", "u", "v", "category", "kind")},
        )
    except Exception as exc:  # pragma: no cover - pandas parser messages vary
        issues.append(f"{label}: unreadable CSV ({exc})")
        return None
    missing = [c for c in required if c not in df.columns]
    for c in missing:
        issues.append(f"{label}: schema mismatch, missing column '{c}'")
    if missing:
        return None
    for c in required:
        if df[c].isna().any():
            row = int(df.index[df[c].isna()][0]) + 1
            issues.append(f"{label}: empty value in column '{c}' at row {row}")
    return df


def _numeric(df: pd.DataFrame, cols: Sequence[str], issues: list, label: str) -> Optional[np.ndarray]:
    try:
        return df[list(cols)].to_numpy(dtype=float)
    except (TypeError, ValueError):
        for c in cols:
            bad = pd.to_numeric(df[c], errors="coerce").isna() & df[c].notna()
            if bad.any():
                issues.append(f"{label}: non-numeric value in column '{c}' at row {int(df.index[bad][0]) + 1}")
        return None


def _resolve_paths(paths) -> dict:
    if isinstance(paths, (str, Path)):
        root = Path(paths)
        return {key: root / fname for key, fname in FILES.items()}
    return {key: Path(p) for key, p in dict(paths).items()}


def load_city_dataset(paths, role: str, T: Optional[int] = None, name: str = "") -> CityDataset:
    """Load and validate a city from its CSV tables.

    ``paths`` is either a directory holding the standard file names or a
    mapping from table key (``stations``, ``pois``, ...) to file path.  ``T`` is
    the number of daily intervals; when omitted it is inferred from the price
    columns.  All violations found are reported together in one
    :class:`DataValidationError`.
    """
    files = _resolve_paths(paths)
    issues: list = []

    st_path = files.get("stations", Path("stations.csv"))
    st = _read_csv(st_path, ["id", "lat", "lon", "n_slow", "n_fast", "cost_slow", "cost_fast"], issues, "stations.csv")
    stations: list = []
    if st is not None:
        n_price = sum(1 for c in st.columns if str(c).startswith("price_slow_"))
        if T is None:
            T = n_price
        price_s = [f"price_slow_{t}" for t in range(1, T + 1)]
        price_f = [f"price_fast_{t}" for t in range(1, T + 1)]
        dem_s = [f"demand_slow_{t}" for t in range(1, T + 1)]
        dem_f = [f"demand_fast_{t}" for t in range(1, T + 1)]
        for c in price_s + price_f:
            if c not in st.columns:
                issues.append(f"stations.csv: schema mismatch, missing column '{c}'")
        if n_price != T:
            issues.append(f"stations.csv: found {n_price} price_slow columns, expected T={T}")
        has_dem = [c in st.columns for c in dem_s + dem_f]
        if role == "source" and not all(has_dem):
            first = (dem_s + dem_f)[has_dem.index(False)]
            issues.append(f"stations.csv: source city requires demand columns, missing '{first}'")
        if role == "target" and any(has_dem):
            issues.append("stations.csv: target city must not carry demand columns")
        if not issues:
            num = _numeric(st, ["lat", "lon", "n_slow", "n_fast", "cost_slow", "cost_fast"] + price_s + price_f, issues, "stations.csv")
            dem = None
            if role == "source":
                dem = _numeric(st, dem_s + dem_f, issues, "stations.csv")
                if dem is not None:
                    bad = np.argwhere((dem < 0) | (dem > 1))
                    for r_, c_ in bad[:20]:
                        issues.append(
                            f"stations.csv: demand out of range at row {r_ + 1}, column '{(dem_s + dem_f)[c_]}' (value {dem[r_, c_]})"
                        )
            if num is not None and not issues:
                for row, rec in enumerate(num):
                    sid = str(st["id"].iloc[row])
                    try:
                        ns, nf = rec[2], rec[3]
                        if ns != int(ns) or nf != int(nf):
                            raise ValueError(f"station {sid}: charger counts must be integers")
                        stations.append(
                            ChargingStation(
                                id=sid,
                                location=GeoPoint(float(rec[0]), float(rec[1])),
                                n_slow=int(ns),
                                n_fast=int(nf),
                                cost_slow=float(rec[4]),
                                cost_fast=float(rec[5]),
                                price_slow=tuple(float(v) for v in rec[6 : 6 + T]),
                                price_fast=tuple(float(v) for v in rec[6 + T : 6 + 2 * T]),
                                demand_slow=None if dem is None else tuple(float(v) for v in dem[row, :T]),
                                demand_fast=None if dem is None else tuple(float(v) for v in dem[row, T:]),
                            )
                        )
                    except ValueError as exc:
                        issues.append(f"stations.csv: row {row + 1}: {exc}")

    pois = _load_points(files, "pois", "category", POI_CATEGORIES, issues)
    transport = _load_points(files, "transport", "kind", TRANSPORT_KINDS, issues)
    roads = _load_roads(files, issues)
    parking = _load_mass(files, "parking_sessions", "count", issues)
    population = _load_mass(files, "population", "persons", issues)

    if issues:
        raise DataValidationError(issues)
    try:
        return CityDataset(
            role=role,
            stations=tuple(stations),
            pois=pois,
            transport=transport,
            roads=roads,
            parking_sessions=parking,
            population=population,
            name=name,
        )
    except DataValidationError:
        raise


def _check_coords(lat, lon, issues, label):
    bad = np.flatnonzero((np.abs(lat) > 90) | (np.abs(lon) > 180))
    for r in bad[:5]:
        issues.append(f"{label}: coordinates out of range at row {r + 1}")


def _load_points(files, key, attr, allowed, issues) -> PointTable:
    label = FILES[key]
    df = _read_csv(files[key], ["lat", "lon", attr], issues, label) if key in files else None
    if df is None:
        return PointTable.empty()
    coords = _numeric(df, ["lat", "lon"], issues, label)
    values = df[attr].astype(str).to_numpy(dtype=object)
    bad = [i for i, v in enumerate(values) if v not in allowed]
    for i in bad[:5]:
        issues.append(f"{label}: unknown {attr} '{values[i]}' at row {i + 1}")
    if coords is None:
        return PointTable.empty()
    _check_coords(coords[:, 0], coords[:, 1], issues, label)
    return PointTable(coords[:, 0].copy(), coords[:, 1].copy(), values)


def _load_mass(files, key, attr, issues) -> Optional[PointTable]:
    label = FILES[key]
    if key not in files or not files[key].exists():
        return None
    df = _read_csv(files[key], ["lat", "lon", attr], issues, label)
    if df is None:
        return None
    arr = _numeric(df, ["lat", "lon", attr], issues, label)
    if arr is None:
        return None
    _check_coords(arr[:, 0], arr[:, 1], issues, label)
    neg = np.flatnonzero(arr[:, 2] < 0)
    for i in neg[:5]:
        issues.append(f"{label}: negative {attr} at row {i + 1}")
    return PointTable(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())


def _load_roads(files, issues) -> RoadNetwork:
    nodes = _read_csv(files["roads_nodes"], ["node_id", "lat", "lon"], issues, "roads_nodes.csv")
    edges = _read_csv(files["roads_edges"], ["u", "v", "length_m"], issues, "roads_edges.csv")
    if nodes is None or edges is None:
        return RoadNetwork.empty()
    coords = _numeric(nodes, ["lat", "lon"], issues, "roads_nodes.csv")
    lengths = _numeric(edges, ["length_m"], issues, "roads_edges.csv")
    if coords is None or lengths is None:
        return RoadNetwork.empty()
    node_ids = nodes["node_id"].astype(str).to_numpy(dtype=object)
    if len(set(node_ids)) != len(node_ids):
        issues.append("roads_nodes.csv: node ids are not unique")
    pos = {nid: i for i, nid in enumerate(node_ids)}
    u = edges["u"].astype(str).to_numpy()
    v = edges["v"].astype(str).to_numpy()
    missing = [(i, a) for i, a in enumerate(np.concatenate([u, v])) if a not in pos]
    for i, a in missing[:5]:
        issues.append(f"roads_edges.csv: unknown node '{a}' at row {i % len(u) + 1}")
    lengths = lengths[:, 0]
    for i in np.flatnonzero(lengths <= 0)[:5]:
        issues.append(f"roads_edges.csv: edge length must be > 0 at row {i + 1}")
    if missing:
        return RoadNetwork.empty()
    _check_coords(coords[:, 0], coords[:, 1], issues, "roads_nodes.csv")
    return RoadNetwork(
        node_ids=node_ids,
        lat=coords[:, 0].copy(),
        lon=coords[:, 1].copy(),
        edge_u=np.array([pos[a] for a in u], dtype=int),
        edge_v=np.array([pos[a] for a in v], dtype=int),
        length_m=lengths.copy(),
    )


def stations_frame(ds: CityDataset) -> pd.DataFrame:
    T = ds.T
    rows = []
    for s in ds.stations:
        row = {
            "id": s.id,
            "lat": s.location.lat,
            "lon": s.location.lon,
            "n_slow": s.n_slow,
            "n_fast": s.n_fast,
            "cost_slow": s.cost_slow,
            "cost_fast": s.cost_fast,
        }
        row.update({f"price_slow_{t + 1}": s.price_slow[t] for t in range(T)})
        row.update({f"price_fast_{t + 1}": s.price_fast[t] for t in range(T)})
        if s.has_demand:
            row.update({f"demand_slow_{t + 1}": s.demand_slow[t] for t in range(T)})
            row.update({f"demand_fast_{t + 1}": s.demand_fast[t] for t in range(T)})
        rows.append(row)
    return pd.DataFrame(rows)


def write_city_dataset(ds: CityDataset, directory) -> Path:
    """Write ``ds`` to ``directory`` using the ingestion schemas."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    stations_frame(ds).to_csv(out / FILES["stations"], index=False)
    pd.DataFrame({"lat": ds.pois.lat, "lon": ds.pois.lon, "category": ds.pois.attr}).to_csv(
        out / FILES["pois"], index=False
    )
    pd.DataFrame({"lat": ds.transport.lat, "lon": ds.transport.lon, "kind": ds.transport.attr}).to_csv(
        out / FILES["transport"], index=False
    )
    r = ds.roads
    pd.DataFrame({"node_id": r.node_ids, "lat": r.lat, "lon": r.lon}).to_csv(out / FILES["roads_nodes"], index=False)
    pd.DataFrame(
        {"u": r.node_ids[r.edge_u] if len(r.edge_u) else [], "v": r.node_ids[r.edge_v] if len(r.edge_v) else [],
         "length_m": r.length_m}
    ).to_csv(out / FILES["roads_edges"], index=False)
    if ds.parking_sessions is not None:
        p = ds.parking_sessions
        pd.DataFrame({"lat": p.lat, "lon": p.lon, "count": p.attr}).to_csv(out / FILES["parking_sessions"], index=False)
    if ds.population is not None:
        p = ds.population
        pd.DataFrame({"lat": p.lat, "lon": p.lon, "persons": p.attr}).to_csv(out / FILES["population"], index=False)
    return out


def write_plan_csv(plan: ChargerPlan, path, station_ids: Optional[Sequence[str]] = None) -> None:
    ids = list(station_ids) if station_ids is not None else list(plan)
    pd.DataFrame(
        {"station_id": ids, "n_slow": [plan[s][0] for s in ids], "n_fast": [plan[s][1] for s in ids]}
    ).to_csv(path, index=False)


def read_plan_csv(path) -> ChargerPlan:
    df = pd.read_csv(path, dtype={"station_id": str})
    return ChargerPlan({r.station_id: (int(r.n_slow), int(r.n_fast)) for r in df.itertuples()})
