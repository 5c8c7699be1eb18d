"""Context/profile feature extraction and domain diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .citydata import (
    POI_CATEGORIES,
    TRANSPORT_KINDS,
    ChargerPlan,
    CityDataset,
    k_nearest_with_padding,
    stations_within_radius,
)

N_CONTEXT = 24
N_PROFILE = 5

CONTEXT_NAMES = (
    tuple(f"fraction of {c} POIs" for c in POI_CATEGORIES)
    + tuple(f"# of {c} POIs" for c in POI_CATEGORIES)
    + ("POI entropy", "average street length", "intersection density", "street density",
       "mean degree centrality", "# of subway stations", "# of bus stops", "# of parking lots")
)
PROFILE_NAMES = (
    "# of nearby stations",
    "# of nearby chargers",
    "# of slow chargers",
    "# of fast chargers",
    "# of all chargers",
)


def _station_index(ds: CityDataset, station: str) -> int:
    try:
        return ds.index[station]
    except KeyError:
        raise KeyError(f"unknown station id {station!r}") from None


def extract_context_features(ds: CityDataset, station: str, r: float) -> np.ndarray:
    """24-D context vector for the disc of radius ``r`` meters around ``station``.

    Layout: 8 POI fractions, 8 POI counts, POI entropy (natural log), average
    street length (m), intersection density (per km^2), street density (km per
    km^2), mean normalized degree centrality, #subway, #bus, #parking.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    loc = ds.stations[_station_index(ds, station)].location
    area_km2 = np.pi * (r / 1000.0) ** 2
    out = np.zeros(N_CONTEXT)

    idx = ds.pois.within(loc, r)
    cats = ds.pois.attr[idx]
    counts = np.array([np.count_nonzero(cats == c) for c in POI_CATEGORIES], dtype=float)
    total = counts.sum()
    if total > 0:
        frac = counts / total
        out[0:8] = frac
        nz = frac[frac > 0]
        out[16] = float(-(nz * np.log(nz)).sum())
    out[8:16] = counts

    roads = ds.roads
    inside = roads.nodes.within(loc, r)
    if inside.size:
        mask = np.zeros(len(roads.lat), dtype=bool)
        mask[inside] = True
        keep = mask[roads.edge_u] & mask[roads.edge_v]
        lengths = roads.length_m[keep]
        n_nodes = inside.size
        out[18] = n_nodes / area_km2
        if lengths.size:
            out[17] = lengths.mean()
            out[19] = lengths.sum() / 1000.0 / area_km2
        if n_nodes > 1:
            u, v = roads.edge_u[keep], roads.edge_v[keep]
            simple = {(min(a, b), max(a, b)) for a, b in zip(u.tolist(), v.tolist()) if a != b}
            degree = 2.0 * len(simple)
            out[20] = degree / n_nodes / (n_nodes - 1)

    kinds = ds.transport.attr[ds.transport.within(loc, r)]
    out[21:24] = [np.count_nonzero(kinds == k) for k in TRANSPORT_KINDS]
    return out


def extract_profile_features(ds: CityDataset, plan: ChargerPlan, station: str, r: float) -> np.ndarray:
    """[#nearby stations, #nearby chargers, n_slow, n_fast, n_slow + n_fast] under ``plan``."""
    ns, nf = plan[station]
    nearby = stations_within_radius(ds, station, r)
    mass = 0
    for s in nearby:
        a, b = plan[s.id]
        mass += a + b
    return np.array([len(nearby), mass, ns, nf, ns + nf], dtype=float)


@dataclass
class Normalizer:
    """Per-dimension min-max scaling; degenerate dimensions map to 0."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if np.any(self.hi < self.lo):
            raise ValueError("normalizer max must be >= min")

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (v - self.lo) / safe, 0.0)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["lo"], dtype=float), np.array(d["hi"], dtype=float))


def fit_normalizer(*pools) -> Normalizer:
    """Fit min-max ranges on the union of the given (n_i, d) sample pools."""
    arrays = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pools if len(p)]
    if not arrays:
        raise ValueError("cannot fit a normalizer on an empty sample set")
    stacked = np.vstack(arrays)
    return Normalizer(stacked.min(axis=0), stacked.max(axis=0))


def apply(norm: Normalizer, v: np.ndarray) -> np.ndarray:
    return norm.apply(v)


class CityFeatures:
    """Plan-independent feature state for one city, computed once.

    Holds the raw context matrix, the within-``r`` neighbor lists used by the
    profile features and the ``lam``-nearest lists used by the context map.
    Profile features for any plan are then cheap to assemble.
    """

    def __init__(self, ds: CityDataset, r: float = 1000.0, lam: int = 5):
        if lam < 1:
            raise ValueError("lambda must be >= 1")
        self.ds = ds
        self.r = float(r)
        self.lam = int(lam)

    @cached_property
    def context(self) -> np.ndarray:
        ids = self.ds.station_ids
        return np.array([extract_context_features(self.ds, s, self.r) for s in ids]).reshape(len(ids), N_CONTEXT)

    @cached_property
    def neighbors(self) -> list:
        idx = self.ds.index
        return [np.array([idx[s.id] for s in stations_within_radius(self.ds, sid, self.r)], dtype=int)
                for sid in self.ds.station_ids]

    @cached_property
    def knn(self) -> np.ndarray:
        idx = self.ds.index
        rows = [[idx[s] for s in k_nearest_with_padding(self.ds, sid, self.lam)[0]] for sid in self.ds.station_ids]
        return np.array(rows, dtype=int).reshape(len(rows), self.lam)

    def profiles(self, plan: ChargerPlan) -> np.ndarray:
        """(n_stations, 5) profile matrix under ``plan``."""
        ns, nf = plan.arrays(self.ds.station_ids)
        tot = (ns + nf).astype(float)
        out = np.zeros((len(ns), N_PROFILE))
        for i, nb in enumerate(self.neighbors):
            out[i, 0] = nb.size
            out[i, 1] = tot[nb].sum()
        out[:, 2] = ns
        out[:, 3] = nf
        out[:, 4] = tot
        return out

    def context_maps(self, norm: Normalizer) -> np.ndarray:
        """(n_stations, lam, 24) normalized context maps."""
        z = norm.apply(self.context)
        return z[self.knn]


def build_context_map(ds: CityDataset, station: str, lam: int, norm: Normalizer, r: float = 1000.0) -> np.ndarray:
    """lam x 24 map: the station's normalized context row, then its nearest neighbors'."""
    ids, _ = k_nearest_with_padding(ds, station, lam)
    cache: dict = {}
    rows = []
    for sid in ids:
        if sid not in cache:
            cache[sid] = norm.apply(extract_context_features(ds, sid, r))
        rows.append(cache[sid])
    return np.vstack(rows)


def pearson_analysis(features, demands, names: Optional[Sequence[str]] = None) -> list:
    """Pearson correlation of each feature column with ``demands``.

    Returns ``(name, coefficient, constant)`` tuples sorted by absolute
    coefficient, descending (stable for ties).  Constant columns get 0.0 and
    ``constant=True``.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(demands, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n < 2:
        raise ValueError("pearson_analysis needs at least 2 samples")
    if len(y) != n:
        raise ValueError("features and demands differ in length")
    if np.ptp(y) == 0:
        raise ValueError("demand vector is constant")
    names = list(names) if names is not None else [f"f_{j + 1}" for j in range(m)]
    yc = y - y.mean()
    out = []
    for j in range(m):
        xc = x[:, j] - x[:, j].mean()
        sx = np.sqrt((xc * xc).sum())
        if sx == 0 or np.ptp(x[:, j]) == 0:
            out.append((names[j], 0.0, True))
            continue
        rho = float((xc * yc).sum() / (sx * np.sqrt((yc * yc).sum())))
        out.append((names[j], float(np.clip(rho, -1.0, 1.0)), False))
    return sorted(out, key=lambda e: -abs(e[1]))


def median_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.vstack([a, b])
    if len(pooled) < 2:
        return 1.0
    d = pdist(pooled)
    med = float(np.median(d))
    return med if med > 0 else 1.0


def mmd(sample_a, sample_b, bandwidth: Union[float, str] = "median") -> float:
    """Biased squared MMD with a Gaussian kernel exp(-|x-y|^2 / (2 sigma^2)).

    ``bandwidth="median"`` uses the median pairwise distance of the pooled
    sample.
    """
    return mmd_with_bandwidth(sample_a, sample_b, bandwidth)[0]


def mmd_with_bandwidth(sample_a, sample_b, bandwidth: Union[float, str] = "median") -> tuple[float, float]:
    a = np.atleast_2d(np.asarray(sample_a, dtype=float))
    b = np.atleast_2d(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0 or len(a) == 0 or len(b) == 0:
        raise ValueError("mmd samples must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if isinstance(bandwidth, str):
        if bandwidth not in ("median", "median-heuristic"):
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        sigma = median_bandwidth(a, b)
    else:
        sigma = float(bandwidth)
        if sigma <= 0:
            raise ValueError("bandwidth must be positive")
    g = -0.5 / sigma**2
    kaa = np.exp(g * cdist(a, a, "sqeuclidean")).mean()
    kbb = np.exp(g * cdist(b, b, "sqeuclidean")).mean()
    kab = np.exp(g * cdist(a, b, "sqeuclidean")).mean()
    return float(max(kaa + kbb - 2.0 * kab, 0.0)), sigma
