"""Seeded synthetic city pairs with a known, plan-dependent demand function.

Each city is a square map with a few activity hotspots.  POIs, transport
facilities, a jittered street grid, stations, parking sessions and
population points are sampled around them.  The ground-truth utilization of
a charger type at a station is a logistic function of the station's context
features and the hour, attenuated by its own charger count (saturation) and
by the chargers at nearby stations (cannibalization).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .citydata import (
    POI_CATEGORIES,
    TRANSPORT_KINDS,
    ChargerPlan,
    ChargingStation,
    CityDataset,
    GeoPoint,
    PointTable,
    RoadNetwork,
    haversine_m,
)
from .features import CONTEXT_NAMES, CityFeatures

KM_PER_DEG_LAT = 111.32

# reference magnitudes that map raw context features to O(1) inputs
_REF = {
    "# of company POIs": 150.0,
    "# of community POIs": 150.0,
    "# of life service POIs": 150.0,
    "intersection density": 25.0,
    "# of bus stops": 40.0,
}

DEFAULT_SLOW_MODEL = {
    "bias": -1.6,
    "# of company POIs": 0.9,
    "# of community POIs": 1.1,
    "# of life service POIs": 0.3,
    "intersection density": 0.4,
    "# of bus stops": 0.2,
}
DEFAULT_FAST_MODEL = {
    "bias": -1.9,
    "# of company POIs": 1.3,
    "# of community POIs": 0.2,
    "# of life service POIs": 0.7,
    "intersection density": 0.3,
    "# of bus stops": 0.6,
}

# categories the demand does not depend on take most of the cross-city shift
_CATEGORY_SHIFT = {c: (0.3 if c in ("company", "community", "life service") else 1.0) for c in POI_CATEGORIES}
_TRANSPORT_SHIFT = {"subway": 1.0, "bus": 0.3, "parking": 1.0}


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Densities are per km^2 over the whole map (hotspots add on top of the
    uniform background).  ``domain_shift`` scales the multiplicative offset
    applied to the target city's feature generators; ``saturation`` and
    ``cannibalization`` set the demand attenuation per own and per nearby
    charger.
    """

    n_stations: int = 30
    n_target_stations: Optional[int] = None
    extent_km: float = 6.0
    n_hotspots: int = 4
    poi_density: tuple = (12.0, 4.0, 5.0, 8.0, 3.0, 10.0, 2.0, 10.0)
    hotspot_poi: float = 250.0
    transport_density: tuple = (0.3, 8.0, 3.0)
    road_spacing_m: float = 250.0
    road_drop: float = 0.35
    T: int = 13
    price_slow: tuple = (0.8, 1.6)
    price_fast: tuple = (1.4, 2.6)
    cost_slow: float = 33000.0
    cost_fast: float = 54000.0
    source_max_slow: int = 10
    source_max_fast: int = 6
    domain_shift: float = 0.0
    demand_slow: dict = field(default_factory=lambda: dict(DEFAULT_SLOW_MODEL))
    demand_fast: dict = field(default_factory=lambda: dict(DEFAULT_FAST_MODEL))
    saturation: float = 0.15
    cannibalization: float = 0.01
    noise: float = 0.01
    proxy_alignment: float = 0.0
    radius_m: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.n_stations < 1 or (self.n_target_stations is not None and self.n_target_stations < 1):
            raise ValueError("station counts must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if len(self.poi_density) != len(POI_CATEGORIES) or len(self.transport_density) != len(TRANSPORT_KINDS):
            raise ValueError("one density per POI category and transport kind is required")
        if min(self.poi_density) < 0 or min(self.transport_density) < 0 or self.hotspot_poi < 0:
            raise ValueError("densities must be >= 0")
        if self.domain_shift < 0 or self.saturation < 0 or self.cannibalization < 0 or self.noise < 0:
            raise ValueError("domain_shift, saturation, cannibalization and noise must be >= 0")
        if not 0.0 <= self.proxy_alignment <= 1.0:
            raise ValueError("proxy_alignment must lie in [0, 1]")
        for model in (self.demand_slow, self.demand_fast):
            for k in model:
                if k != "bias" and k not in CONTEXT_NAMES:
                    raise ValueError(f"unknown demand-model feature {k!r}")

    @property
    def target_stations(self) -> int:
        return self.n_target_stations if self.n_target_stations is not None else self.n_stations


def time_profile(T: int, kind: str) -> np.ndarray:
    """Additive hourly logit offsets: slow peaks early and late, fast at midday."""
    t = (np.arange(T) + 0.5) / T
    if kind == "slow":
        return 0.6 * np.cos(2.0 * np.pi * t)
    return 0.5 * np.sin(np.pi * t) - 0.25


@dataclass
class GroundTruthOracle:
    """True utilization as a function of a city's context, the plan and the hour."""

    demand_slow: dict
    demand_fast: dict
    saturation: float
    cannibalization: float
    radius_m: float = 1000.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _features(self, ds: CityDataset) -> CityFeatures:
        key = id(ds)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not ds:
            hit = (ds, CityFeatures(ds, self.radius_m, 1))
            self._cache[key] = hit
        return hit[1]

    def _logit(self, context: np.ndarray, model: dict) -> np.ndarray:
        z = np.full(len(context), float(model.get("bias", 0.0)))
        for name, w in model.items():
            if name == "bias":
                continue
            j = CONTEXT_NAMES.index(name)
            ref = _REF.get(name, 1.0)
            z += w * np.log1p(np.maximum(context[:, j], 0.0)) / np.log1p(ref)
        return z

    def base_demand(self, ds: CityDataset) -> tuple[np.ndarray, np.ndarray]:
        """Utilization with no chargers anywhere, each ``(n, T)``."""
        ctx = self._features(ds).context
        T = ds.T
        out = []
        for kind, model in (("slow", self.demand_slow), ("fast", self.demand_fast)):
            z = self._logit(ctx, model)[:, None] + time_profile(T, kind)[None, :]
            out.append(1.0 / (1.0 + np.exp(-z)))
        return out[0], out[1]

    def nearby_mass(self, ds: CityDataset, plan: ChargerPlan) -> np.ndarray:
        ns, nf = plan.arrays(ds.station_ids)
        tot = (ns + nf).astype(float)
        return np.array([tot[nb].sum() for nb in self._features(ds).neighbors])

    def demand(self, ds: CityDataset, plan: ChargerPlan) -> tuple[np.ndarray, np.ndarray]:
        """Plan-dependent utilization ``(y_slow, y_fast)``, each ``(n, T)`` in [0, 1]."""
        if not plan.covers(ds.station_ids):
            raise KeyError("plan does not cover every station")
        bs, bf = self.base_demand(ds)
        ns, nf = plan.arrays(ds.station_ids)
        comp = 1.0 / (1.0 + self.cannibalization * self.nearby_mass(ds, plan))
        ys = bs / (1.0 + self.saturation * ns)[:, None] * comp[:, None]
        yf = bf / (1.0 + self.saturation * nf)[:, None] * comp[:, None]
        return ys, yf


def simulate_demand(oracle: GroundTruthOracle, ds: CityDataset, plan: ChargerPlan) -> tuple[np.ndarray, np.ndarray]:
    return oracle.demand(ds, plan)


# ---------------------------------------------------------------------------
# generation


class _City:
    """Local planar frame around a center; coordinates in km."""

    def __init__(self, lat0: float, lon0: float, extent: float):
        self.lat0, self.lon0, self.extent = lat0, lon0, extent
        self.kx = KM_PER_DEG_LAT * np.cos(np.radians(lat0))

    def to_latlon(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return self.lat0 + xy[:, 1] / KM_PER_DEG_LAT, self.lon0 + xy[:, 0] / self.kx

    def clip(self, xy):
        return np.clip(xy, 0.0, self.extent)


def _points(rng, city: _City, hotspots, background: float, hot_total: float, sigma_km: float = 0.5):
    area = city.extent**2
    n_bg = rng.poisson(background * area)
    bg = rng.uniform(0.0, city.extent, size=(n_bg, 2))
    parts = [bg]
    for (hx, hy), w in hotspots:
        k = rng.poisson(hot_total * w)
        parts.append(city.clip(rng.normal([hx, hy], sigma_km, size=(k, 2))))
    return np.vstack(parts) if parts else np.zeros((0, 2))


def _roads(rng, city: _City, spacing_m: float, drop: float, hotspots, prefix: str) -> RoadNetwork:
    step = spacing_m / 1000.0
    m = int(np.floor(city.extent / step)) + 1
    gx, gy = np.meshgrid(np.arange(m) * step, np.arange(m) * step)
    xy = np.column_stack([gx.ravel(), gy.ravel()]) + rng.normal(0.0, 0.15 * step, size=(m * m, 2))
    xy = city.clip(xy)
    # streets are denser near hotspots
    near = np.zeros(m * m)
    for (hx, hy), w in hotspots:
        near = np.maximum(near, w * np.exp(-((xy[:, 0] - hx) ** 2 + (xy[:, 1] - hy) ** 2) / 2.0))
    p_drop = np.clip(drop * (1.0 - near / max(near.max(), 1e-12)), 0.0, 0.95)
    idx = np.arange(m * m).reshape(m, m)
    pairs = np.vstack([
        np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()]),
        np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()]),
    ])
    keep = rng.random(len(pairs)) >= 0.5 * (p_drop[pairs[:, 0]] + p_drop[pairs[:, 1]])
    pairs = pairs[keep]
    lat, lon = city.to_latlon(xy)
    length = haversine_m(lat[pairs[:, 0]], lon[pairs[:, 0]], lat[pairs[:, 1]], lon[pairs[:, 1]])
    ok = length > 0
    pairs, length = pairs[ok], length[ok]
    ids = np.array([f"{prefix}n{i}" for i in range(m * m)], dtype=object)
    return RoadNetwork(ids, lat, lon, pairs[:, 0].copy(), pairs[:, 1].copy(), length)


def _hotspots(rng, city: _City, n: int):
    lo, hi = 0.15 * city.extent, 0.85 * city.extent
    return [((float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi))), float(rng.uniform(0.5, 1.5)))
            for _ in range(n)]


def _prices(rng, n: int, T: int, rng_range: tuple) -> np.ndarray:
    base = rng.uniform(rng_range[0], rng_range[1], size=n)
    tou = 1.0 + 0.15 * np.sin(np.linspace(0.0, np.pi, T))
    return np.round(base[:, None] * tou[None, :], 4)


def _generate_city(cfg: SynthConfig, rng, role: str, n_stations: int, center, shift: np.ndarray, name: str):
    """One city; ``shift`` holds one multiplicative factor per POI category then per transport kind."""
    city = _City(center[0], center[1], cfg.extent_km)
    hot = _hotspots(rng, city, cfg.n_hotspots)
    nc = len(POI_CATEGORIES)

    pts, cats = [], []
    for c, cat in enumerate(POI_CATEGORIES):
        mix = rng.dirichlet(np.ones(len(hot))) * len(hot) if hot else []
        weighted = [(h, w * m) for (h, w), m in zip(hot, mix)]
        p = _points(rng, city, weighted, cfg.poi_density[c] * shift[c], cfg.hotspot_poi * shift[c] / max(len(hot), 1))
        pts.append(p)
        cats.extend([cat] * len(p))
    poi_xy = np.vstack(pts)
    plat, plon = city.to_latlon(poi_xy)
    pois = PointTable(plat, plon, np.array(cats, dtype=object))

    tpts, kinds = [], []
    for k, kind in enumerate(TRANSPORT_KINDS):
        f = shift[nc + k]
        p = _points(rng, city, hot, cfg.transport_density[k] * f, cfg.transport_density[k] * f * 2.0)
        tpts.append(p)
        kinds.extend([kind] * len(p))
    txy = np.vstack(tpts)
    tlat, tlon = city.to_latlon(txy)
    transport = PointTable(tlat, tlon, np.array(kinds, dtype=object))

    roads = _roads(rng, city, cfg.road_spacing_m, cfg.road_drop, hot, prefix=f"{name}-")

    # half the stations sit near hotspots, the rest anywhere
    n_hot = n_stations // 2 if hot else 0
    which = rng.integers(0, len(hot), size=n_hot) if hot else np.zeros(0, dtype=int)
    sxy = np.vstack([
        city.clip(np.array([hot[w][0] for w in which]).reshape(-1, 2) + rng.normal(0.0, 0.6, size=(n_hot, 2))),
        rng.uniform(0.0, city.extent, size=(n_stations - n_hot, 2)),
    ])
    slat, slon = city.to_latlon(sxy)
    ps = _prices(rng, n_stations, cfg.T, cfg.price_slow)
    pf = _prices(rng, n_stations, cfg.T, cfg.price_fast)
    if role == "source":
        n_slow = rng.integers(0, cfg.source_max_slow + 1, size=n_stations)
        n_fast = rng.integers(0, cfg.source_max_fast + 1, size=n_stations)
    else:
        n_slow = np.zeros(n_stations, dtype=int)
        n_fast = np.zeros(n_stations, dtype=int)
    stations = tuple(
        ChargingStation(
            id=f"{name}{i:03d}",
            location=GeoPoint(float(slat[i]), float(slon[i])),
            n_slow=int(n_slow[i]),
            n_fast=int(n_fast[i]),
            cost_slow=float(cfg.cost_slow),
            cost_fast=float(cfg.cost_fast),
            price_slow=tuple(float(v) for v in ps[i]),
            price_fast=tuple(float(v) for v in pf[i]),
        )
        for i in range(n_stations)
    )
    ds = CityDataset(role="target", stations=stations, pois=pois, transport=transport, roads=roads, name=name)
    return ds, city, sxy


def _proxies(rng, cfg: SynthConfig, city: _City, sxy: np.ndarray, weight: np.ndarray, scale: float):
    """Proxy masses near each station: a blend of ``weight`` and an unrelated random field."""
    n = len(sxy)
    w = weight / max(weight.mean(), 1e-12)
    noise = rng.gamma(0.7, 1.0 / 0.7, size=n)
    mass = cfg.proxy_alignment * w + (1.0 - cfg.proxy_alignment) * noise
    k = 6
    xy = np.repeat(sxy, k, axis=0) + rng.normal(0.0, 0.08, size=(n * k, 2))
    lat, lon = city.to_latlon(city.clip(xy))
    vals = np.round(np.repeat(mass, k) * scale / k, 3)
    return PointTable(lat, lon, vals)


def generate_city_pair(config: SynthConfig) -> tuple[CityDataset, CityDataset, GroundTruthOracle]:
    """Source city with deployed chargers and observed demand, target city with candidates only.

    The target city's POI and transport densities are multiplied by
    ``exp(domain_shift * s_k * j_k)`` per generator ``k``, where ``s_k`` is
    larger for the generators the demand does not depend on and ``j_k`` is a
    seeded jitter around 1.  With ``domain_shift = 0`` both cities are drawn
    from the same distribution.
    """
    root = np.random.SeedSequence(config.seed)
    s_src, s_tgt, s_shift, s_obs, s_proxy = root.spawn(5)
    oracle = GroundTruthOracle(
        demand_slow=dict(config.demand_slow),
        demand_fast=dict(config.demand_fast),
        saturation=config.saturation,
        cannibalization=config.cannibalization,
        radius_m=config.radius_m,
    )
    n_gen = len(POI_CATEGORIES) + len(TRANSPORT_KINDS)
    ones = np.ones(n_gen)
    jitter = np.random.default_rng(s_shift).uniform(0.6, 1.4, size=n_gen)
    weights = np.array([_CATEGORY_SHIFT[c] for c in POI_CATEGORIES] + [_TRANSPORT_SHIFT[k] for k in TRANSPORT_KINDS])
    shift = np.exp(config.domain_shift * weights * jitter)

    src_ds, src_city, src_xy = _generate_city(config, np.random.default_rng(s_src), "source", config.n_stations,
                                              (39.90, 116.40), ones, "S")
    tgt_ds, tgt_city, tgt_xy = _generate_city(config, np.random.default_rng(s_tgt), "target",
                                              config.target_stations, (23.13, 113.26), shift, "T")

    # observed source demand under the deployed plan
    plan = src_ds.deployed_plan()
    ys, yf = oracle.demand(src_ds, plan)
    obs = np.random.default_rng(s_obs)
    ys = np.clip(ys + obs.normal(0.0, config.noise, size=ys.shape), 0.0, 1.0)
    yf = np.clip(yf + obs.normal(0.0, config.noise, size=yf.shape), 0.0, 1.0)
    stations = tuple(
        replace(s, demand_slow=tuple(float(v) for v in np.round(ys[i], 6)),
                demand_fast=tuple(float(v) for v in np.round(yf[i], 6)))
        for i, s in enumerate(src_ds.stations)
    )

    prng = np.random.default_rng(s_proxy)
    out = []
    for ds, city, xy, st, role in ((src_ds, src_city, src_xy, stations, "source"),
                                   (tgt_ds, tgt_city, tgt_xy, tgt_ds.stations, "target")):
        bs, bf = oracle.base_demand(ds)
        w = bs.mean(axis=1) + bf.mean(axis=1)
        parking = _proxies(prng, config, city, xy, w, 500.0)
        population = _proxies(prng, config, city, xy, w, 20000.0)
        out.append(CityDataset(role=role, stations=st, pois=ds.pois, transport=ds.transport, roads=ds.roads,
                               parking_sessions=parking, population=population, name=ds.name))
    return out[0], out[1], oracle
