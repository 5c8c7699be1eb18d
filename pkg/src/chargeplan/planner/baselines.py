"""Reference planners: even split, cost-aware greedy, and proxy-proportional plans."""
from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np

from ..citydata import ChargerPlan, CityDataset, PointTable, _unit_xyz
from .objective import PlannerConfig, dataset_revenue, initial_even_plan

Demands = Union[tuple, Callable[[ChargerPlan], tuple]]


def baseline_even(ds: CityDataset, config: PlannerConfig) -> ChargerPlan:
    return initial_even_plan(ds, config)


def baseline_cg(ds: CityDataset, demands: Demands, config: PlannerConfig) -> ChargerPlan:
    """Add one charger at a time where it raises revenue most per unit cost.

    ``demands`` is either a fixed ``(slow, fast)`` pair of ``(n, T)`` arrays or
    a function mapping a plan to such a pair (plan-dependent demand).  Ties go
    to the lower station index, slow before fast.  Stops when no charger fits
    the remaining budget and bounds, or when no addition has positive gain.
    """
    ids = ds.station_ids
    n = len(ids)
    ns = np.zeros(n, dtype=int)
    nf = np.zeros(n, dtype=int)
    es, ef = ds.cost_slow, ds.cost_fast
    left = float(config.budget)
    eps = 1e-9 * max(1.0, left)

    if callable(demands):
        demand_fn = demands

        def gains():
            base = dataset_revenue(ds, ChargerPlan.from_arrays(ids, ns, nf), demand_fn(ChargerPlan.from_arrays(ids, ns, nf)))
            out = np.full((n, 2), -np.inf)
            for i in range(n):
                for k, (arr, e) in enumerate(((ns, es), (nf, ef))):
                    arr[i] += 1
                    p = ChargerPlan.from_arrays(ids, ns, nf)
                    out[i, k] = (dataset_revenue(ds, p, demand_fn(p)) - base) / e[i]
                    arr[i] -= 1
            return out
    else:
        ys, yf = (np.asarray(d, dtype=float) for d in demands)
        per = np.column_stack([(ys * ds.price_slow).sum(axis=1) / es, (yf * ds.price_fast).sum(axis=1) / ef])

        def gains():
            return per.copy()

    while True:
        g = gains()
        g[(ns >= config.u_slow) | (es > left + eps), 0] = -np.inf
        g[(nf >= config.u_fast) | (ef > left + eps), 1] = -np.inf
        flat = int(np.argmax(g))  # row-major: station first, then slow before fast
        i, k = divmod(flat, 2)
        if not np.isfinite(g[i, k]) or (callable(demands) and g[i, k] <= 0):
            break
        if k == 0:
            ns[i] += 1
            left -= es[i]
        else:
            nf[i] += 1
            left -= ef[i]
    return ChargerPlan.from_arrays(ids, ns, nf)


def voronoi_mass(ds: CityDataset, proxy: PointTable) -> np.ndarray:
    """Proxy mass aggregated on each point's nearest station."""
    from scipy.spatial import cKDTree

    mass = np.zeros(len(ds.stations))
    if len(proxy) == 0 or len(ds.stations) == 0:
        return mass
    tree = cKDTree(_unit_xyz(ds.station_lat, ds.station_lon))
    # nearest chord on the unit sphere is the nearest great-circle distance
    _, idx = tree.query(_unit_xyz(proxy.lat, proxy.lon))
    np.add.at(mass, idx, np.asarray(proxy.attr, dtype=float))
    return mass


def proportional_plan(ds: CityDataset, mass: np.ndarray, config: PlannerConfig) -> ChargerPlan:
    """Budget shares proportional to ``mass``; each share split evenly by charger type."""
    total = float(mass.sum())
    n = len(ds.stations)
    share = mass / total if total > 0 else np.full(n, 1.0 / max(n, 1))
    entries = {}
    for s, w in zip(ds.stations, share):
        b = config.budget * w / 2.0
        entries[s.id] = (min(math.floor(b / s.cost_slow), config.u_slow),
                         min(math.floor(b / s.cost_fast), config.u_fast))
    return ChargerPlan(entries)


def baseline_park(ds: CityDataset, config: PlannerConfig) -> ChargerPlan:
    if ds.parking_sessions is None:
        raise ValueError("parking-session data is required for the parking baseline")
    return proportional_plan(ds, voronoi_mass(ds, ds.parking_sessions), config)


def baseline_pop(ds: CityDataset, config: PlannerConfig) -> ChargerPlan:
    if ds.population is None:
        raise ValueError("population data is required for the population baseline")
    return proportional_plan(ds, voronoi_mass(ds, ds.population), config)
