"""Revenue objective, plan cost, the even initial plan and fine-tuned move sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..citydata import ChargerPlan, CityDataset


@dataclass(frozen=True)
class PlannerConfig:
    """Budget, stopping threshold and per-station charger bounds."""

    budget: float
    theta: float = 0.1
    u_slow: int = 40
    u_fast: int = 20

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        if self.u_slow < 1 or self.u_fast < 1:
            raise ValueError("charger upper bounds must be >= 1")


def _demand_pair(demands, n: int, T: int):
    ys, yf = (np.asarray(d, dtype=float) for d in demands)
    if ys.shape != (n, T) or yf.shape != (n, T):
        raise ValueError(f"demands must cover {n} stations x {T} intervals, got {ys.shape} and {yf.shape}")
    return ys, yf


def revenue_arrays(n_slow, n_fast, demands, prices) -> float:
    """Daily revenue from aligned arrays: counts (n,), demands/prices (n, T)."""
    ns = np.asarray(n_slow, dtype=float)
    nf = np.asarray(n_fast, dtype=float)
    ps, pf = (np.asarray(p, dtype=float) for p in prices)
    ys, yf = _demand_pair(demands, len(ns), ps.shape[1] if ps.ndim == 2 else 0)
    if ps.shape != ys.shape or pf.shape != yf.shape:
        raise ValueError("prices and demands differ in shape")
    return float(((ys * ps).sum(axis=1) * ns).sum() + ((yf * pf).sum(axis=1) * nf).sum())


def revenue(plan: ChargerPlan, demands, prices, station_ids: Sequence[str] | None = None) -> float:
    """Sum over stations and intervals of utilization x price x charger count.

    ``demands`` and ``prices`` are ``(slow, fast)`` pairs of ``(n, T)`` arrays
    aligned with ``station_ids`` (default: plan order).
    """
    ids = list(station_ids) if station_ids is not None else list(plan)
    if not plan.covers(ids) or len(plan) != len(ids):
        raise ValueError("plan and demand tables cover different stations")
    ns, nf = plan.arrays(ids)
    return revenue_arrays(ns, nf, demands, prices)


def dataset_revenue(ds: CityDataset, plan: ChargerPlan, demands) -> float:
    """:func:`revenue` using the prices stored in ``ds``."""
    return revenue(plan, demands, (ds.price_slow, ds.price_fast), ds.station_ids)


def plan_cost(plan: ChargerPlan, stations) -> float:
    """Total deployment cost of ``plan``; ``stations`` is a dataset or station sequence."""
    seq = stations.stations if isinstance(stations, CityDataset) else stations
    by_id = {s.id: s for s in seq}
    total = 0.0
    for sid, (ns, nf) in plan.entries.items():
        if sid not in by_id:
            raise KeyError(f"unknown station id {sid!r}")
        s = by_id[sid]
        total += s.cost_slow * ns + s.cost_fast * nf
    return total


def initial_even_plan(stations, config: PlannerConfig) -> ChargerPlan:
    """Split the budget evenly over every (station, charger type) slot."""
    seq = stations.stations if isinstance(stations, CityDataset) else tuple(stations)
    if not seq:
        return ChargerPlan({})
    b = config.budget / (2 * len(seq))
    entries = {}
    for s in seq:
        ns = min(math.floor(b / s.cost_slow), config.u_slow)
        nf = min(math.floor(b / s.cost_fast), config.u_fast)
        entries[s.id] = (ns, nf)
    return ChargerPlan(entries)


@dataclass(frozen=True)
class FineTunedPlanSets:
    """Per-station ordered option lists; option 0 is the current plan."""

    station_ids: tuple
    options: tuple  # options[i] is a tuple of (n_slow, n_fast)

    def __len__(self):
        return len(self.station_ids)

    def __getitem__(self, i):
        return self.options[i]

    def size(self) -> int:
        return sum(len(o) for o in self.options)


def finetuned_options(ns: int, nf: int, u_slow: int, u_fast: int) -> tuple:
    """The current counts, then +1/-1 slow, then +1/-1 fast, within bounds."""
    raw = [(ns, nf), (ns + 1, nf), (ns - 1, nf), (ns, nf + 1), (ns, nf - 1)]
    out = []
    for a, b in raw:
        if 0 <= a <= u_slow and 0 <= b <= u_fast and (a, b) not in out:
            out.append((a, b))
    return tuple(out)


def build_finetuned_sets(plan: ChargerPlan, config: PlannerConfig,
                         station_ids: Sequence[str] | None = None) -> FineTunedPlanSets:
    ids = tuple(station_ids) if station_ids is not None else tuple(plan)
    if not plan.within_bounds(config.u_slow, config.u_fast):
        raise ValueError("current plan violates the charger bounds")
    opts = tuple(finetuned_options(*plan[s], config.u_slow, config.u_fast) for s in ids)
    return FineTunedPlanSets(ids, opts)
