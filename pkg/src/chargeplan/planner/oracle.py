"""Plan counting, plan enumeration and the exhaustive-search optimum."""
from __future__ import annotations

import math
from typing import Callable, Iterator, Optional, Sequence

from ..citydata import ChargerPlan, CityDataset
from ..features import CityFeatures
from ..predictor.model import TrainConfig, fit_models, predict_city
from ..predictor.network import Architecture
from .objective import PlannerConfig, dataset_revenue, plan_cost
from .tio import PlanResult

DEFAULT_CAP = 100_000


class SearchSpaceTooLarge(ValueError):
    def __init__(self, size: int, cap: int):
        self.size, self.cap = size, cap
        super().__init__(f"search space of {size} plans exceeds the cap of {cap}")


def count_plans(n_stations: int, budget: int) -> int:
    """Number of unit-cost plans spending exactly ``budget`` over ``n_stations`` stations.

    Each plan is a weak composition of ``budget`` into ``2 n`` charger slots.
    """
    if n_stations < 1 or budget < 0:
        raise ValueError("need n_stations >= 1 and budget >= 0")
    return math.comb(budget + 2 * n_stations - 1, 2 * n_stations - 1)


def enumerate_compositions(parts: int, total: int) -> Iterator[tuple]:
    """All non-negative integer ``parts``-tuples summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in enumerate_compositions(parts - 1, total - first):
            yield (first,) + rest


def enumerate_plans(costs: Sequence[tuple], budget: float, u_slow: int, u_fast: int) -> Iterator[tuple]:
    """Every per-station count vector with total cost <= ``budget`` within bounds.

    Yields tuples of ``(n_slow, n_fast)`` pairs, stations in order, counts
    ascending lexicographically.
    """
    n = len(costs)
    eps = 1e-9 * max(1.0, abs(budget))

    def rec(i, left):
        if i == n:
            yield ()
            return
        es, ef = costs[i]
        for a in range(u_slow + 1):
            ca = es * a
            if ca > left + eps:
                break
            for b in range(u_fast + 1):
                c = ca + ef * b
                if c > left + eps:
                    break
                for rest in rec(i + 1, left - c):
                    yield ((a, b),) + rest

    yield from rec(0, float(budget))


def count_feasible_plans(costs: Sequence[tuple], budget: float, u_slow: int, u_fast: int) -> int:
    """Size of :func:`enumerate_plans` by a DP over integer-scaled budgets."""
    from .dpmk import integer_costs

    per = [[es * a + ef * b for a in range(u_slow + 1) for b in range(u_fast + 1)] for es, ef in costs]
    W, Bi, _ = integer_costs(per, budget)
    ways = [1] * (Bi + 1)  # ways[k]: selections of the stations so far with cost <= k
    for row in W:
        new = [0] * (Bi + 1)
        for w in row:
            for k in range(w, Bi + 1):
                new[k] += ways[k - w]
        ways = new
    return ways[Bi]


DemandFn = Callable[[ChargerPlan], tuple]


def brute_force_optimal(target_ds: CityDataset, source_ds: Optional[CityDataset], train_config: Optional[TrainConfig],
                        planner_config: PlannerConfig, mode: str = "fixed-demands",
                        demand_fn: Optional[DemandFn] = None, cap: int = DEFAULT_CAP,
                        arch: Optional[Architecture] = None, r: float = 1000.0, lam: int = 5,
                        source_features: Optional[CityFeatures] = None,
                        target_features: Optional[CityFeatures] = None) -> PlanResult:
    """Exhaustive search over every plan with cost <= B.

    ``mode="fixed-demands"`` scores each plan with ``demand_fn(plan)`` (for
    instance the synthetic ground truth).  ``mode="retrain-per-plan"`` fits a
    fresh model pair for every candidate, predicts its demand and counts one
    training per enumerated plan.  Ties keep the first plan in enumeration
    order.
    """
    if mode not in ("fixed-demands", "retrain-per-plan"):
        raise ValueError(f"unknown mode {mode!r}")
    ids = target_ds.station_ids
    costs = [(s.cost_slow, s.cost_fast) for s in target_ds.stations]
    size = count_feasible_plans(costs, planner_config.budget, planner_config.u_slow, planner_config.u_fast)
    if size > cap:
        raise SearchSpaceTooLarge(size, cap)

    if mode == "fixed-demands":
        if demand_fn is None:
            raise ValueError("fixed-demands mode needs a demand function")
        score = demand_fn
    else:
        if source_ds is None or train_config is None:
            raise ValueError("retrain-per-plan mode needs a source city and a training config")
        sf = source_features or CityFeatures(source_ds, r, lam)
        tf = target_features or CityFeatures(target_ds, r, lam)

        def score(plan):
            return predict_city(fit_models(sf, tf, plan, train_config, arch), tf, plan)

    best, best_rev, evaluated = None, -math.inf, 0
    for counts in enumerate_plans(costs, planner_config.budget, planner_config.u_slow, planner_config.u_fast):
        plan = ChargerPlan(dict(zip(ids, counts)))
        rev = dataset_revenue(target_ds, plan, score(plan))
        evaluated += 1
        if rev > best_rev:
            best, best_rev = plan, rev
    per_type = evaluated if mode == "retrain-per-plan" else 0
    return PlanResult(
        plan=best,
        predicted_revenue=best_rev,
        cost=plan_cost(best, target_ds),
        iterations=1,
        trainings=2 * per_type,
        revenue_trace=[best_rev],
        algorithm="brute",
        trainings_per_type=per_type,
        extra={"mode": mode, "plans_evaluated": evaluated},
    )
