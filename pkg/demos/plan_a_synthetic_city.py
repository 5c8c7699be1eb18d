"""Plan chargers for a synthetic target city and compare against the baselines.

The synthetic generator gives us a ground-truth demand oracle, so every plan
can be scored by its true revenue rather than by the predictor's opinion.

    python demos/plan_a_synthetic_city.py
"""
import numpy as np

from chargeplan.planner import (
    PlannerConfig,
    baseline_cg,
    baseline_even,
    baseline_park,
    baseline_pop,
    dataset_revenue,
    plan_cost,
    tio,
)
from chargeplan.predictor import Architecture, TrainConfig
from chargeplan.synth import SynthConfig, generate_city_pair


def main():
    # a labelled source city and an unlabelled target city with shifted context
    src, tgt, oracle = generate_city_pair(SynthConfig(n_stations=20, n_target_stations=10, cost_slow=2,
                                                      cost_fast=3, domain_shift=0.5, seed=7))
    truth = lambda plan: oracle.demand(tgt, plan)
    print(f"source: {len(src.stations)} stations with demand; target: {len(tgt.stations)} candidates")

    budget = 50
    pc = PlannerConfig(budget=budget)
    res = tio(src, tgt, TrainConfig(epochs=20, lr=0.05, seed=0), pc, arch=Architecture(conv_channels=(8, 16)))
    print(f"\nplanning loop: {res.iterations} iterations, {res.trainings} trainings, stop = {res.extra['stop']}")
    print("predicted revenue per iteration:", np.round(res.revenue_trace, 2))

    plans = {
        "tio": res.plan,
        "even": baseline_even(tgt, pc),
        "cg (knows true demand)": baseline_cg(tgt, truth, pc),
        "park": baseline_park(tgt, pc),
        "pop": baseline_pop(tgt, pc),
    }
    print(f"\ntrue revenue at budget {budget}:")
    for name, plan in plans.items():
        print(f"  {name:24s} {dataset_revenue(tgt, plan, truth(plan)):8.2f}   cost {plan_cost(plan, tgt):5.0f}   "
              f"chargers {plan.total_chargers()}")


if __name__ == "__main__":
    main()
