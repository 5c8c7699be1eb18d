"""The planning loop against exhaustive search on a four-station city.

With four candidate stations, slow chargers costing 2 and fast chargers 3,
every plan within the budget can be enumerated.  The optimum is computed on
the ground-truth demand; the planner only ever sees its own predictions.

    python demos/planner_vs_optimum.py
"""
from chargeplan.features import CityFeatures
from chargeplan.planner import PlannerConfig, brute_force_optimal, dataset_revenue, tio
from chargeplan.predictor import TrainConfig
from chargeplan.synth import SynthConfig, generate_city_pair


def main(budgets=(6, 9, 12, 15)):
    src, tgt, oracle = generate_city_pair(SynthConfig(n_stations=20, n_target_stations=4, cost_slow=2,
                                                      cost_fast=3, seed=0))
    truth = lambda plan: oracle.demand(tgt, plan)
    sf, tf = CityFeatures(src), CityFeatures(tgt)
    print("budget  plans  optimum  planner  ratio  trainings/type")
    for B in budgets:
        pc = PlannerConfig(budget=B)
        best = brute_force_optimal(tgt, None, None, pc, demand_fn=truth)
        res = tio(src, tgt, TrainConfig(epochs=40, lr=0.05, seed=0), pc, source_features=sf, target_features=tf)
        got = dataset_revenue(tgt, res.plan, truth(res.plan))
        print(f"{B:6d}  {best.extra['plans_evaluated']:5d}  {best.predicted_revenue:7.2f}  {got:7.2f}  "
              f"{got / best.predicted_revenue:5.3f}  {res.trainings_per_type:14d}")
    print("\na retraining brute force would need one fit per plan and type; the planner needs a handful")


if __name__ == "__main__":
    main()
