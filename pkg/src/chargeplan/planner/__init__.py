"""Budget-constrained charger planning."""
from .baselines import baseline_cg, baseline_even, baseline_park, baseline_pop, voronoi_mass
from .dpmk import DpTables, InfeasibleError, dp_mk, dp_tables, integer_costs, solve_mk
from .objective import (
    FineTunedPlanSets,
    PlannerConfig,
    build_finetuned_sets,
    dataset_revenue,
    initial_even_plan,
    plan_cost,
    revenue,
)
from .oracle import (
    SearchSpaceTooLarge,
    brute_force_optimal,
    count_feasible_plans,
    count_plans,
    enumerate_compositions,
    enumerate_plans,
)
from .report import config_hash, report_dict, write_plan_outputs
from .tio import PlanResult, iteration_bound, iteration_bound_revenue_cap, predict_finetuned, tio

__all__ = [
    "DpTables", "FineTunedPlanSets", "InfeasibleError", "PlanResult", "PlannerConfig", "SearchSpaceTooLarge",
    "baseline_cg", "baseline_even", "baseline_park", "baseline_pop", "brute_force_optimal",
    "build_finetuned_sets", "config_hash", "count_feasible_plans", "count_plans", "dataset_revenue",
    "dp_mk", "dp_tables", "enumerate_compositions", "enumerate_plans", "initial_even_plan", "integer_costs",
    "iteration_bound", "iteration_bound_revenue_cap", "plan_cost", "predict_finetuned", "report_dict",
    "revenue", "solve_mk", "tio", "voronoi_mass", "write_plan_outputs",
]
