"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also repeated in
the terminal summary) before asserting.
"""
import itertools
import json
import math
import time

import numpy as np
import pytest

from chargeplan.citydata import POI_CATEGORIES, ChargerPlan
from chargeplan.cli import main
from chargeplan.features import CityFeatures, extract_context_features, mmd
from chargeplan.planner import (
    InfeasibleError,
    PlannerConfig,
    baseline_even,
    baseline_park,
    baseline_pop,
    brute_force_optimal,
    count_feasible_plans,
    count_plans,
    dataset_revenue,
    dp_mk,
    enumerate_compositions,
    iteration_bound,
    plan_cost,
    tio,
)
from chargeplan.planner.objective import FineTunedPlanSets
from chargeplan.predictor import (
    Architecture,
    PredictorModel,
    TrainConfig,
    build_instances,
    evaluate_rmse,
    gradient_check,
    loss_domain,
    loss_ranking,
    train,
)
from chargeplan.predictor.model import city_instances, fit_normalizers
from chargeplan.synth import SynthConfig, generate_city_pair

from conftest import make_city, station

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------- 1

def _random_mk(rng):
    n = int(rng.integers(1, 7))
    options, demands, costs = [], [], []
    for _ in range(n):
        k = int(rng.integers(1, 6))
        # option j stands for j slow chargers of this station
        options.append(tuple((j, 0) for j in range(k)))
        # dyadic utilizations keep every revenue sum exact in floating point
        u = rng.integers(0, 9, (k, 1)) / 8.0
        demands.append((u, np.zeros((k, 1))))
        costs.append((int(rng.integers(1, 6)), 1))
    prices = (rng.integers(1, 10, (n, 1)).astype(float), np.ones((n, 1)))
    return options, demands, prices, costs, int(rng.integers(0, 21))


def _enumerate_mk(options, demands, prices, costs, B):
    best = -math.inf
    for pick in itertools.product(*[range(len(o)) for o in options]):
        cost = sum(options[i][j][0] * costs[i][0] for i, j in enumerate(pick))
        if cost <= B:
            best = max(best, sum(options[i][j][0] * demands[i][0][j, 0] * prices[0][i, 0]
                                 for i, j in enumerate(pick)))
    return best


def test_criterion_1_dp_optimality(report_criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = checked = 0
    for _ in range(200):
        options, demands, prices, costs, B = _random_mk(rng)
        ids = tuple(f"c{i}" for i in range(len(options)))
        sets = FineTunedPlanSets(station_ids=ids, options=tuple(options))
        ref = _enumerate_mk(options, demands, prices, costs, B)
        try:
            plan, value = dp_mk(sets, demands, prices, costs, B)
        except InfeasibleError:
            mismatches += ref != -math.inf
            continue
        checked += 1
        spent = sum(plan[s][0] * costs[i][0] for i, s in enumerate(ids))
        mismatches += value != ref or spent > B
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10.0
    report_criterion(1, ok, f"{mismatches} mismatches over 200 instances ({checked} feasible), {elapsed:.2f} s")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_plan_counting(report_criterion):
    bad = [(n, B) for n in range(1, 4) for B in range(9)
           if count_plans(n, B) != sum(1 for _ in enumerate_compositions(2 * n, B))]
    big = count_plans(5, 100)
    ok = not bad and big == math.comb(109, 9)
    report_criterion(2, ok, f"n<=3, B<=8 mismatches {bad}; count_plans(5,100) = {big}")
    assert ok


# ---------------------------------------------------------------- 3

def test_criterion_3_gradient_check(report_criterion):
    arch = Architecture(lam=3, d=4, T=2, conv_channels=(2, 2), profile_widths=(3, 3), demand_widths=(4, 3),
                        embed_dim=2, domain_width=3, dropout=0.0)
    rng = np.random.default_rng(0)
    src = build_instances(rng.random((4, 3, 4)), rng.random((4, 5)), 2, targets=rng.random((4, 2)), domain=0)
    tgt = build_instances(rng.random((3, 3, 4)) + 0.3, rng.random((3, 5)), 2, domain=1)
    model = PredictorModel.initialize(arch, seed=5)
    # move zero biases off the ReLU kinks so central differences are valid
    brng = np.random.default_rng(5)
    for k, v in model.params.items():
        if k.endswith(("_b", "_b1", "_b2", "_b3")) and not k.startswith("bn"):
            v += brng.uniform(0.05, 0.15, v.shape)
    t0 = time.perf_counter()
    err, per = gradient_check(model, src, tgt, TrainConfig(alpha=0.4, beta=0.3), eps=1e-4, return_details=True)
    elapsed = time.perf_counter() - t0
    n = model.n_parameters()
    ok = n <= 2000 and err < 1e-3 and elapsed < 60 and any(k.startswith("dom_") for k in per)
    report_criterion(3, ok, f"max rel err {err:.2e} over {n} parameters, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_planner_bound_and_monotonicity(report_criterion):
    arch = Architecture(conv_channels=(4, 8), profile_widths=(8, 8), demand_widths=(16, 8))
    violations, iters, bounds = [], [], []
    for seed in range(20):
        src, tgt, _ = generate_city_pair(SynthConfig(n_stations=12, n_target_stations=10, seed=300 + seed,
                                                     domain_shift=0.5))
        # about 50 chargers at the mean unit cost
        budget = 50 * 0.5 * (33000 + 54000)
        cfg = PlannerConfig(budget=budget)
        res = tio(src, tgt, TrainConfig(epochs=3, lr=0.05, seed=seed), cfg, arch=arch)
        bound = iteration_bound(tgt, cfg)
        iters.append(res.iterations)
        bounds.append(bound)
        accepted = res.revenue_trace[:-1] if res.extra["stop"] == "threshold" else res.revenue_trace
        if res.iterations > bound:
            violations.append((seed, "bound"))
        if any(b - a <= cfg.theta for a, b in zip(accepted, accepted[1:])):
            violations.append((seed, "gain"))
        if plan_cost(res.plan, tgt) > budget:
            violations.append((seed, "budget"))
    ok = not violations
    report_criterion(4, ok, f"{len(violations)} violations over 20 runs; iterations {min(iters)}..{max(iters)}, "
                     f"smallest bound {min(bounds):.3g}")
    assert ok


# ---------------------------------------------------------------- 5

FIG8 = dict(n_stations=20, n_target_stations=4, cost_slow=2, cost_fast=3, domain_shift=0.0, seed=0)


def test_criterion_5_planner_vs_optimum(report_criterion):
    src, tgt, oracle = generate_city_pair(SynthConfig(**FIG8))
    truth = lambda plan: oracle.demand(tgt, plan)
    sf, tf = CityFeatures(src), CityFeatures(tgt)
    tc = TrainConfig(epochs=40, lr=0.05, seed=0)
    cells, ok = [], True
    for B in (6, 9, 12, 15):
        pc = PlannerConfig(budget=B)
        best = brute_force_optimal(tgt, None, None, pc, demand_fn=truth)
        res = tio(src, tgt, tc, pc, source_features=sf, target_features=tf)
        ratio = dataset_revenue(tgt, res.plan, truth(res.plan)) / best.predicted_revenue
        ok &= ratio >= 0.95 and res.trainings_per_type <= 5 and plan_cost(res.plan, tgt) <= B
        cells.append(f"B={B}: {ratio:.3f} ({res.trainings_per_type}/type)")
    # the brute-force training count follows the enumeration size
    tiny = TrainConfig(epochs=1, lr=0.05, seed=0)
    arch = Architecture(conv_channels=(2, 4), profile_widths=(4, 4), demand_widths=(8, 4))
    small_src, small_tgt, _ = generate_city_pair(SynthConfig(**dict(FIG8, n_stations=6)))
    counts = []
    for B in (3, 6):
        res = brute_force_optimal(small_tgt, small_src, tiny, PlannerConfig(budget=B), mode="retrain-per-plan",
                                  arch=arch)
        counts.append((res.extra["plans_evaluated"], res.trainings_per_type))
    analytic = [count_feasible_plans([(2, 3)] * 4, B, 40, 20) for B in (6, 9, 12, 15)]
    grows = counts[0][1] < counts[1][1] and all(p == t for p, t in counts) and analytic == sorted(analytic)
    ok &= grows
    report_criterion(5, ok, "; ".join(cells) + f"; brute trainings/type {[t for _, t in counts]} at B=3,6, "
                     f"plans at B=6..15 {analytic}")
    assert ok


# ---------------------------------------------------------------- 6

def test_criterion_6_domain_adaptation(report_criterion):
    rmse = {0.1: [], 0.0: []}
    gap = {0.1: [], 0.0: []}
    for seed in range(5):
        src_ds, tgt_ds, oracle = generate_city_pair(SynthConfig(domain_shift=1.0, seed=seed, n_stations=30,
                                                                n_target_stations=30))
        rng = np.random.default_rng(seed)
        plan = ChargerPlan.from_arrays(tgt_ds.station_ids, rng.integers(0, 11, 30), rng.integers(0, 7, 30))
        ys, _ = oracle.demand(tgt_ds, plan)
        fs, ft = CityFeatures(src_ds), CityFeatures(tgt_ds)
        cn, pn = fit_normalizers(fs, ft, plan)
        src = city_instances(fs, src_ds.deployed_plan(), cn, pn, targets=src_ds.demand_arrays()[0])
        tgt = city_instances(ft, plan, cn, pn, targets=ys.ravel(), domain=1)
        for beta in (0.1, 0.0):
            m = train(src, tgt, TrainConfig(lr=0.05, epochs=60, beta=beta, use_domain=True, seed=seed),
                      arch=Architecture())
            rmse[beta].append(evaluate_rmse(m, tgt))
            gap[beta].append(mmd(m.shared_features(src), m.shared_features(tgt)))
    med = {b: float(np.median(v)) for b, v in rmse.items()}
    mmed = {b: float(np.median(v)) for b, v in gap.items()}
    ok = med[0.1] < med[0.0] and mmed[0.1] < mmed[0.0]
    report_criterion(6, ok, f"median target RMSE {med[0.1]:.4f} (beta=0.1) vs {med[0.0]:.4f} (beta=0); "
                     f"median MMD {mmed[0.1]:.4f} vs {mmed[0.0]:.4f}")
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_baseline_ordering(report_criterion):
    arch = Architecture(conv_channels=(8, 16))
    rows = []
    for seed in range(20):
        # proxy_alignment=0 gives proxies unrelated to demand
        src, tgt, oracle = generate_city_pair(SynthConfig(n_stations=20, n_target_stations=6, cost_slow=2,
                                                          cost_fast=3, domain_shift=0.5, proxy_alignment=0.0,
                                                          seed=100 + seed))
        truth = lambda plan, _t=tgt, _o=oracle: _o.demand(_t, plan)
        # the even plan puts 3 slow and 2 fast chargers at every station
        pc = PlannerConfig(budget=90)
        res = tio(src, tgt, TrainConfig(epochs=20, lr=0.1, batch_size=32, seed=seed), pc, arch=arch)
        plans = (res.plan, baseline_even(tgt, pc), baseline_park(tgt, pc), baseline_pop(tgt, pc))
        rows.append([dataset_revenue(tgt, p, truth(p)) for p in plans])
    rev = np.array(rows)
    beats_even = float(np.mean(rev[:, 0] >= rev[:, 1]))
    med = float(np.median(rev[:, 0]))
    ok = beats_even >= 0.8 and rev[:, 2].max() <= med and rev[:, 3].max() <= med
    report_criterion(7, ok, f"planner >= Even in {beats_even:.0%}; planner median {med:.2f}, "
                     f"max Park {rev[:, 2].max():.2f}, max Pop {rev[:, 3].max():.2f}")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_loss_identities(report_criterion):
    lr_ = loss_ranking([0.3, 0.3], [0.1, 0.9])
    ld = loss_domain([0.5], [1])
    x = np.random.default_rng(0).random((10, 4))
    lm = mmd(x, x)
    ds = make_city([station("a", 30.0, 120.0)], pois=[(30.0, 120.0, c) for c in POI_CATEGORIES])
    ent = extract_context_features(ds, "a", 1000.0)[16]
    ok = (abs(lr_ - math.log(2) / 2) <= 1e-9 and abs(ld - math.log(2)) <= 1e-9 and lm <= 1e-12
          and abs(ent - math.log(8)) <= 1e-9)
    report_criterion(8, ok, f"ranking {lr_:.12f}, domain {ld:.12f}, mmd(X,X) {lm:.1e}, entropy {ent:.12f}")
    assert ok


# ---------------------------------------------------------------- 9

def test_criterion_9_reproducibility(tmp_path, report_criterion):
    common = ["--set", "epochs=3", "--set", "conv_channels=4,8", "--set", "seed=3"]
    city = tmp_path / "city"
    assert main(common + ["synth", "--out", str(city), "--synth-set", "n_stations=10", "--synth-set",
                          "n_target_stations=4", "--synth-set", "cost_slow=2", "--synth-set", "cost_fast=3"]) == 0
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["ingest", str(city / "source"), "--role", "source"]) == 0
        assert main(["ingest", str(city / "target"), "--role", "target"]) == 0
        assert main(common + ["train", "--source", str(city / "source"), "--target", str(city / "target"),
                              "--out", str(d / "ck")]) == 0
        assert main(common + ["plan", "--budget", "12", "--source", str(city / "source"), "--target",
                              str(city / "target"), "--out", str(d / "plan")]) == 0
        rep = json.loads((d / "plan" / "report.json").read_text())
        rep.pop("created_at")
        outputs.append(((d / "plan" / "plan.csv").read_bytes(), json.dumps(rep, sort_keys=True),
                        (d / "ck" / "model_slow.json").read_bytes()))
    ok = outputs[0] == outputs[1]
    report_criterion(9, ok, "plan.csv, report (without created_at) and checkpoints byte-identical" if ok
                     else "runs differ")
    assert ok
