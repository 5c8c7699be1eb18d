"""Command-line driver: ingest, features, train, plan, compare, analyze, synth, count, bound.

Every subcommand reads an optional flat ``key = value`` config file
(``--config``); command-line ``--set key=value`` pairs override it.  Exit
codes: 0 success, 1 validation error, 2 infeasible or capped search,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .citydata import (
    ChargerPlan,
    CityDataset,
    DataValidationError,
    load_city_dataset,
    read_plan_csv,
    write_city_dataset,
)
from .features import CONTEXT_NAMES, PROFILE_NAMES, CityFeatures, fit_normalizer, mmd_with_bandwidth, pearson_analysis
from .planner import (
    InfeasibleError,
    PlannerConfig,
    PlanResult,
    SearchSpaceTooLarge,
    baseline_cg,
    baseline_even,
    baseline_park,
    baseline_pop,
    brute_force_optimal,
    count_plans,
    dataset_revenue,
    iteration_bound,
    iteration_bound_revenue_cap,
    plan_cost,
    tio,
    write_plan_outputs,
)
from .planner.report import config_hash
from .predictor import Architecture, ModelPair, TrainConfig, TrainingDivergedError, fit_models, load_checkpoint, save_checkpoint
from .predictor import evaluate_rmse, predict_city
from .synth import SynthConfig, generate_city_pair

log = logging.getLogger("chargeplan")

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

ALPHA_GRID = (0.0, 0.3, 0.5, 0.8, 1.0)
LR_GRID = (0.01, 0.005, 0.001, 0.0005, 0.0001)


@dataclass
class RunConfig:
    """All tunable settings of a run, with the defaults used throughout."""

    T: int = 13
    r: float = 1000.0
    lam: int = 5
    alpha: float = 0.3
    beta: float = 0.1
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 30
    dropout: float = 0.25
    alpha_grid: tuple = ALPHA_GRID
    lr_grid: tuple = LR_GRID
    conv_channels: tuple = (16, 32)
    theta: float = 0.1
    u_slow: int = 40
    u_fast: int = 20
    e_slow: float = 33000.0
    e_fast: float = 54000.0
    budget: float = 0.0
    brute_cap: int = 100_000
    holdout: float = 0.2
    seed: int = 0

    def train_config(self, **kw) -> TrainConfig:
        base = dict(alpha=self.alpha, beta=self.beta, lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                    dropout_rate=self.dropout, seed=self.seed)
        base.update(kw)
        return TrainConfig(**base)

    def planner_config(self, budget: Optional[float] = None) -> PlannerConfig:
        return PlannerConfig(budget=self.budget if budget is None else budget, theta=self.theta,
                             u_slow=self.u_slow, u_fast=self.u_fast)

    def architecture(self) -> Architecture:
        return Architecture(lam=self.lam, T=self.T, conv_channels=tuple(self.conv_channels), dropout=self.dropout)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(float(raw))
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [x for x in raw.replace(";", ",").split(",") if x.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(float(x)) if kind is int else kind(x) for x in items)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {no}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_run_config(path: Optional[str], overrides: Optional[list]) -> RunConfig:
    raw = parse_config_text(Path(path).read_text()) if path else {}
    for item in overrides or []:
        raw.update(parse_config_text(item))
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    vals = {}
    for k, v in raw.items():
        if k not in known:
            raise ValueError(f"unknown config key {k!r}")
        vals[k] = _coerce(k, v, getattr(cfg, k))
    return replace(cfg, **vals)


def _write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _load_pair(args, cfg: RunConfig) -> tuple[CityDataset, CityDataset]:
    src = load_city_dataset(args.source, "source", T=cfg.T, name="source")
    tgt = load_city_dataset(args.target, "target", T=cfg.T, name="target")
    return src, tgt


def _target_plan(args, tgt: CityDataset) -> ChargerPlan:
    if getattr(args, "target_plan", None):
        plan = read_plan_csv(args.target_plan)
        if not plan.covers(tgt.station_ids):
            raise DataValidationError(["target plan does not cover every target station"])
        return ChargerPlan({s: plan[s] for s in tgt.station_ids})
    return tgt.deployed_plan()


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, cfg: RunConfig) -> int:
    try:
        ds = load_city_dataset(args.path, args.role, T=cfg.T if args.T is None else args.T)
    except DataValidationError as exc:
        report = {"valid": False, "errors": exc.issues}
        code = EXIT_VALIDATION
    else:
        report = {
            "valid": True, "errors": [], "role": ds.role, "stations": len(ds.stations), "T": ds.T,
            "pois": len(ds.pois), "transport": len(ds.transport), "road_nodes": len(ds.roads.lat),
            "road_edges": len(ds.roads.edge_u),
            "parking_sessions": ds.parking_sessions is not None, "population": ds.population is not None,
        }
        code = EXIT_OK
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return code


def cmd_features(args, cfg: RunConfig) -> int:
    """Raw context and profile features per station, one CSV row each."""
    ds = load_city_dataset(args.path, args.role, T=cfg.T)
    feats = CityFeatures(ds, cfg.r, cfg.lam)
    plan = read_plan_csv(args.plan) if args.plan else ds.deployed_plan()
    frame = pd.DataFrame(np.hstack([feats.context, feats.profiles(plan)]), columns=list(CONTEXT_NAMES + PROFILE_NAMES))
    frame.insert(0, "station_id", list(ds.station_ids))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(args.out, index=False)
    return EXIT_OK


def _holdout_split(n: int, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 7])
    order = rng.permutation(n)
    k = int(round(frac * n))
    if n >= 2:
        k = min(max(k, 1), n - 1)
    else:
        k = 0
    return np.sort(order[k:]), np.sort(order[:k])


def _subset_city(ds: CityDataset, idx: np.ndarray) -> CityDataset:
    return replace(ds, stations=tuple(ds.stations[i] for i in idx))


def cmd_train(args, cfg: RunConfig) -> int:
    src, tgt = _load_pair(args, cfg)
    plan = _target_plan(args, tgt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arch = cfg.architecture()
    if args.grid:
        # score each (alpha, lr) by RMSE on held-out source stations
        fit_idx, hold_idx = _holdout_split(len(src.stations), cfg.holdout, cfg.seed)
        fit_ds, hold_ds = _subset_city(src, fit_idx), _subset_city(src, hold_idx)
        f_fit, f_hold, f_tgt = (CityFeatures(d, cfg.r, cfg.lam) for d in (fit_ds, hold_ds, tgt))
        alphas = args.alphas if args.alphas else cfg.alpha_grid
        lrs = args.lrs if args.lrs else cfg.lr_grid
        rows = []
        for a in alphas:
            for lr in lrs:
                tc = cfg.train_config(alpha=a, lr=lr)
                models = fit_models(f_fit, f_tgt, plan, tc, arch)
                ys, yf = hold_ds.demand_arrays()
                ps, pf = predict_city(models, f_hold, hold_ds.deployed_plan()) if len(hold_idx) else (ys, yf)
                rows.append({"alpha": a, "lr": lr,
                             "rmse_slow": evaluate_rmse(ps, targets=ys), "rmse_fast": evaluate_rmse(pf, targets=yf)})
        for r in rows:
            r["rmse_mean"] = 0.5 * (r["rmse_slow"] + r["rmse_fast"])
        best = min(rows, key=lambda r: (r["rmse_mean"], r["alpha"], -r["lr"]))
        pd.DataFrame(rows).to_csv(out / "grid.csv", index=False)
        cfg = replace(cfg, alpha=best["alpha"], lr=best["lr"])
    tc = cfg.train_config()
    sf, tf = CityFeatures(src, cfg.r, cfg.lam), CityFeatures(tgt, cfg.r, cfg.lam)
    models = fit_models(sf, tf, plan, tc, arch)
    metrics = {"config_hash": config_hash(cfg.to_dict()), "seed": cfg.seed, "alpha": cfg.alpha, "lr": cfg.lr}
    ys, yf = src.demand_arrays()
    ps, pf = predict_city(models, sf, src.deployed_plan())
    metrics["source_rmse_slow"] = evaluate_rmse(ps, targets=ys)
    metrics["source_rmse_fast"] = evaluate_rmse(pf, targets=yf)
    for kind in ("slow", "fast"):
        save_checkpoint(models[kind], out / f"model_{kind}.json")
        metrics[f"trace_{kind}"] = models[kind].trace
    if args.grid:
        metrics["grid"] = rows
        metrics["best"] = best
    _write_json(metrics, out / "metrics.json")
    return EXIT_OK


def _load_models(directory) -> ModelPair:
    d = Path(directory)
    return ModelPair(slow=load_checkpoint(d / "model_slow.json"), fast=load_checkpoint(d / "model_fast.json"))


def _known_demands(path, tgt: CityDataset, T: int):
    """Per-station demand series from a stations-style CSV with demand columns."""
    df = pd.read_csv(path, dtype={"id": str}).set_index("id")
    missing = [s for s in tgt.station_ids if s not in df.index]
    if missing:
        raise DataValidationError([f"demand file lacks station {missing[0]}"])
    ys = df.loc[list(tgt.station_ids), [f"demand_slow_{t}" for t in range(1, T + 1)]].to_numpy(float)
    yf = df.loc[list(tgt.station_ids), [f"demand_fast_{t}" for t in range(1, T + 1)]].to_numpy(float)
    return ys, yf


def run_algorithm(name: str, src: CityDataset, tgt: CityDataset, cfg: RunConfig, pc: PlannerConfig,
                  models: Optional[ModelPair] = None, demands=None, arch: Optional[Architecture] = None,
                  score: bool = True) -> PlanResult:
    """Run one planning algorithm.

    Baseline plans are scored with ``models`` when given, else with a model
    pair trained on the plan itself; ``score=False`` skips scoring.
    """
    arch = arch or cfg.architecture()
    tc = cfg.train_config()
    sf, tf = CityFeatures(src, cfg.r, cfg.lam), CityFeatures(tgt, cfg.r, cfg.lam)
    if name == "tio":
        return tio(src, tgt, tc, pc, arch=arch, source_features=sf, target_features=tf)
    if name == "brute":
        return brute_force_optimal(tgt, src, tc, pc, mode="retrain-per-plan", cap=cfg.brute_cap, arch=arch,
                                   source_features=sf, target_features=tf)
    if name == "even":
        plan = baseline_even(tgt, pc)
    elif name == "park":
        plan = baseline_park(tgt, pc)
    elif name == "pop":
        plan = baseline_pop(tgt, pc)
    elif name == "cg":
        if demands is None:
            base = models or fit_models(sf, tf, baseline_even(tgt, pc), tc, arch)
            demands = predict_city(base, tf, baseline_even(tgt, pc))
        plan = baseline_cg(tgt, demands, pc)
    else:
        raise ValueError(f"unknown algorithm {name!r}")
    rev, trainings = float("nan"), 0
    if score:
        scorer = models
        if scorer is None:
            scorer, trainings = fit_models(sf, tf, plan, tc, arch), 2
        rev = dataset_revenue(tgt, plan, predict_city(scorer, tf, plan))
    return PlanResult(plan=plan, predicted_revenue=rev, cost=plan_cost(plan, tgt), iterations=1,
                      trainings=trainings, revenue_trace=[rev], algorithm=name, trainings_per_type=trainings // 2)


def cmd_plan(args, cfg: RunConfig) -> int:
    src, tgt = _load_pair(args, cfg)
    budget = cfg.budget if args.budget is None else args.budget
    pc = cfg.planner_config(budget)
    models = _load_models(args.checkpoint) if args.checkpoint else None
    demands = _known_demands(args.demands, tgt, cfg.T) if args.demands else None
    res = run_algorithm(args.algorithm, src, tgt, cfg, pc, models=models, demands=demands)
    hashed = dict(cfg.to_dict(), budget=budget, algorithm=args.algorithm)
    write_plan_outputs(res, tgt.station_ids, args.out, budget, cfg.seed, hashed)
    return EXIT_OK


def _synth_config(path: Optional[str], overrides: Optional[list], seed: int) -> SynthConfig:
    raw = parse_config_text(Path(path).read_text()) if path else {}
    for item in overrides or []:
        raw.update(parse_config_text(item))
    base = SynthConfig(seed=seed)
    known = {f.name for f in fields(SynthConfig)}
    vals = {}
    for k, v in raw.items():
        if k not in known or k in ("demand_slow", "demand_fast"):
            raise ValueError(f"unknown or unsupported synth key {k!r}")
        d = getattr(base, k)
        vals[k] = None if v.lower() == "none" else _coerce(k, v, d if d is not None else 0)
    return replace(base, **vals)


def cmd_synth(args, cfg: RunConfig) -> int:
    sc = _synth_config(args.synth_config, args.synth_set, cfg.seed)
    src, tgt, oracle = generate_city_pair(sc)
    out = Path(args.out)
    write_city_dataset(src, out / "source")
    write_city_dataset(tgt, out / "target")
    _write_json({"synth_config": asdict(sc), "oracle": {
        "demand_slow": oracle.demand_slow, "demand_fast": oracle.demand_fast,
        "saturation": oracle.saturation, "cannibalization": oracle.cannibalization, "radius_m": oracle.radius_m,
    }}, out / "synth.json")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    """Sweep algorithms x budgets x seeds.

    Synthetic mode (default) regenerates a city pair per seed and scores
    every plan by its true revenue under the ground-truth oracle.  Real mode
    (``--source``/``--target``) scores plans by predicted revenue.
    """
    rows = []
    real = bool(args.source or args.target)
    if real and not (args.source and args.target):
        raise ValueError("real mode needs both --source and --target")
    for seed in args.seeds:
        if real:
            src, tgt = _load_pair(args, cfg)
            truth = None
        else:
            sc = _synth_config(args.synth_config, args.synth_set, seed)
            src, tgt, oracle = generate_city_pair(sc)
            truth = lambda plan, _t=tgt, _o=oracle: _o.demand(_t, plan)
        for budget in args.budgets:
            pc = cfg.planner_config(budget)
            run_cfg = replace(cfg, seed=seed, budget=budget)
            for name in args.algorithms:
                if real:
                    res = run_algorithm(name, src, tgt, run_cfg, pc)
                    revenue = res.predicted_revenue
                else:
                    if name == "brute":
                        res = brute_force_optimal(tgt, None, None, pc, mode="fixed-demands", demand_fn=truth,
                                                  cap=cfg.brute_cap)
                    else:
                        res = run_algorithm(name, src, tgt, run_cfg, pc, demands=truth if name == "cg" else None,
                                            score=name == "tio")
                    revenue = dataset_revenue(tgt, res.plan, truth(res.plan))
                rows.append({"algorithm": name, "budget": budget, "seed": seed, "revenue": revenue,
                             "predicted_revenue": res.predicted_revenue,
                             "cost": res.cost, "iterations": res.iterations, "trainings": res.trainings})
    frame = pd.DataFrame(rows, columns=["algorithm", "budget", "seed", "revenue", "predicted_revenue", "cost",
                                        "iterations", "trainings"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "compare.csv", index=False)
    curves = (frame.groupby(["algorithm", "budget"])["revenue"].agg(["mean", "min", "max"]).reset_index())
    _write_json({alg: g.drop(columns="algorithm").to_dict(orient="list") for alg, g in curves.groupby("algorithm")},
                out / "revenue_vs_budget.json")
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    src, tgt = _load_pair(args, cfg)
    sf, tf = CityFeatures(src, cfg.r, cfg.lam), CityFeatures(tgt, cfg.r, cfg.lam)
    tplan = _target_plan(args, tgt)
    ys, yf = src.demand_arrays()
    raw = np.hstack([sf.context, sf.profiles(src.deployed_plan())])
    names = list(CONTEXT_NAMES + PROFILE_NAMES)
    pearson = {}
    for kind, y in (("slow", ys), ("fast", yf)):
        pearson[kind] = [{"feature": n, "coefficient": c, "constant": k}
                         for n, c, k in pearson_analysis(raw, y.mean(axis=1), names)]
    ctx_norm = fit_normalizer(sf.context, tf.context)
    a, b = ctx_norm.apply(sf.context), ctx_norm.apply(tf.context)
    m_st, sigma = mmd_with_bandwidth(a, b)
    m_ss, _ = mmd_with_bandwidth(a, a, sigma)
    m_tt, _ = mmd_with_bandwidth(b, b, sigma)
    diag = {
        "pearson": pearson,
        "mmd": {"source_target": m_st, "source_source": m_ss, "target_target": m_tt, "bandwidth": sigma},
        "n_source": len(src.stations), "n_target": len(tgt.stations), "target_plan_chargers": tplan.total_chargers(),
        "config_hash": config_hash(cfg.to_dict()),
    }
    _write_json(diag, args.out)
    return EXIT_OK


def cmd_count(args, cfg: RunConfig) -> int:
    print(json.dumps({"n_stations": args.stations, "budget": args.budget,
                      "plans": str(count_plans(args.stations, args.budget))}))
    return EXIT_OK


def cmd_bound(args, cfg: RunConfig) -> int:
    tgt = load_city_dataset(args.target, "target", T=cfg.T)
    budget = cfg.budget if args.budget is None else args.budget
    pc = cfg.planner_config(budget)
    print(json.dumps({"budget": budget, "theta": pc.theta, "iteration_bound": iteration_bound(tgt, pc),
                      "revenue_cap_bound": iteration_bound_revenue_cap(tgt, pc)}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chargeplan", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="load and validate one city")
    s.add_argument("path")
    s.add_argument("--role", choices=("source", "target"), required=True)
    s.add_argument("--T", type=int)
    s.add_argument("--out")

    s = sub.add_parser("features", help="write per-station raw features")
    s.add_argument("path")
    s.add_argument("--role", choices=("source", "target"), required=True)
    s.add_argument("--plan")
    s.add_argument("--out", required=True)

    for name in ("train", "plan", "analyze"):
        s = sub.add_parser(name)
        s.add_argument("--source", required=True)
        s.add_argument("--target", required=True)
        s.add_argument("--target-plan")
        s.add_argument("--out", required=True)
        if name == "train":
            s.add_argument("--grid", action="store_true", help="search the alpha/lr grid on held-out source stations")
            s.add_argument("--alphas", type=float, nargs="+")
            s.add_argument("--lrs", type=float, nargs="+")
        if name == "plan":
            s.add_argument("--algorithm", choices=("tio", "even", "cg", "park", "pop", "brute"), default="tio")
            s.add_argument("--budget", type=float)
            s.add_argument("--checkpoint", help="directory holding model_slow.json and model_fast.json")
            s.add_argument("--demands", help="CSV of known target demand series (for cg)")

    s = sub.add_parser("synth", help="generate a synthetic city pair")
    s.add_argument("--out", required=True)
    s.add_argument("--synth-config")
    s.add_argument("--synth-set", action="append", default=[], metavar="KEY=VALUE")

    s = sub.add_parser("compare", help="algorithm x budget x seed sweep on synthetic pairs")
    s.add_argument("--out", required=True)
    s.add_argument("--algorithms", nargs="+", default=["tio", "even", "cg", "park", "pop"],
                   choices=("tio", "even", "cg", "park", "pop", "brute"))
    s.add_argument("--budgets", type=float, nargs="+", required=True)
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--source", help="real mode: source city directory")
    s.add_argument("--target", help="real mode: target city directory")
    s.add_argument("--synth-config")
    s.add_argument("--synth-set", action="append", default=[], metavar="KEY=VALUE")

    s = sub.add_parser("count", help="number of exact-budget unit-cost plans")
    s.add_argument("--stations", type=int, required=True)
    s.add_argument("--budget", type=int, required=True)

    s = sub.add_parser("bound", help="iteration bounds of the planning loop")
    s.add_argument("--target", required=True)
    s.add_argument("--budget", type=float)
    return p


COMMANDS = {
    "ingest": cmd_ingest, "features": cmd_features, "train": cmd_train, "plan": cmd_plan, "synth": cmd_synth,
    "compare": cmd_compare, "analyze": cmd_analyze, "count": cmd_count, "bound": cmd_bound,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_run_config(args.config, args.set)
        return COMMANDS[args.command](args, cfg)
    except DataValidationError as exc:
        print(json.dumps({"valid": False, "errors": exc.issues}, indent=2), file=sys.stderr)
        return EXIT_VALIDATION
    except (InfeasibleError, SearchSpaceTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TrainingDivergedError as exc:
        print(json.dumps({"error": "training diverged", "epoch": exc.epoch, "batch": exc.batch}), file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
