"""Plan output files and run reports."""
from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from ..citydata import write_plan_csv
from .tio import PlanResult

TIMESTAMP_KEYS = ("created_at",)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``, timestamps removed."""
    clean = {k: v for k, v in config.items() if k not in TIMESTAMP_KEYS}
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def report_dict(result: PlanResult, budget: float, seed: int, config: dict,
                timestamp: Optional[str] = None) -> dict:
    rep = {
        "algorithm": result.algorithm,
        "budget": budget,
        "cost": result.cost,
        "predicted_revenue": result.predicted_revenue,
        "iterations": result.iterations,
        "trainings": result.trainings,
        "trainings_per_type": result.trainings_per_type,
        "revenue_trace": list(result.revenue_trace),
        "seed": seed,
        "config_hash": config_hash(config),
    }
    for k, v in sorted(result.extra.items()):
        rep.setdefault(k, v)
    rep["created_at"] = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return rep


def write_report(rep: dict, path) -> None:
    Path(path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_plan_outputs(result: PlanResult, station_ids, directory, budget: float, seed: int,
                       config: dict) -> tuple[Path, Path]:
    """Write ``plan.csv`` and ``report.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    plan_path, rep_path = out / "plan.csv", out / "report.json"
    write_plan_csv(result.plan, plan_path, station_ids)
    write_report(report_dict(result, budget, seed, config), rep_path)
    return plan_path, rep_path
