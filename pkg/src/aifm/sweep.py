"""Parameter sweeps over a base config, with per-run and aggregated CSV ledgers."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import AIFMError
from .pipeline import load_report, run_pipeline

log = logging.getLogger(__name__)

METRICS = ("re1", "re2", "re3", "re4")
RUNS_CSV = "sweep_runs.csv"
AGGREGATE_CSV = "sweep_aggregate.csv"


@dataclass
class SweepResult:
    keys: list
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)


def combinations(grid: dict) -> list[tuple]:
    """Cartesian product of the grid values; an empty grid has no combinations."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        return []
    return list(itertools.product(*grid.values()))


def _default_runner(cfg: ExperimentConfig, out: Path) -> dict:
    run_pipeline(cfg, out)
    return load_report(out).to_dict()


def sweep(base: ExperimentConfig, grid: dict, out, seeds=None, runner=None) -> SweepResult:
    """Run every grid combination for every seed and write the two ledgers.

    ``runner(cfg, run_dir) -> dict with re1..re4`` defaults to the full
    pipeline. A failing run is recorded with status ``failed`` and its error
    message; the sweep carries on with the remaining runs.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runner = runner or _default_runner
    seeds = [base.seed] if seeds is None else list(seeds)
    keys = list(grid)
    res = SweepResult(keys)
    for ci, combo in enumerate(combinations(grid)):
        values = dict(zip(keys, combo))
        per_seed = []
        for seed in seeds:
            row = {"combination": ci, **values, "seed": seed, "status": "ok", "error": ""}
            run_dir = out / f"run_{ci:03d}_seed{seed}"
            try:
                cfg = base.with_overrides(dict(values, seed=seed))
                cfg = cfg.with_overrides({"output.dir": str(run_dir)})
                rep = runner(cfg, run_dir)
                row.update({m: rep.get(m) for m in METRICS})
            except (AIFMError, ValueError, OSError, ArithmeticError) as exc:
                log.warning("sweep run %d seed %s failed: %s", ci, seed, exc)
                row.update({m: "" for m in METRICS}, status="failed", error=str(exc))
            res.rows.append(row)
            per_seed.append(row)
        agg = {"combination": ci, **values, "runs": len(per_seed),
               "ok": sum(r["status"] == "ok" for r in per_seed)}
        for m in METRICS:
            vals = [r[m] for r in per_seed if r["status"] == "ok" and r[m] is not None]
            agg[f"{m}_mean"] = float(np.mean(vals)) if vals else None
            agg[f"{m}_std"] = float(np.std(vals)) if vals else None
        res.aggregates.append(agg)
    _write(out / RUNS_CSV, ["combination", *keys, "seed", "status", *METRICS, "error"], res.rows)
    agg_cols = ["combination", *keys, "runs", "ok"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    _write(out / AGGREGATE_CSV, agg_cols, res.aggregates)
    return res


def _cell(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return v


def _write(path: Path, cols, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])
