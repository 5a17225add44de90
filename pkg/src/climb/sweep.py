"""
Grid sweep over (lam, eta, L, N) of one fusion problem. Each row writes its own JSON
under rows/ and is skipped when that file already exists; the table is merged at the end.
"""

import itertools
import json
import logging
from dataclasses import replace
from pathlib import Path

import pandas as pd
from joblib import Parallel, delayed

from .config import SweepConfig
from .pipeline import FusionInputs, load_fusion_inputs, run_fusion

log = logging.getLogger("climb.sweep")
log.setLevel(logging.INFO)

AXES = ("lam", "eta", "L", "N")


def grid_rows(grid: dict) -> list[dict]:
    axes = [a for a in AXES if a in grid]
    return [dict(zip(axes, values)) for values in itertools.product(*(grid[a] for a in axes))]


def row_id(params: dict) -> str:
    return "_".join(f"{k}={params[k]}" for k in AXES if k in params)


def run_row(inputs: FusionInputs, cfg: SweepConfig, params: dict, rows_dir: Path) -> dict:
    path = rows_dir / f"{row_id(params)}.json"
    if path.exists():
        log.debug(f"skip finished row {path.name}")
        return json.loads(path.read_text())
    base = cfg.fuse
    L, M, N = base.ranks
    L = M = params.get("L", L)
    N = params.get("N", N)
    reg = replace(base.solver.reg, lam=params.get("lam", base.solver.reg.lam), eta=params.get("eta", base.solver.reg.eta))
    fuse = replace(base, ranks=(L, M, N), solver=replace(base.solver, reg=reg))
    _, report, metrics = run_fusion(inputs, fuse)
    row = dict(params)
    row.update(
        {
            "iterations": report.iterations,
            "objective": report.final_objective,
            "stop_reason": report.stop_reason,
            "sam_proxy": report.sam_proxy,
        }
    )
    if metrics is not None:
        row.update(metrics.as_dict())
    path.write_text(json.dumps(row, indent=2))
    return row


def run_sweep(cfg: SweepConfig, out: Path) -> pd.DataFrame:
    inputs = load_fusion_inputs(cfg.fuse)
    rows_dir = Path(out) / "rows"
    rows_dir.mkdir(parents=True, exist_ok=True)
    params = grid_rows(cfg.grid)
    log.info(f"sweep: {len(params)} rows, n_jobs={cfg.n_jobs}")
    Parallel(n_jobs=cfg.n_jobs)(delayed(run_row)(inputs, cfg, p, rows_dir) for p in params)
    # merge in grid order from the row files
    table = pd.DataFrame([json.loads((rows_dir / f"{row_id(p)}.json").read_text()) for p in params])
    table.to_csv(Path(out) / "sweep.csv", index=False)
    return table
