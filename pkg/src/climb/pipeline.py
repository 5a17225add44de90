"""
Array-level steps shared by the CLI commands and the sweep runner.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from tensorkit import comm
from tensorkit.errors import DIM_MISMATCH
from tensorkit.utils import TensorError

from .config import FitConfig, FuseConfig, dataclass_non_defaults
from .degradation import DegradationSet, identity_degradation
from .metrics import MetricsReport, compute_metrics
from .model import (
    LmnModel,
    ModelKind,
    SemiBlindModel,
    count_params,
    load_model,
    normalize_rank_spec,
    ranks_for_budget,
    reconstruct,
)
from .solver import FitReport, fit, fit_single, initialize, perturb
from .synth import generate_ev_tensor

log = logging.getLogger("climb.pipeline")
log.setLevel(logging.INFO)


@dataclass
class FusionInputs:
    Y_H: np.ndarray
    Y_M: np.ndarray
    degradation: DegradationSet
    reference: np.ndarray | None = None
    truth: LmnModel | SemiBlindModel | None = None


def load_fusion_inputs(cfg: FuseConfig) -> FusionInputs:
    Y_H = comm.read_tensor(cfg.hsi)
    Y_M = comm.read_tensor(cfg.msi)
    deg = DegradationSet.load(cfg.degradation)
    if Y_M.shape != deg.dims_msi or Y_H.shape[2] != deg.dims_hsi[2]:
        raise TensorError(DIM_MISMATCH, f"HSI {Y_H.shape}, MSI {Y_M.shape} vs degradation SRI {deg.dims_sri}")
    if not cfg.blind and Y_H.shape != deg.dims_hsi:
        raise TensorError(DIM_MISMATCH, f"HSI {Y_H.shape} vs degradation HSI {deg.dims_hsi}")
    reference = comm.read_tensor(cfg.reference) if cfg.reference is not None else None
    if reference is not None and reference.shape != deg.dims_sri:
        raise TensorError(DIM_MISMATCH, f"reference {reference.shape} vs SRI {deg.dims_sri}")
    truth = load_model(cfg.truth) if cfg.truth is not None else None
    return FusionInputs(Y_H, Y_M, deg, reference, truth)


def start_model(inputs: FusionInputs, cfg: FuseConfig):
    deg = inputs.degradation
    if cfg.init == "standard":
        return initialize(inputs.Y_H, inputs.Y_M, deg, cfg.ranks, R=cfg.R, seed=cfg.seed, blind=cfg.blind)
    truth = inputs.truth
    if cfg.blind and isinstance(truth, LmnModel):
        truth = SemiBlindModel.from_model(truth, deg.P1, deg.P2)
    elif not cfg.blind and isinstance(truth, SemiBlindModel):
        truth = truth.base
    return perturb(truth, cfg.perturbation, cfg.seed)


def run_fusion(inputs: FusionInputs, cfg: FuseConfig) -> tuple:
    """(model, FitReport, MetricsReport or None)."""
    model0 = start_model(inputs, cfg)
    model, report = fit(inputs.Y_H, inputs.Y_M, inputs.degradation, model0, cfg.solver, inputs.reference)
    report.config = dataclass_non_defaults(cfg.solver)
    metrics = None
    if inputs.reference is not None:
        base = model.base if isinstance(model, SemiBlindModel) else model
        metrics = compute_metrics(inputs.reference, reconstruct(base), inputs.degradation.ratio)
    return model, report, metrics


def write_fit_outputs(out, report: FitReport, metrics: MetricsReport | None = None) -> list:
    written = [out / "fit_report.json", out / "trace.csv"]
    (out / "fit_report.json").write_text(json.dumps(report.as_dict(), indent=2))
    report.trace_frame().to_csv(out / "trace.csv", index=False)
    if metrics is not None:
        (out / "metrics.json").write_text(json.dumps(metrics.as_dict(), indent=2))
        metrics.to_frame().to_csv(out / "metrics.csv", index=False)
        written += [out / "metrics.json", out / "metrics.csv"]
    return written


########################################
### Single-tensor fits


def fit_start(kind, tensor: np.ndarray, rank_spec, seed=None) -> LmnModel:
    """Data-driven start for fit_single: the fusion initializer with identity operators."""
    kind = ModelKind(kind)
    ranks = normalize_rank_spec(kind, rank_spec)
    deg = identity_degradation(tensor.shape)
    return initialize(tensor, tensor, deg, ranks, seed=seed, frozen_cores=kind == ModelKind.LL1)


def model_grid(cfg: FitConfig, dims) -> list[tuple[str, object]]:
    if cfg.models:
        return [(m["kind"], m["rank_spec"]) for m in cfg.models]
    return [(kind, ranks_for_budget(kind, dims, cfg.budget, R=cfg.R, N=cfg.N)) for kind in cfg.kinds]


def run_fit_experiment(cfg: FitConfig) -> pd.DataFrame:
    """One row per (seed, model): parameter count and fitting NRE."""
    rows = []
    for seed in cfg.seeds:
        if cfg.input is not None:
            tensor = comm.read_tensor(cfg.input)
        else:
            _, tensor = generate_ev_tensor(seed=seed, **cfg.ev)
        for kind, rank_spec in model_grid(cfg, tensor.shape):
            model0 = fit_start(kind, tensor, rank_spec, seed)
            _, report = fit_single(tensor, model0, cfg.solver)
            rows.append(
                {
                    "seed": seed,
                    "kind": kind,
                    "rank_spec": json.dumps(rank_spec),
                    "params": count_params(kind, tensor.shape, rank_spec),
                    "nre": report.nre,
                    "iterations": report.iterations,
                    "stop_reason": report.stop_reason,
                }
            )
            log.info(f"seed {seed} {kind} {rank_spec}: NRE {report.nre:.4e}")
    return pd.DataFrame(rows)
