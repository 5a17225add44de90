"""
Command line: climb <command> --config run.json [--output-dir DIR] [--verbose]

Commands: simulate, fuse, fit, metrics, spectrum, smoothness, sweep. Every parameter lives
in the JSON config. Errors are reported as one JSON line on stderr with exit code 1
(2 for configuration errors).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from tensorkit import comm
from tensorkit.utils import ConfigError, TensorError

from .config import COMMANDS, load_config
from .degradation import add_noise, degrade_spatial, degrade_spectral, load_preset, make_degradation
from .metrics import compute_metrics, per_band_metrics
from .model import SemiBlindModel, reconstruct, save_model
from .pipeline import load_fusion_inputs, run_fit_experiment, run_fusion, write_fit_outputs
from .synth import generate, smoothness_profile, sparsity_count, spectrum_frame
from .sweep import run_sweep

log = logging.getLogger("climb.cli")
log.setLevel(logging.INFO)

logging.getLogger("tensorkit.core").setLevel(logging.WARNING)
logging.getLogger("tensorkit.comm").setLevel(logging.WARNING)


def cmd_simulate(cfg, out: Path) -> list[Path]:
    written = []
    if cfg.synthetic is not None:
        data = generate(cfg.synthetic)
        Y_S, Y_H, Y_M, deg = data.Y_S, data.Y_H, data.Y_M, data.degradation
        comm.write_tensor(out / "Y_S.t3b", Y_S)
        written.append(out / "Y_S.t3b")
        written.append(save_model(data.model, out, "truth_model"))
        (out / "conditions.json").write_text(json.dumps(data.report.as_dict(), indent=2))
        written.append(out / "conditions.json")
    else:
        Y_S = comm.read_tensor(cfg.input)
        deg = make_degradation(Y_S.shape, load_preset(cfg.preset))
        Y_H = degrade_spatial(Y_S, deg.P1, deg.P2)
        Y_M = degrade_spectral(Y_S, deg.PM)
        if cfg.snr_db is not None:
            seed_h, seed_m = np.random.SeedSequence(cfg.seed).spawn(2)
            Y_H = add_noise(Y_H, cfg.snr_db, seed_h)
            Y_M = add_noise(Y_M, cfg.snr_db, seed_m)
    comm.write_tensor(out / "Y_H.t3b", Y_H)
    comm.write_tensor(out / "Y_M.t3b", Y_M)
    written += [out / "Y_H.t3b", out / "Y_M.t3b", deg.save(out, "degradation")]
    return written


def cmd_fuse(cfg, out: Path) -> list[Path]:
    inputs = load_fusion_inputs(cfg)
    model, report, metrics = run_fusion(inputs, cfg)
    base = model.base if isinstance(model, SemiBlindModel) else model
    comm.write_tensor(out / "sri_estimate.t3b", reconstruct(base))
    written = [out / "sri_estimate.t3b", save_model(model, out, "model")]
    written += write_fit_outputs(out, report, metrics)
    if metrics is not None:
        per_band_metrics(inputs.reference, reconstruct(base)).to_csv(out / "per_band.csv", index=False)
        written.append(out / "per_band.csv")
    return written


def cmd_fit(cfg, out: Path) -> list[Path]:
    table = run_fit_experiment(cfg)
    table.to_csv(out / "fit_results.csv", index=False)
    return [out / "fit_results.csv"]


def cmd_metrics(cfg, out: Path) -> list[Path]:
    reference = comm.read_tensor(cfg.reference)
    estimate = comm.read_tensor(cfg.estimate)
    report = compute_metrics(reference, estimate, cfg.ratio)
    (out / "metrics.json").write_text(json.dumps(report.as_dict(), indent=2))
    report.to_frame().to_csv(out / "metrics.csv", index=False)
    written = [out / "metrics.json", out / "metrics.csv"]
    if cfg.per_band:
        per_band_metrics(reference, estimate).to_csv(out / "per_band.csv", index=False)
        written.append(out / "per_band.csv")
    return written


def cmd_spectrum(cfg, out: Path) -> list[Path]:
    spectrum_frame(comm.read_tensor(cfg.input)).to_csv(out / "spectrum.csv", index=False)
    return [out / "spectrum.csv"]


def cmd_smoothness(cfg, out: Path) -> list[Path]:
    t = comm.read_tensor(cfg.input)
    profiles, summary = smoothness_profile(t)
    summary.to_csv(out / "smoothness.csv", index=False)
    written = [out / "smoothness.csv"]
    for mode, p in zip((1, 2, 3), profiles):
        comm.write_tensor(out / f"profile_mode{mode}.t3b", p)
        written.append(out / f"profile_mode{mode}.t3b")
    doc = {"zeros": sparsity_count(t, cfg.threshold), "numel": int(t.size)}
    (out / "sparsity.json").write_text(json.dumps(doc, indent=2))
    written.append(out / "sparsity.json")
    return written


def cmd_sweep(cfg, out: Path) -> list[Path]:
    run_sweep(cfg, out)
    return [out / "sweep.csv"]


HANDLERS = {
    "simulate": cmd_simulate,
    "fuse": cmd_fuse,
    "fit": cmd_fit,
    "metrics": cmd_metrics,
    "spectrum": cmd_spectrum,
    "smoothness": cmd_smoothness,
    "sweep": cmd_sweep,
}


def run(command: str, config_path, output_dir) -> list[Path]:
    # config is validated in full before the output directory is touched
    cfg = load_config(command, config_path)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = HANDLERS[command](cfg, out)
    log.info(f"{command}: wrote {len(written)} files to {out}")
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="climb", description="Coupled LMN fusion of HSI and MSI")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output-dir", default=".", help="directory for outputs")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    args = parser.parse_args(argv)

    logging.basicConfig(format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.verbose:
        for name in list(logging.root.manager.loggerDict):
            if name.split(".")[0] in ("climb", "tensorkit"):
                logging.getLogger(name).setLevel(logging.DEBUG)

    try:
        run(args.command, args.config, args.output_dir)
    except ConfigError as e:
        print(json.dumps(e.as_dict()), file=sys.stderr)
        return 2
    except TensorError as e:
        print(json.dumps(e.as_dict()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
