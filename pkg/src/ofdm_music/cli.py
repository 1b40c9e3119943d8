"""Command-line interface: single-shot estimation, Monte Carlo sweeps, CFAR
calibration and complexity reporting.

Exit codes: 0 success, 2 configuration / input-format error, 3 numerical
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_run_config
from .detection import GridConfig, Routine, detect
from .errors import ConfigError, NumericalError, OfdmMusicError
from .harness import calibrate_kappa, run_sweep, write_sweep_outputs
from .music import decompose, flop_estimate, steering_params
from .signal_model import CsiMatrix
from .smoothing import covariance, make_plan, smooth

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="scenario seed (overrides config)")
    parser.add_argument("--threads", type=int,
                        help="worker processes (default: available cores)")
    parser.add_argument("--routine", choices=[r.value for r in Routine],
                        help="peak selection routine (overrides config)")
    parser.add_argument("--snr-db", type=float, dest="snr_db",
                        help="scenario SNR in dB (overrides config)")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    detector = cfg.detector
    scenario = cfg.scenario
    if args.routine is not None:
        detector = dataclasses.replace(detector,
                                       routine=Routine.from_string(args.routine))
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, rng_seed=args.seed)
    if args.snr_db is not None:
        scenario = dataclasses.replace(scenario, snr_db=args.snr_db)
    out_dir = args.out if args.out is not None else cfg.out_dir
    return dataclasses.replace(cfg, detector=detector, scenario=scenario,
                               out_dir=out_dir)


def _effective_config(cfg: RunConfig, n_workers: int) -> dict:
    raw = dict(cfg.raw)
    raw["routine"] = cfg.detector.routine.value
    raw["seed"] = cfg.scenario.rng_seed
    raw["snr_db"] = cfg.scenario.snr_db
    raw["kappa"] = cfg.detector.kappa
    raw["out_dir"] = cfg.out_dir
    return {"version": f"ofdm-music/{__version__}", "threads": n_workers,
            "config": raw}


def cmd_estimate(cfg: RunConfig, csi_path: str, out_dir: str | None) -> int:
    csi = CsiMatrix.from_binary(csi_path, cfg.radio)
    subs = decompose(covariance(smooth(csi, cfg.plan)))
    params = steering_params(cfg.radio, cfg.plan)
    report = detect(subs, params,
                    GridConfig(cfg.radio, cfg.plan, cfg.theta_lim_rad),
                    cfg.detector)
    text = report.to_json()
    print(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as f:
            f.write(text + "\n")
    return 0


def cmd_sweep(cfg: RunConfig, n_workers: int) -> int:
    summary = run_sweep(cfg.scenario, cfg.radio, cfg.plan, cfg.detector,
                        theta_lim_rad=cfg.theta_lim_rad,
                        first_target_only=cfg.first_target_only,
                        n_workers=n_workers)
    metadata = _effective_config(cfg, n_workers)
    csv_path, json_path = write_sweep_outputs(summary, cfg.out_dir, metadata)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_calibrate(cfg: RunConfig, n_workers: int, n_trials: int) -> int:
    kappa = calibrate_kappa(cfg.radio, cfg.plan, cfg.detector,
                            theta_lim_rad=cfg.theta_lim_rad, n_trials=n_trials,
                            rng_seed=cfg.scenario.rng_seed, n_workers=n_workers)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "kappa.json")
    with open(path, "w") as f:
        json.dump({"kappa": kappa, "p_fa": cfg.detector.p_fa,
                   "n_trials": n_trials, "seed": cfg.scenario.rng_seed}, f)
    print(f"kappa = {kappa:.6f} (stored in {path})")
    return 0


def cmd_complexity(cfg: RunConfig, model_order: int = 2) -> int:
    radio, plan = cfg.radio, cfg.plan
    comparator = make_plan(radio, plan.aperture_f, plan.aperture_a, 1, 1,
                           plan.stride_f, plan.stride_a)
    rows = [("configured", plan), ("no-decimation comparator", comparator)]
    print(f"{'setup':<26} {'M':>6} {'L':>6} {'FLOPs/eval':>14}")
    flops = []
    for name, p in rows:
        f = flop_estimate(p.samples_per_subarray, model_order)
        flops.append(f)
        print(f"{name:<26} {p.samples_per_subarray:>6} {p.n_subarrays:>6} {f:>14}")
    print(f"reduction factor: {flops[1] / flops[0]:.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofdm-music",
        description="Joint range/angle estimation from OFDM CSI via decimated "
                    "spatial smoothing and 2D MUSIC")
    sub = parser.add_subparsers(dest="command", required=True)
    est = sub.add_parser("estimate", help="detect targets in a binary CSI file")
    est.add_argument("csi", help="CSI file (u32 K, u32 N header + complex128 data)")
    _add_common(est)
    _add_common(sub.add_parser("sweep", help="run the configured Monte Carlo sweep"))
    cal = sub.add_parser("calibrate", help="calibrate the CFAR factor kappa")
    cal.add_argument("--trials", type=int, default=1000,
                     help="noise-only calibration trials")
    _add_common(cal)
    _add_common(sub.add_parser("complexity",
                               help="FLOP table vs. the no-decimation setup"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        cfg = _apply_overrides(cfg, args)
        n_workers = max(1, args.threads if args.threads else (os.cpu_count() or 1))
        if args.command == "estimate":
            return cmd_estimate(cfg, args.csi, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, n_workers)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, n_workers, args.trials)
        if args.command == "complexity":
            return cmd_complexity(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, OfdmMusicError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
