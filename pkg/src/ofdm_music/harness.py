"""Monte Carlo scenario generation, scoring rules and sweep execution.

Two-target trials draw a common base range and independent azimuths, move the
second target out by the sweep's range difference, and keep the random
geometry fixed across sweep points for a given trial index. Detection errors
follow the range-based assignment rule: with two detections the one nearer
the array maps to the nearer target; with fewer detections the coarse-grid
maximum (after canceling any detection already made) stands in for the
missing estimate.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detection import (DetectionReport, DetectorConfig, GridConfig, Routine,
                        detect, refine_candidates)
from .errors import AlreadyCanceledError, ConfigError, DomainError
from .music import (DEFAULT_THETA_LIM_RAD, SpectrumEvaluator, SpectrumGrid,
                    Subspaces, SteeringParams, decompose, grid_axes,
                    steering_params)
from .signal_model import (RadioConfig, Target, TargetScene, scene_coefficient,
                           synthesize_csi)
from .smoothing import SubarrayPlan, covariance, smooth

logger = logging.getLogger(__name__)

# Sub-stream tags for the splittable seeding scheme.
_GEOMETRY_TAG = 0
_COEFF_TAG = 1
_NOISE_TAG = 2
_CALIBRATION_TAG = 3


@dataclass(frozen=True)
class ScenarioSpec:
    """Two-target Monte Carlo scenario definition."""

    n_trials: int
    snr_db: float
    range_diffs_m: tuple[float, ...] = (0.0,)
    free_placement: bool = False
    angle_range_deg: tuple[float, float] = (-60.0, 60.0)
    base_range_max_m: float = 25.0
    rng_seed: int = 0
    min_angle_sep_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "range_diffs_m", tuple(self.range_diffs_m))
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if any(d < 0 for d in self.range_diffs_m):
            raise ConfigError("range differences must be nonnegative")
        if self.base_range_max_m <= 0:
            raise ConfigError("base_range_max_m must be positive")
        if self.angle_range_deg[0] >= self.angle_range_deg[1]:
            raise ConfigError("angle range must be nonempty")


@dataclass(frozen=True)
class TrialResult:
    truth: tuple[tuple[float, float], tuple[float, float]]
    report: DetectionReport
    assigned_errors: tuple[tuple[float, float], tuple[float, float]]
    missed: tuple[bool, bool]


@dataclass(frozen=True)
class SweepSummary:
    x_axis: tuple[float, ...]
    p_missed: tuple[float, ...]
    rmse_range_m: tuple[float, ...]
    rmse_azimuth_deg: tuple[float, ...]
    n_trials: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x_value", "p_missed", "rmse_range_m",
                             "rmse_azimuth_deg", "n_trials"])
            for i, x in enumerate(self.x_axis):
                writer.writerow([repr(float(x)), repr(self.p_missed[i]),
                                 repr(self.rmse_range_m[i]),
                                 repr(self.rmse_azimuth_deg[i]), self.n_trials])


def _sub_seed(*entropy: int) -> int:
    """Deterministic integer sub-seed from a splittable entropy tuple."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1,
                                                                    np.uint64)[0])


def generate_trial(spec: ScenarioSpec, radio: RadioConfig, trial_index: int,
                   range_diff_m: float = 0.0) -> TargetScene:
    """Draw one two-target scene; geometry depends only on (seed, trial_index).

    The base range and both azimuths come from a per-trial stream so the same
    trial index yields the same geometry at every sweep point; only the
    second target's range moves with ``range_diff_m``. Coefficient phases are
    per-trial/per-target; magnitudes follow the inverse-square path loss at
    the actual ranges. The noise variance realizes the requested SNR against
    the noiseless CSI power.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.rng_seed, _GEOMETRY_TAG, trial_index]))
    if spec.free_placement:
        r1, r2 = np.sort(rng.uniform(0.0, spec.base_range_max_m, 2))
    else:
        r1 = rng.uniform(0.0, spec.base_range_max_m)
        r2 = r1 + range_diff_m
    lo, hi = (math.radians(a) for a in spec.angle_range_deg)
    min_sep = math.radians(spec.min_angle_sep_deg)
    while True:
        th1, th2 = rng.uniform(lo, hi, 2)
        if abs(th1 - th2) >= min_sep:
            break
    targets = tuple(
        Target(range_m=float(r), azimuth_rad=float(th),
               coeff=scene_coefficient(
                   float(r), _sub_seed(spec.rng_seed, _COEFF_TAG, trial_index, q)))
        for q, (r, th) in enumerate(((r1, th1), (r2, th2))))
    bare = TargetScene(targets=targets, noise_variance=0.0)
    sigma2 = noise_variance_for_snr(bare, radio, spec.snr_db)
    return TargetScene(targets=targets, noise_variance=sigma2)


def noise_variance_for_snr(scene: TargetScene, config: RadioConfig,
                           snr_db: float) -> float:
    """Noise variance realizing ``snr_db`` against the mean noiseless CSI power."""
    if not scene.targets:
        raise DomainError("cannot set an SNR for a scene without targets")
    noiseless = TargetScene(targets=scene.targets, noise_variance=0.0)
    csi = synthesize_csi(config, noiseless, rng_seed=0)
    power = float(np.mean(np.abs(csi.data) ** 2))
    if power == 0.0:
        raise DomainError("scene has zero signal power")
    return power / (10.0 ** (snr_db / 10.0))


class ScoringContext:
    """Coarse-grid fallback estimates for trials with missed detections."""

    def __init__(self, subspaces: Subspaces, params: SteeringParams,
                 radio: RadioConfig, plan: SubarrayPlan,
                 theta_lim_rad: float = DEFAULT_THETA_LIM_RAD):
        self.subspaces = subspaces
        self.params = params
        self.radio = radio
        self.plan = plan
        self.theta_lim_rad = theta_lim_rad
        self._axes = grid_axes(radio, plan, theta_lim_rad)
        self._initial_grid: SpectrumGrid | None = None

    def _grid_for(self, subspaces: Subspaces) -> SpectrumGrid:
        ranges, angles = self._axes
        vals = SpectrumEvaluator(subspaces, self.params).values(ranges, angles)
        return SpectrumGrid(ranges_m=ranges, angles_rad=angles, values=vals)

    def grid_argmax(self) -> tuple[float, float]:
        if self._initial_grid is None:
            self._initial_grid = self._grid_for(self.subspaces)
        r, th, _ = self._initial_grid.argmax()
        return r, th

    def residual_argmax(self, canceled: list[tuple[float, float]]
                        ) -> tuple[float, float]:
        """Grid maximum after canceling the given (range, azimuth) points."""
        from .detection import Detection, cancel_target
        subs = self.subspaces
        for r, th in canceled:
            try:
                subs = cancel_target(subs, self.params, Detection(r, th, 0.0, 0))
            except AlreadyCanceledError:
                continue
        r, th, _ = self._grid_for(subs).argmax()
        return r, th


def assign_and_score(truth, report: DetectionReport,
                     context: ScoringContext | None = None,
                     score_angle: bool = True) -> TrialResult:
    """Apply the range-based assignment rule and fall back to grid maxima.

    ``truth`` is ((r1, th1), (r2, th2)) with target 1 nearer. With two or
    more detections the two strongest are kept and the nearer-in-range one is
    assigned to target 1. A single detection always scores against target 1;
    target 2 then takes the coarse-grid maximum after canceling that
    detection. With no detections target 1 takes the plain grid maximum and
    target 2 proceeds as in the single-detection case.

    Angle errors are NaN when ``score_angle`` is false (range-only plans).
    """
    (r1, th1), (r2, th2) = truth
    if r1 > r2:
        raise DomainError("truth must be ordered with target 1 nearer the array")
    dets = report.detections
    if len(dets) >= 2:
        strongest = sorted(dets, key=lambda d: -d.spectrum_value)[:2]
        near, far = sorted(strongest, key=lambda d: d.range_m)
        est1, est2 = (near.range_m, near.azimuth_rad), (far.range_m, far.azimuth_rad)
        missed = (False, False)
    elif len(dets) == 1:
        if context is None:
            raise ConfigError("missed-detection scoring requires a ScoringContext")
        est1 = (dets[0].range_m, dets[0].azimuth_rad)
        est2 = context.residual_argmax([est1])
        missed = (False, True)
    else:
        if context is None:
            raise ConfigError("missed-detection scoring requires a ScoringContext")
        est1 = context.grid_argmax()
        est2 = context.residual_argmax([est1])
        missed = (True, True)
    err1 = (est1[0] - r1, est1[1] - th1 if score_angle else math.nan)
    err2 = (est2[0] - r2, est2[1] - th2 if score_angle else math.nan)
    return TrialResult(truth=((r1, th1), (r2, th2)), report=report,
                       assigned_errors=(err1, err2), missed=missed)


def trimmed_rmse(errors, trim: float = 0.01) -> float:
    """RMSE after dropping floor(trim * n) largest and smallest absolute errors."""
    a = np.sort(np.abs(np.asarray(errors, dtype=float)))
    n = a.size
    if n < 3:
        raise DomainError(f"trimmed RMSE needs at least 3 samples, got {n}")
    k = int(math.floor(trim * n))
    kept = a[k:n - k] if k > 0 else a
    return float(np.sqrt(np.mean(kept ** 2)))


def _rmse(errors) -> float:
    """Trimmed RMSE, or the identical untrimmed value for tiny samples.

    Below 100 samples the 1% trim count is zero anyway; this keeps smoke runs
    with one or two trials per sweep point working.
    """
    if len(errors) < 3:
        return float(np.sqrt(np.mean(np.abs(np.asarray(errors, float)) ** 2)))
    return trimmed_rmse(errors)


def run_trial(radio: RadioConfig, plan: SubarrayPlan, det_config: DetectorConfig,
              scene: TargetScene, noise_seed: int,
              theta_lim_rad: float = DEFAULT_THETA_LIM_RAD) -> TrialResult:
    """Synthesize, smooth, decompose, detect and score one two-target scene."""
    if len(scene.targets) != 2:
        raise ConfigError("run_trial scores exactly two targets")
    csi = synthesize_csi(radio, scene, noise_seed)
    subs = decompose(covariance(smooth(csi, plan)))
    params = steering_params(radio, plan)
    report = detect(subs, params, GridConfig(radio, plan, theta_lim_rad), det_config)
    ctx = ScoringContext(subs, params, radio, plan, theta_lim_rad)
    truth = tuple((t.range_m, t.azimuth_rad) for t in scene.targets)
    return assign_and_score(truth, report, ctx, score_angle=plan.n_sub_a > 1)


@dataclass(frozen=True)
class _TrialJob:
    spec: ScenarioSpec
    radio: RadioConfig
    plan: SubarrayPlan
    det_config: DetectorConfig
    theta_lim_rad: float
    range_diff_m: float
    sweep_index: int


def _run_trial_job(job: _TrialJob, trial_index: int
                   ) -> tuple[tuple[tuple[float, float], tuple[float, float]],
                              tuple[bool, bool]]:
    scene = generate_trial(job.spec, job.radio, trial_index, job.range_diff_m)
    noise_seed = _sub_seed(job.spec.rng_seed, _NOISE_TAG, trial_index,
                           job.sweep_index)
    result = run_trial(job.radio, job.plan, job.det_config, scene, noise_seed,
                       job.theta_lim_rad)
    return result.assigned_errors, result.missed


def run_sweep(spec: ScenarioSpec, radio: RadioConfig, plan: SubarrayPlan,
              det_config: DetectorConfig,
              theta_lim_rad: float = DEFAULT_THETA_LIM_RAD,
              first_target_only: bool = False,
              n_workers: int = 1) -> SweepSummary:
    """Run all trials at every sweep point and aggregate the metrics.

    Trials get independent sub-seeds, so the summary is bit-identical for any
    worker count; aggregation always runs in trial order. Free-placement
    scenarios collapse to a single sweep point with a NaN x value.
    """
    x_values = (math.nan,) if spec.free_placement else spec.range_diffs_m
    p_missed, rmse_r, rmse_th = [], [], []
    for sweep_index, x in enumerate(x_values):
        diff = 0.0 if spec.free_placement else float(x)
        job = _TrialJob(spec=spec, radio=radio, plan=plan, det_config=det_config,
                        theta_lim_rad=theta_lim_rad, range_diff_m=diff,
                        sweep_index=sweep_index)
        trials = range(spec.n_trials)
        if n_workers > 1:
            chunk = max(1, spec.n_trials // (8 * n_workers))
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                results = list(pool.map(_run_trial_job, [job] * spec.n_trials,
                                        trials, chunksize=chunk))
        else:
            results = [_run_trial_job(job, t) for t in trials]
        missed_any = [any(m) for _, m in results]
        p_missed.append(float(np.mean(missed_any)))
        n_targets = 1 if first_target_only else 2
        range_errors = [errs[q][0] for errs, _ in results for q in range(n_targets)]
        rmse_r.append(_rmse(range_errors))
        if plan.n_sub_a > 1:
            angle_errors = [math.degrees(errs[q][1])
                            for errs, _ in results for q in range(n_targets)]
            rmse_th.append(_rmse(angle_errors))
        else:
            rmse_th.append(math.nan)
        logger.info("sweep point %s/%s (x=%s): p_missed=%.4f rmse_r=%.4f",
                    sweep_index + 1, len(x_values), x, p_missed[-1], rmse_r[-1])
    return SweepSummary(x_axis=tuple(float(x) for x in x_values),
                        p_missed=tuple(p_missed), rmse_range_m=tuple(rmse_r),
                        rmse_azimuth_deg=tuple(rmse_th), n_trials=spec.n_trials)


def _calibration_pivot(job: "_CalibrationJob", trial_index: int) -> float:
    seed = _sub_seed(job.rng_seed, _CALIBRATION_TAG, trial_index)
    scene = TargetScene(targets=(), noise_variance=job.noise_variance)
    csi = synthesize_csi(job.radio, scene, seed)
    subs = decompose(covariance(smooth(csi, job.plan)))
    if subs.order_estimate == 0:
        return 0.0   # flat spectrum: the detector cannot alarm on this trial
    params = steering_params(job.radio, job.plan)
    ranges, angles = grid_axes(job.radio, job.plan, job.theta_lim_rad)
    vals = SpectrumEvaluator(subs, params).values(ranges, angles)
    grid = SpectrumGrid(ranges_m=ranges, angles_rad=angles, values=vals)
    quantile = float(np.quantile(vals, 1.0 - job.det_config.p_fa))
    n_seeds = 1 if job.det_config.routine is Routine.SINGLE \
        else job.det_config.n_start
    peaks = refine_candidates(subs, params, grid, job.det_config,
                              job.theta_lim_rad, n_seeds)
    if not peaks:   # every refinement pinned at a domain edge: nothing to alarm
        return 0.0
    return max(p[2] for p in peaks) / quantile


@dataclass(frozen=True)
class _CalibrationJob:
    radio: RadioConfig
    plan: SubarrayPlan
    det_config: DetectorConfig
    theta_lim_rad: float
    noise_variance: float
    rng_seed: int


def calibrate_kappa(radio: RadioConfig, plan: SubarrayPlan,
                    det_config: DetectorConfig,
                    theta_lim_rad: float = DEFAULT_THETA_LIM_RAD,
                    n_trials: int = 1000, rng_seed: int = 0,
                    noise_variance: float = 1.0, n_workers: int = 1) -> float:
    """Noise-only calibration of the CFAR scale factor kappa.

    Each noise-only trial yields the pivot (strongest refined peak) /
    (grid quantile); kappa is the (1 - p_fa) quantile of the pivots, so the
    probability that a noise-only trial produces any peak above
    kappa * quantile approximates p_fa. Deterministic for a given seed.
    """
    job = _CalibrationJob(radio=radio, plan=plan, det_config=det_config,
                          theta_lim_rad=theta_lim_rad,
                          noise_variance=noise_variance, rng_seed=rng_seed)
    trials = range(n_trials)
    if n_workers > 1:
        chunk = max(1, n_trials // (8 * n_workers))
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            pivots = list(pool.map(_calibration_pivot, [job] * n_trials, trials,
                                   chunksize=chunk))
    else:
        pivots = [_calibration_pivot(job, t) for t in trials]
    return max(1.0, float(np.quantile(pivots, 1.0 - det_config.p_fa)))


def write_sweep_outputs(summary: SweepSummary, out_dir, metadata: dict) -> tuple:
    """Write sweep.csv plus a sweep.json sidecar; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sweep.csv")
    json_path = os.path.join(out_dir, "sweep.json")
    summary.to_csv(csv_path)
    doc = dict(metadata)
    doc["summary"] = {
        "x_axis": list(summary.x_axis),
        "p_missed": list(summary.p_missed),
        "rmse_range_m": list(summary.rmse_range_m),
        "rmse_azimuth_deg": list(summary.rmse_azimuth_deg),
        "n_trials": summary.n_trials,
    }
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=2, allow_nan=True)
    return csv_path, json_path
