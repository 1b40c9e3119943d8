import math

import numpy as np
import pytest
from scipy import stats

from ofdm_music import (ConfigError, Detection, DetectionReport, DetectorConfig,
                        DomainError, Routine, ScenarioSpec, ScoringContext,
                        Target, TargetScene, assign_and_score, covariance,
                        decompose, generate_trial, noise_variance_for_snr,
                        run_sweep, run_trial, smooth, steering_params,
                        synthesize_csi, trimmed_rmse, write_sweep_outputs)
from ofdm_music.presets import baseline_plan, baseline_radio

from test_signal_model import small_radio


def spec_with(**kwargs):
    base = dict(n_trials=4, snr_db=15.0, range_diffs_m=(0.0, 0.5), rng_seed=3)
    base.update(kwargs)
    return ScenarioSpec(**base)


def make_report(dets, gamma=0.1, routine=Routine.MULTIPLE):
    return DetectionReport(detections=tuple(dets), threshold_used=gamma,
                           routine=routine, spectra_computed=1)


class TestGenerateTrial:
    def test_zero_diff_equal_ranges(self):
        radio = baseline_radio()
        scene = generate_trial(spec_with(), radio, 0, 0.0)
        assert scene.targets[0].range_m == scene.targets[1].range_m

    def test_geometry_fixed_across_sweep_points(self):
        radio = baseline_radio()
        a = generate_trial(spec_with(), radio, 5, 0.0)
        b = generate_trial(spec_with(), radio, 5, 2.0)
        assert a.targets[0].range_m == b.targets[0].range_m
        assert a.targets[0].azimuth_rad == b.targets[0].azimuth_rad
        assert a.targets[1].azimuth_rad == b.targets[1].azimuth_rad
        assert b.targets[1].range_m == pytest.approx(
            a.targets[1].range_m + 2.0, abs=1e-12)
        # coefficient phase kept, magnitude follows the moved range
        assert np.angle(a.targets[1].coeff) == pytest.approx(
            np.angle(b.targets[1].coeff), abs=1e-12)

    def test_trials_differ(self):
        radio = baseline_radio()
        a = generate_trial(spec_with(), radio, 0, 0.0)
        b = generate_trial(spec_with(), radio, 1, 0.0)
        assert a.targets[0].range_m != b.targets[0].range_m

    def test_base_ranges_uniform(self):
        radio = small_radio(n=16, k=2)
        spec = spec_with(base_range_max_m=25.0, n_trials=10_000)
        ranges = np.array([
            generate_trial(spec, radio, t, 0.0).targets[0].range_m
            for t in range(10_000)])
        _, p = stats.kstest(ranges / 25.0, "uniform")
        assert p > 0.01

    def test_angles_within_range_and_separation(self):
        radio = small_radio(n=16, k=2)
        spec = spec_with(min_angle_sep_deg=20.0, n_trials=200)
        for t in range(200):
            scene = generate_trial(spec, radio, t, 0.0)
            th = [math.degrees(tgt.azimuth_rad) for tgt in scene.targets]
            assert all(-60.0 <= x <= 60.0 for x in th)
            assert abs(th[0] - th[1]) >= 20.0

    def test_free_placement_sorted(self):
        radio = small_radio(n=16, k=2)
        spec = spec_with(free_placement=True)
        for t in range(50):
            scene = generate_trial(spec, radio, t, 0.0)
            assert scene.targets[0].range_m <= scene.targets[1].range_m

    def test_noise_variance_realizes_snr(self):
        radio = baseline_radio()
        scene = generate_trial(spec_with(snr_db=10.0), radio, 2, 1.0)
        noiseless = synthesize_csi(radio, TargetScene(scene.targets, 0.0), 0)
        power = np.mean(np.abs(noiseless.data) ** 2)
        assert scene.noise_variance == pytest.approx(power / 10.0, rel=1e-12)


class TestNoiseVarianceForSnr:
    def test_zero_db(self):
        radio = baseline_radio()
        scene = TargetScene((Target(10.0, 0.1, 0.01 + 0j),), 0.0)
        power = np.mean(np.abs(synthesize_csi(radio, scene, 0).data) ** 2)
        assert noise_variance_for_snr(scene, radio, 0.0) == pytest.approx(power)

    def test_ten_db(self):
        radio = baseline_radio()
        scene = TargetScene((Target(10.0, 0.1, 0.01 + 0j),), 0.0)
        power = np.mean(np.abs(synthesize_csi(radio, scene, 0).data) ** 2)
        assert noise_variance_for_snr(scene, radio, 10.0) == pytest.approx(
            power / 10.0)

    def test_empty_scene_rejected(self):
        with pytest.raises(DomainError):
            noise_variance_for_snr(TargetScene((), 0.0), baseline_radio(), 10.0)

    def test_empirical_snr_within_tenth_db(self):
        radio = baseline_radio()
        scene0 = TargetScene((Target(8.0, 0.3, 0.016 + 0j),
                              Target(15.0, -0.2, 0.004 + 0j)), 0.0)
        sigma2 = noise_variance_for_snr(scene0, radio, 12.0)
        noiseless = synthesize_csi(radio, scene0, 0).data
        sig_power = np.mean(np.abs(noiseless) ** 2)
        noise_acc = 0.0
        trials = 100
        for seed in range(trials):
            noisy = synthesize_csi(radio, TargetScene(scene0.targets, sigma2),
                                   seed).data
            noise_acc += np.mean(np.abs(noisy - noiseless) ** 2)
        snr_db = 10 * math.log10(sig_power / (noise_acc / trials))
        assert snr_db == pytest.approx(12.0, abs=0.1)


class TestAssignAndScore:
    truth = ((5.0, 0.1), (9.0, -0.2))

    def test_perfect_detections(self):
        report = make_report([Detection(5.0, 0.1, 3.0, 0),
                              Detection(9.0, -0.2, 2.0, 0)])
        res = assign_and_score(self.truth, report)
        assert res.assigned_errors == ((0.0, 0.0), (0.0, 0.0))
        assert res.missed == (False, False)

    def test_order_invariance(self):
        dets = [Detection(9.1, -0.25, 2.0, 0), Detection(5.2, 0.12, 3.0, 0)]
        a = assign_and_score(self.truth, make_report(dets))
        b = assign_and_score(self.truth, make_report(dets[::-1]))
        assert a.assigned_errors == b.assigned_errors
        assert a.assigned_errors[0][0] == pytest.approx(0.2)
        assert a.assigned_errors[1][0] == pytest.approx(0.1)

    def test_three_detections_keep_two_strongest(self):
        dets = [Detection(5.0, 0.1, 3.0, 0), Detection(9.0, -0.2, 2.5, 0),
                Detection(20.0, 0.9, 0.2, 1)]   # weak false alarm
        res = assign_and_score(self.truth, make_report(dets))
        assert res.assigned_errors == ((0.0, 0.0), (0.0, 0.0))
        assert res.missed == (False, False)

    def test_single_detection_scored_against_first_target(self):
        # even a detection sitting exactly on target 2 scores against target 1
        report = make_report([Detection(9.0, -0.2, 3.0, 0)])
        ctx = self.context()
        res = assign_and_score(self.truth, report, ctx)
        assert res.missed == (False, True)
        assert res.assigned_errors[0][0] == pytest.approx(4.0)

    def context(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        targets = (Target(5.0, 0.1, 0.04 + 0j), Target(9.0, -0.2, 0.0123 + 0j))
        scene0 = TargetScene(targets, 0.0)
        sigma2 = noise_variance_for_snr(scene0, radio, 20.0)
        csi = synthesize_csi(radio, TargetScene(targets, sigma2), 5)
        subs = decompose(covariance(smooth(csi, plan)))
        return ScoringContext(subs, steering_params(radio, plan), radio, plan)

    def test_fallback_grid_estimates(self):
        # zero detections: target 1 takes the plain grid maximum (wherever it
        # is), target 2 the residual maximum after canceling that point
        ctx = self.context()
        res = assign_and_score(self.truth, make_report([]), ctx)
        assert res.missed == (True, True)
        g1 = ctx.grid_argmax()
        assert res.assigned_errors[0][0] == pytest.approx(g1[0] - self.truth[0][0])
        assert res.assigned_errors[0][1] == pytest.approx(g1[1] - self.truth[0][1])
        g2 = ctx.residual_argmax([g1])
        assert res.assigned_errors[1][0] == pytest.approx(g2[0] - self.truth[1][0])

    def test_single_detection_residual_fallback(self):
        ctx = self.context()
        report = make_report([Detection(5.0, 0.1, 3.0, 0)])
        res = assign_and_score(self.truth, report, ctx)
        assert res.missed == (False, True)
        assert res.assigned_errors[0] == (0.0, 0.0)
        assert res.assigned_errors[1][0] == pytest.approx(0.0, abs=1.0)

    def test_missing_context_rejected(self):
        with pytest.raises(ConfigError):
            assign_and_score(self.truth, make_report([]))

    def test_unordered_truth_rejected(self):
        with pytest.raises(DomainError):
            assign_and_score(((9.0, 0.0), (5.0, 0.0)), make_report([]))

    def test_range_only_scoring_nan_angles(self):
        report = make_report([Detection(5.0, 0.0, 3.0, 0),
                              Detection(9.0, 0.0, 2.0, 0)])
        res = assign_and_score(self.truth, report, score_angle=False)
        assert math.isnan(res.assigned_errors[0][1])
        assert math.isnan(res.assigned_errors[1][1])
        assert res.assigned_errors[0][0] == 0.0


class TestTrimmedRmse:
    def test_all_zero(self):
        assert trimmed_rmse([0.0] * 10) == 0.0

    def test_hundred_ones(self):
        assert trimmed_rmse([1.0] * 100) == pytest.approx(1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        errors = rng.normal(size=1000)
        # independent brute force: sort absolute errors, drop 10 from each
        # end, plain RMSE of the rest
        a = np.sort(np.abs(errors))[10:-10]
        brute = math.sqrt(np.mean(a ** 2))
        assert trimmed_rmse(errors) == pytest.approx(brute, rel=1e-12)
        assert trimmed_rmse(errors) == pytest.approx(brute, rel=0.05)

    def test_outliers_trimmed(self):
        # floor(0.01 * 100) = 1 dropped from each end of the absolute sort
        errors = [0.1] * 99 + [1000.0]
        assert trimmed_rmse(errors) == pytest.approx(0.1)

    def test_too_few_samples(self):
        with pytest.raises(DomainError):
            trimmed_rmse([1.0, 2.0])


class TestRunSweep:
    def test_smoke_one_row_per_point(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=2, snr_db=20.0, range_diffs_m=(0.0, 1.0, 2.0),
                            rng_seed=1, base_range_max_m=22.0)
        summary = run_sweep(spec, radio, plan, DetectorConfig())
        assert summary.x_axis == (0.0, 1.0, 2.0)
        assert len(summary.p_missed) == 3
        assert all(0.0 <= p <= 1.0 for p in summary.p_missed)
        assert all(r >= 0 for r in summary.rmse_range_m)
        assert summary.n_trials == 2

    def test_single_trial_smoke(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=1, snr_db=20.0, range_diffs_m=(0.0, 2.0),
                            rng_seed=9, base_range_max_m=22.0)
        summary = run_sweep(spec, radio, plan, DetectorConfig())
        assert len(summary.x_axis) == 2
        assert all(np.isfinite(summary.rmse_range_m))

    def test_deterministic_and_worker_invariant(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=4, snr_db=15.0, range_diffs_m=(0.5,),
                            rng_seed=2, base_range_max_m=22.0)
        a = run_sweep(spec, radio, plan, DetectorConfig())
        b = run_sweep(spec, radio, plan, DetectorConfig())
        c = run_sweep(spec, radio, plan, DetectorConfig(), n_workers=2)
        assert a == b == c

    def test_free_placement_single_point(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=3, snr_db=20.0, free_placement=True,
                            rng_seed=4)
        summary = run_sweep(spec, radio, plan, DetectorConfig())
        assert len(summary.x_axis) == 1
        assert math.isnan(summary.x_axis[0])

    def test_range_only_plan_nan_azimuth(self):
        from ofdm_music.presets import range_only_plan
        radio = baseline_radio()
        spec = ScenarioSpec(n_trials=3, snr_db=20.0, range_diffs_m=(2.0,),
                            rng_seed=5, base_range_max_m=22.0)
        summary = run_sweep(spec, radio, range_only_plan(radio), DetectorConfig())
        assert math.isnan(summary.rmse_azimuth_deg[0])
        assert summary.rmse_range_m[0] >= 0

    def test_missed_detection_drops_with_separation(self):
        # routine multiple at 15 dB: well-separated targets (5 m) are missed
        # no more often than barely-separated ones (0.5 m)
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=200, snr_db=15.0, range_diffs_m=(0.5, 5.0),
                            rng_seed=31, base_range_max_m=19.9)
        summary = run_sweep(spec, radio, plan, DetectorConfig(), n_workers=2)
        assert summary.p_missed[1] <= summary.p_missed[0]

    def test_csv_and_sidecar(self, tmp_path):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        spec = ScenarioSpec(n_trials=2, snr_db=20.0, range_diffs_m=(0.0, 1.0),
                            rng_seed=6, base_range_max_m=22.0)
        summary = run_sweep(spec, radio, plan, DetectorConfig())
        csv_path, json_path = write_sweep_outputs(summary, tmp_path,
                                                  {"seed": 6})
        lines = open(csv_path).read().strip().splitlines()
        assert lines[0] == "x_value,p_missed,rmse_range_m,rmse_azimuth_deg,n_trials"
        assert len(lines) == 3
        import json as json_mod
        doc = json_mod.loads(open(json_path).read())
        assert doc["seed"] == 6
        assert doc["summary"]["n_trials"] == 2


class TestRunTrial:
    def test_two_targets_required(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        scene = TargetScene((Target(5.0, 0.1, 1 + 0j),), 0.1)
        with pytest.raises(ConfigError):
            run_trial(radio, plan, DetectorConfig(), scene, 0)

    def test_clean_scene_scores_zero_errors(self):
        radio = baseline_radio()
        plan = baseline_plan(radio)
        targets = (Target(6.0, math.radians(-20), 0.028 + 0j),
                   Target(15.0, math.radians(25), 0.0044 + 0j))
        scene0 = TargetScene(targets, 0.0)
        sigma2 = noise_variance_for_snr(scene0, radio, 25.0)
        result = run_trial(radio, plan, DetectorConfig(),
                           TargetScene(targets, sigma2), 8)
        assert result.missed == (False, False)
        assert abs(result.assigned_errors[0][0]) < 0.05
        assert abs(result.assigned_errors[1][0]) < 0.05
