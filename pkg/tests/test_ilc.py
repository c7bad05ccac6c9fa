import math
import warnings

import numpy as np
import pytest

from gpilc.cgpr import FixedTransferModel, KernelParams, TransferMatrixGP
from gpilc.convergence import scalar_gain_bound
from gpilc.harness import TrajectorySpec, generate_seed_trajectory, generate_trajectory
from gpilc.ilc import (
    LearningConfig,
    build_training_update,
    estimate_dc_gain,
    local_model,
    quantize,
    quantize_params,
    run_learning,
    update_input,
    update_input_detailed,
)
from gpilc.plant import TransferFunction, lti_test_plant
from gpilc.signals import TimeSeries, dft_grid

FS = 100.0
Q = math.pi / 10.0


class TestQuantize:
    def test_round_to_nearest_multiple(self):
        assert quantize(np.array([0.30]), Q)[0] == pytest.approx(Q)

    def test_exact_multiple_unchanged(self):
        assert quantize(np.array([3 * Q]), Q)[0] == pytest.approx(3 * Q)

    def test_half_tie_rounds_away_from_zero(self):
        assert quantize(np.array([-Q / 2]), Q)[0] == pytest.approx(-Q)
        assert quantize(np.array([Q / 2]), Q)[0] == pytest.approx(Q)

    def test_rejects_nonpositive_quantum(self):
        with pytest.raises(ValueError):
            quantize(np.zeros(1), 0.0)

    def test_quantize_params_channels(self):
        ts = TimeSeries(FS, {"y1": np.array([0.30, 0.62]), "y2": np.array([0.0, 0.1])})
        q = quantize_params(ts, Q)
        np.testing.assert_allclose(q.channels["y1"], [Q, 2 * Q])
        np.testing.assert_allclose(q.channels["y2"], [0.0, 0.0])


class TestLearningConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LearningConfig(param_quantum=0.0)
        with pytest.raises(ValueError):
            LearningConfig(threshold_fraction=1.5)
        with pytest.raises(ValueError):
            LearningConfig(gain_fraction=0.0)

    def test_default_cutoff_is_quarter_nyquist(self):
        assert LearningConfig().cutoff(100.0) == pytest.approx(math.pi * 100.0 / 4.0)
        assert LearningConfig(frequency_cutoff=5.0).cutoff(100.0) == 5.0


def servo_tf(f_hz=2.0, zeta=0.7):
    wn = 2 * math.pi * f_hz
    return TransferFunction((wn * wn,), (1.0, 2 * zeta * wn, wn * wn))


def run_plant(tf_matrix, u, padding=1):
    return lti_test_plant(tf_matrix, padding_factor=padding).execute(u)


class TestBuildTrainingUpdate:
    def test_constant_trajectory_zero_input_empty(self):
        n = int(6 * FS)
        u = TimeSeries(FS, {"u1": np.zeros(n)})
        y = TimeSeries(FS, {"y1": np.zeros(n)})
        rows = build_training_update(u, y, LearningConfig())
        assert rows == [[]]

    def test_single_step_points_come_from_one_window(self):
        # oracle: window count from the quantized staircase transitions
        config = LearningConfig(settle_seconds=2.0)
        n_hold = int((config.window_seconds + config.settle_seconds) * FS)
        u_sig = np.concatenate([np.zeros(n_hold), np.full(n_hold, Q)])
        u = TimeSeries(FS, {"u1": u_sig})
        run = run_plant(servo_tf(), u, padding=2)
        rows = build_training_update(u, run.outputs, config, params_source=u)
        pts = rows[0]
        assert pts, "expected training points from the step window"
        # all points share the single post-step window's parameter label
        labels = {tuple(np.round(p.input_location[1:], 6)) for p in pts}
        assert labels == {(round(Q, 6),)}

    def test_duplicate_data_keeps_predictions_stable(self):
        # duplicated rows make the noise-free covariance rank-deficient; the
        # jitter path must keep the factorization usable and predictions put
        config = LearningConfig(settle_seconds=2.0)
        n_hold = int(4 * FS)
        u_sig = np.concatenate([np.zeros(n_hold), np.full(n_hold, Q)])
        u = TimeSeries(FS, {"u1": u_sig})
        run = run_plant(servo_tf(), u, padding=2)
        rows = build_training_update(u, run.outputs, config, params_source=u)
        fixed = KernelParams(1.0, np.array([3.0, 0.5]), 1e-8)
        model_once = TransferMatrixGP(1, 1, 2, init_params=fixed)
        model_once.add_training_points(rows)
        model_once.refresh()
        model_twice = TransferMatrixGP(1, 1, 2, init_params=fixed)
        model_twice.add_training_points(rows)
        model_twice.add_training_points(rows)
        model_twice.refresh()
        Xs = np.array([[w, Q] for w in np.linspace(0.5, 15.0, 9)])
        a, _ = model_once.predict_entry(0, 0, Xs)
        b, _ = model_twice.predict_entry(0, 0, Xs)
        assert np.max(np.abs(a - b)) < 1e-6


class TestLocalModel:
    def test_diagonal_plant_recovery(self):
        # simulate a decoupled 2x2 plant; learned off-diagonals stay small
        config = LearningConfig(settle_seconds=2.0, frequency_cutoff=20.0)
        g1 = servo_tf(2.0)
        g2 = servo_tf(3.0)
        zero = TransferFunction((0.0,), (1.0,))
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi, math.pi), 10.0), FS)
        seed = generate_seed_trajectory(y_d, config)
        run = run_plant([[g1, zero], [zero, g2]], seed, padding=2)
        model = TransferMatrixGP(2, 2, 3)
        model.add_training_points(
            build_training_update(seed, run.outputs, config, params_source=seed)
        )
        model.fit(seed=0)
        lm = local_model(model, [math.pi / 2, math.pi / 2], np.array([3.16, 6.32, 9.47]))
        mags = np.abs(lm.estimate.mean)
        for k in range(3):
            diag_floor = min(mags[0, 0, k], mags[1, 1, k])
            assert mags[0, 1, k] < 0.1 * diag_floor
            assert mags[1, 0, k] < 0.1 * diag_floor

    def test_far_parameters_fall_back_to_prior(self):
        config = LearningConfig(settle_seconds=2.0)
        n_hold = int(4 * FS)
        u_sig = np.concatenate([np.zeros(n_hold), np.full(n_hold, Q)])
        u = TimeSeries(FS, {"u1": u_sig})
        run = run_plant(servo_tf(), u, padding=2)
        model = TransferMatrixGP(1, 1, 2)
        model.add_training_points(
            build_training_update(u, run.outputs, config, params_source=u)
        )
        model.fit(seed=0)
        params = model.rows[0].params[0]
        far = 1000.0 * max(params.length_scales[1], 1.0)
        lm = local_model(model, [far], np.array([3.16, 6.32]))
        np.testing.assert_allclose(
            lm.estimate.variance[0, 0], params.signal_variance, rtol=1e-6
        )


def fixed_scalar_model(tf, fs, gain_scale=1.0, phase_shift=0.0):
    def response(omega, params):
        g = tf.discrete_response([omega], fs)[0]
        return np.array([[g * gain_scale * np.exp(1j * phase_shift)]])

    return FixedTransferModel(response, 1, 1)


class TestUpdateInput:
    def test_zero_error_is_fixed_point(self):
        config = LearningConfig(parameterize_on_outputs=False)
        n = 200
        rng = np.random.default_rng(0)
        u = TimeSeries(FS, {"u1": rng.normal(size=n)})
        e = TimeSeries(FS, {"e1": np.zeros(n)})
        model = fixed_scalar_model(servo_tf(), FS)
        u_next = update_input(u, e, model, config)
        np.testing.assert_array_equal(u_next.channels["u1"], u.channels["u1"])

    def test_perfect_model_deadbeat(self):
        # unit gain at every bin with an exact model zeroes the error in one step
        config = LearningConfig(
            parameterize_on_outputs=False,
            gain_fraction=0.5,  # rho = 0.5 * (zero-uncertainty bound 2) = 1
            frequency_cutoff=1e9,
        )
        tf = servo_tf()
        plant = lti_test_plant(tf, padding_factor=1)
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 10.0), FS)
        u = TimeSeries(FS, {"u1": y_d.channels["y1"].copy()})
        model = fixed_scalar_model(tf, FS)
        for _ in range(1):
            run = plant.execute(u)
            e = TimeSeries(FS, {"e1": y_d.channels["y1"] - run.outputs.channels["y1"]})
            u = update_input(u, e, model, config)
        run = plant.execute(u)
        err = y_d.channels["y1"] - run.outputs.channels["y1"]
        assert np.max(np.abs(err)) < 1e-6

    def test_scalar_gain_bound_contraction(self):
        # 20% gain error, rho from the scalar bound x 0.6: per-frequency error
        # magnitudes must contract monotonically (exact circular plant)
        tf = servo_tf()
        plant = lti_test_plant(tf, padding_factor=1)
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 10.0), FS)
        n = y_d.n_samples
        grid = dft_grid(n, FS)
        gain_scale = 1.2
        # model-error ratio: G_inv_est * G = 1 / gain_scale everywhere
        delta_m, delta_p = 1.0 / gain_scale, 0.0
        rho = 0.6 * scalar_gain_bound(delta_m, delta_p).bound[0]
        G_true = tf.discrete_response(grid, FS)
        G_est = gain_scale * G_true

        u_spec = np.fft.rfft(y_d.channels["y1"])
        e_prev_mag = None
        u = u_spec.copy()
        for k in range(10):
            y = G_true * u
            e = np.fft.rfft(y_d.channels["y1"]) - y
            mag = np.abs(e)
            if e_prev_mag is not None:
                assert np.all(mag <= e_prev_mag + 1e-9)
            e_prev_mag = mag
            u = u + rho * e / G_est
        rms_history_ok = np.max(e_prev_mag) < 1e-3 * np.max(np.abs(np.fft.rfft(y_d.channels["y1"])))
        assert rms_history_ok

    def test_correction_energy_zero_above_cutoff(self):
        config = LearningConfig(parameterize_on_outputs=False, frequency_cutoff=10.0)
        tf = servo_tf()
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 10.0), FS)
        plant = lti_test_plant(tf, padding_factor=1)
        u = TimeSeries(FS, {"u1": y_d.channels["y1"].copy()})
        run = plant.execute(u)
        e = TimeSeries(FS, {"e1": y_d.channels["y1"] - run.outputs.channels["y1"]})
        model = fixed_scalar_model(tf, FS)
        _, details = update_input_detailed(u, e, model, config)
        grid = dft_grid(u.n_samples, FS)
        above = grid > 10.0
        assert np.all(details.correction_spectra[:, :, above] == 0.0)
        assert np.any(details.correction_spectra != 0.0)


class TestDcGain:
    def test_staircase_estimate(self):
        config = LearningConfig(settle_seconds=2.0)
        tf = servo_tf()
        levels = np.repeat([0.0, Q, 2 * Q, 3 * Q], int(4 * FS))
        u = TimeSeries(FS, {"u1": levels})
        run = run_plant(tf, u, padding=2)
        g0 = estimate_dc_gain(u, run.outputs, config)
        assert g0[0] == pytest.approx(1.0, abs=0.02)

    def test_near_zero_gain_clamped(self):
        config = LearningConfig()
        u = TimeSeries(FS, {"u1": np.repeat([0.0, 1.0], 200)})
        y = TimeSeries(FS, {"y1": np.zeros(400)})
        with pytest.warns(UserWarning):
            g0 = estimate_dc_gain(u, y, config)
        assert g0[0] == 1.0


class TestRunLearning:
    def test_identity_plant_converges_immediately(self):
        config = LearningConfig(
            parameterize_on_outputs=False, max_iterations=5, settle_seconds=1.0
        )
        plant = lti_test_plant(TransferFunction((1.0,), (1.0,)))
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 6.0), FS)
        seed = generate_seed_trajectory(y_d, config)
        res = run_learning(plant, y_d, config, seed)
        assert res.converged
        assert len(res.records) <= 2

    def test_training_set_nondecreasing_and_g0_consistent(self):
        config = LearningConfig(
            max_iterations=3,
            stall_iterations=0,
            settle_seconds=2.0,
            frequency_cutoff=20.0,
        )
        tf = servo_tf()
        plant = lti_test_plant(tf, padding_factor=2)
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 8.0), FS)
        seed = generate_seed_trajectory(y_d, config)

        sizes = []
        import gpilc.ilc as ilc_mod

        original = ilc_mod.update_input

        def tracking_update(u_prev, e_prev, model, cfg, params=None):
            sizes.append(model.n_training_points())
            return original(u_prev, e_prev, model, cfg, params=params)

        ilc_mod.update_input = tracking_update
        try:
            res = run_learning(plant, y_d, config, seed)
        finally:
            ilc_mod.update_input = original
        assert sizes == sorted(sizes)
        assert len(res.records) == 4

        # dc gain used for iteration 0 agrees with the trained model's DC entry
        # at a pose the seeding run actually visited
        lm = local_model(res.model, [math.pi / 2], np.array([0.0]))
        model_dc = np.abs(lm.estimate.mean[0, 0, 0])
        assert abs(res.dc_gain[0] - model_dc) / model_dc < 0.1

    def test_plant_fault_aborts(self):
        class FaultyPlant:
            n_inputs = n_outputs = 1

            def __init__(self):
                self.calls = 0
                self.inner = lti_test_plant(servo_tf(), padding_factor=2)

            def execute(self, u):
                self.calls += 1
                run = self.inner.execute(u)
                if self.calls >= 4:  # seed + iterations 0,1 fine; fault at iteration 2
                    run.fault = "torque saturation"
                return run

        config = LearningConfig(max_iterations=6, stall_iterations=0, settle_seconds=2.0)
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 8.0), FS)
        seed = generate_seed_trajectory(y_d, config)
        res = run_learning(FaultyPlant(), y_d, config, seed)
        assert "fault" in res.stop_reason
        assert res.records[-1].fault == "torque saturation"
        assert res.records[-1].index == 2

    def test_error_fields_consistent(self):
        config = LearningConfig(
            parameterize_on_outputs=False, max_iterations=1, settle_seconds=1.0
        )
        plant = lti_test_plant(servo_tf(), padding_factor=2)
        y_d = generate_trajectory(TrajectorySpec("slow_full_range", (math.pi,), 6.0), FS)
        seed = generate_seed_trajectory(y_d, config)
        res = run_learning(plant, y_d, config, seed)
        for record in res.records:
            e = record.error.channels["e1"]
            manual = y_d.channels["y1"] - record.output.channels["y1"]
            np.testing.assert_array_equal(e, manual)
            assert record.max_abs_error[0] >= record.rms_error[0] >= 0.0
