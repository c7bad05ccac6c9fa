import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpilc.harness import (
    ConfigError,
    RunConfig,
    TrajectorySpec,
    fast_learning_config,
    generate_seed_trajectory,
    generate_trajectory,
    load_config,
    load_lti_plant,
    report,
    run_experiment,
    save_config,
    slow_learning_config,
)
from gpilc.ilc import LearningConfig
from gpilc.plant import ArmParams
from gpilc.signals import write_timeseries_csv

FS = 100.0
Q = math.pi / 10.0


class TestGenerateTrajectory:
    def test_net_displacement_matches_amplitude(self):
        spec = TrajectorySpec("slow_full_range", (math.pi, math.pi / 2), 10.0)
        y = generate_trajectory(spec, FS)
        assert y.channels["y1"][-1] - y.channels["y1"][0] == pytest.approx(math.pi, abs=1e-12)
        assert y.channels["y2"][-1] - y.channels["y2"][0] == pytest.approx(
            math.pi / 2, abs=1e-12
        )

    def test_zero_amplitude_is_zero(self):
        spec = TrajectorySpec("slow_full_range", (0.0,), 4.0)
        y = generate_trajectory(spec, FS)
        np.testing.assert_array_equal(y.channels["y1"], 0.0)

    def test_boundary_velocities_zero(self):
        # closed form: v(t) = A*(T/2pi)*(1 - cos(2pi t/T)) vanishes at 0 and T
        spec = TrajectorySpec("slow_full_range", (1.3,), 6.0)
        y = generate_trajectory(spec, FS)
        v = np.gradient(y.channels["y1"], 1.0 / FS)
        assert abs(v[0]) < 1e-3
        assert abs(v[-1]) < 1e-3

    def test_rejects_bad_duration(self):
        with pytest.raises(ConfigError):
            TrajectorySpec("slow_full_range", (1.0,), 0.0)

    def test_custom_requires_path(self):
        with pytest.raises(ConfigError):
            TrajectorySpec("custom", (1.0,), 1.0)

    def test_custom_loads_csv(self, tmp_path):
        from gpilc.signals import TimeSeries

        path = tmp_path / "traj.csv"
        ts = TimeSeries(FS, {"y1": np.linspace(0, 1, 30)})
        write_timeseries_csv(ts, path)
        spec = TrajectorySpec("custom", (), 1.0, str(path))
        back = generate_trajectory(spec, FS)
        np.testing.assert_allclose(back.channels["y1"], ts.channels["y1"], atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(
    amplitude=st.floats(min_value=-4.0, max_value=4.0),
    duration=st.floats(min_value=0.5, max_value=30.0),
)
def test_trajectory_boundary_conditions_property(amplitude, duration):
    spec = TrajectorySpec("slow_full_range", (amplitude,), duration)
    y = generate_trajectory(spec, FS)
    sig = y.channels["y1"]
    assert sig[-1] - sig[0] == pytest.approx(amplitude, abs=1e-9)
    # acceleration profile is a single sine period: velocity zero at both ends
    analytic_vel = amplitude * 2 * math.pi / duration**2 * (duration / (2 * math.pi))
    assert abs(sig[1] - sig[0]) <= abs(analytic_vel) * (2.0 / FS) + 1e-9


class TestSeedTrajectory:
    def test_level_count_and_duration(self):
        config = LearningConfig(settle_seconds=1.0)
        spec = TrajectorySpec("slow_full_range", (math.pi, math.pi), 10.0)
        y_d = generate_trajectory(spec, FS)
        seed = generate_seed_trajectory(y_d, config)
        held = np.unique(seed.channels["u1"])
        assert held.size >= 10
        assert seed.duration >= 10 * (config.window_seconds + config.settle_seconds)

    def test_constant_desired_single_level(self):
        from gpilc.signals import TimeSeries

        y_d = TimeSeries(FS, {"y1": np.full(100, 0.02)})
        seed = generate_seed_trajectory(y_d, LearningConfig())
        assert np.unique(seed.channels["u1"]).size == 1

    def test_levels_are_quantum_multiples(self):
        config = LearningConfig()
        y_d = generate_trajectory(TrajectorySpec.slow(), FS)
        seed = generate_seed_trajectory(y_d, config)
        for name in seed.channel_names:
            ratio = seed.channels[name] / Q
            np.testing.assert_allclose(ratio, np.round(ratio), atol=1e-9)

    def test_staggered_steps_one_channel_at_a_time(self):
        config = LearningConfig()
        y_d = generate_trajectory(TrajectorySpec.slow(), FS)
        seed = generate_seed_trajectory(y_d, config)
        u = seed.stack()
        changes = u[:, 1:] != u[:, :-1]
        simultaneous = np.sum(np.all(changes, axis=0))
        assert simultaneous == 0

    def test_two_passes_retrace(self):
        config = LearningConfig()
        y_d = generate_trajectory(TrajectorySpec.fast(), FS)
        one = generate_seed_trajectory(y_d, config, passes=1)
        two = generate_seed_trajectory(y_d, config, passes=2)
        assert two.duration > 1.8 * one.duration
        assert two.channels["u1"][-1] == pytest.approx(one.channels["u1"][0])


class TestConfigRoundTrip:
    def test_ini_round_trip(self, tmp_path):
        cfg = RunConfig.fast_arm(out_dir=str(tmp_path / "out"), seed=9)
        cfg.arm = ArmParams(tip_mass=0.3)
        cfg.noise_std = 1e-4
        path = tmp_path / "config.ini"
        save_config(cfg, path)
        back = load_config(path)
        assert back.seed == 9
        assert back.noise_std == pytest.approx(1e-4)
        assert back.seed_passes == 2
        assert back.arm.tip_mass == pytest.approx(0.3)
        assert back.learning.gain_fraction == pytest.approx(0.35)
        assert back.learning.frequency_cutoff == pytest.approx(18.0)
        assert back.trajectory.kind == "fast_short_range"
        assert back.trajectory.duration == pytest.approx(4.0)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_invalid_value_raises(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[run]\nsample_rate = not_a_number\n")
        with pytest.raises(ConfigError):
            load_config(path)


def lti_plant_file(tmp_path, coupled=False):
    wn = 2 * math.pi * 2.0
    entry = {"num": [wn * wn], "den": [1.0, 2 * 0.7 * wn, wn * wn]}
    zero = {"num": [0.0], "den": [1.0]}
    doc = {
        "entries": [[entry, zero], [zero, entry]],
        "padding_factor": 2,
    }
    path = tmp_path / "plant.json"
    path.write_text(json.dumps(doc))
    return path


def tiny_lti_config(tmp_path, seed=0):
    cfg = RunConfig(
        plant=f"lti:{lti_plant_file(tmp_path)}",
        trajectory=TrajectorySpec("slow_full_range", (math.pi, math.pi), 8.0),
        learning=slow_learning_config(
            max_iterations=2, settle_seconds=2.0, frequency_cutoff=20.0
        ),
        out_dir=str(tmp_path / "run"),
        seed=seed,
    )
    return cfg


class TestRunExperiment:
    def test_artifacts_and_row_count(self, tmp_path):
        cfg = tiny_lti_config(tmp_path)
        outcome = run_experiment(cfg)
        assert outcome.ok
        out = outcome.directory
        convergence = (out / "convergence.csv").read_text().strip().splitlines()
        assert len(convergence) == 1 + cfg.learning.max_iterations + 1
        for name in [
            "config.ini",
            "desired.csv",
            "seed_input.csv",
            "seed_run.csv",
            "summary.txt",
            "model_final.json",
            "bode_pose1.csv",
            "bode_pose2.csv",
        ]:
            assert (out / name).exists(), name
        assert (out / "models" / "model-seed.json").exists()

    def test_determinism_byte_identical(self, tmp_path):
        cfg_a = tiny_lti_config(tmp_path, seed=3)
        cfg_a.out_dir = str(tmp_path / "a")
        cfg_b = tiny_lti_config(tmp_path, seed=3)
        cfg_b.out_dir = str(tmp_path / "b")
        out_a = run_experiment(cfg_a).directory
        out_b = run_experiment(cfg_b).directory
        assert (out_a / "convergence.csv").read_bytes() == (out_b / "convergence.csv").read_bytes()

    def test_report_on_completed_run(self, tmp_path):
        cfg = tiny_lti_config(tmp_path)
        outcome = run_experiment(cfg)
        text = report(outcome.directory)
        assert "max|error| per joint" in text
        assert (outcome.directory / "report.txt").exists()
        assert (outcome.directory / "report.csv").exists()

    def test_report_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError):
            report(tmp_path / "missing")

    def test_report_empty_directory(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ConfigError):
            report(empty)

    def test_partial_run_reports_fault(self, tmp_path, monkeypatch):
        import gpilc.harness as hmod
        from gpilc.plant import LtiPlant

        cfg = tiny_lti_config(tmp_path)
        cfg.learning = slow_learning_config(
            max_iterations=6, settle_seconds=2.0, frequency_cutoff=20.0
        )

        class Flaky:
            def __init__(self, inner):
                self.inner = inner
                self.calls = 0

            def execute(self, u):
                self.calls += 1
                run = self.inner.execute(u)
                if self.calls >= 5:  # fault at iteration 3
                    run.fault = "injected fault"
                return run

        original = hmod._build_plant
        monkeypatch.setattr(hmod, "_build_plant", lambda c: Flaky(original(c)))
        outcome = run_experiment(cfg)
        assert not outcome.ok
        text = report(outcome.directory)
        assert "fault" in text.lower()
        rows = (outcome.directory / "convergence.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4  # iterations 0..3, faulted at 3

    def test_unknown_plant_rejected(self, tmp_path):
        cfg = tiny_lti_config(tmp_path)
        cfg.plant = "hexapod"
        with pytest.raises(ConfigError):
            run_experiment(cfg)

    def test_malformed_lti_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"entries": [[{"num": [1.0]}]]}))
        with pytest.raises(ConfigError):
            load_lti_plant(path)


class TestPresets:
    def test_preset_shapes(self):
        slow = RunConfig.slow_arm()
        fast = RunConfig.fast_arm()
        assert slow.trajectory.amplitudes == (math.pi, math.pi)
        assert fast.trajectory.amplitudes == (math.pi / 2, math.pi / 2)
        assert slow.trajectory.duration == 10.0
        assert fast.trajectory.duration == 4.0
        assert fast.seed_passes == 2
        assert fast_learning_config().gain_fraction == pytest.approx(0.35)
        assert slow_learning_config().gain_fraction == pytest.approx(0.6)
