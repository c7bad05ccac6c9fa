"""Experiment orchestration: trajectories, seeding inputs, run persistence.

A run directory is self-describing: it stores the exact configuration, the
seed trajectory, per-iteration trajectory CSVs, a convergence table, model
snapshots, per-pose frequency-response tables, and a plain-text summary.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ilc, signals
from .cgpr import TransferMatrixGP
from .ilc import IterationRecord, LearningConfig, LearningResult
from .plant import ArmParams, LtiPlant, SeaArm, TransferFunction, lti_test_plant
from .signals import TimeSeries, dft_grid

REFERENCE_POSES = [(math.pi / 2.0, 0.0), (0.0, math.pi / 2.0)]


class ConfigError(ValueError):
    """Raised for malformed run configurations."""


@dataclass(frozen=True)
class TrajectorySpec:
    """Desired-output description with a sinusoidal acceleration profile."""

    kind: str = "slow_full_range"
    amplitudes: tuple = (math.pi, math.pi)
    duration: float = 10.0
    custom_path: str | None = None

    KINDS = ("slow_full_range", "fast_short_range", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"trajectory kind must be one of {self.KINDS}")
        if self.duration <= 0:
            raise ConfigError("trajectory duration must be positive")
        if self.kind == "custom" and not self.custom_path:
            raise ConfigError("custom trajectories need custom_path")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))

    @classmethod
    def slow(cls) -> "TrajectorySpec":
        return cls("slow_full_range", (math.pi, math.pi), 10.0)

    @classmethod
    def fast(cls) -> "TrajectorySpec":
        return cls("fast_short_range", (math.pi / 2.0, math.pi / 2.0), 4.0)


def slow_learning_config(**overrides) -> LearningConfig:
    """Learning settings tuned for the slow full-range arm experiment.

    The cutoff sits below the arm's first structural resonance (a stationary
    kernel cannot track the sharp peak, and the trajectory has no energy
    there), and the long settle lets each seed step ring out before the next.
    """
    base = dict(
        frequency_cutoff=18.0,
        settle_seconds=4.0,
        refit_freeze_after=3,
        stall_iterations=0,
        mask_blend_seconds=0.2,
    )
    base.update(overrides)
    return LearningConfig(**base)


def fast_learning_config(**overrides) -> LearningConfig:
    """Learning settings tuned for the fast short-range arm experiment.

    The fast trajectory crosses parameter regions in well under a window, so
    gains are backed off and region blending widened to tolerate the larger
    within-region model drift.
    """
    base = dict(
        frequency_cutoff=18.0,
        settle_seconds=4.0,
        refit_freeze_after=3,
        stall_iterations=0,
        mask_blend_seconds=0.4,
        gain_fraction=0.35,
    )
    base.update(overrides)
    return LearningConfig(**base)


@dataclass
class RunConfig:
    """Full configuration of one experiment run."""

    plant: str = "sea-arm"
    arm: ArmParams = field(default_factory=ArmParams)
    learning: LearningConfig = field(default_factory=slow_learning_config)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec.slow)
    sample_rate: float = 100.0
    seed: int = 0
    noise_std: float = 0.0
    out_dir: str = "runs/latest"
    seed_passes: int = 1

    @classmethod
    def slow_arm(cls, **overrides) -> "RunConfig":
        return cls(
            learning=slow_learning_config(),
            trajectory=TrajectorySpec.slow(),
            seed_passes=1,
            **overrides,
        )

    @classmethod
    def fast_arm(cls, **overrides) -> "RunConfig":
        return cls(
            learning=fast_learning_config(),
            trajectory=TrajectorySpec.fast(),
            seed_passes=2,
            **overrides,
        )


def generate_trajectory(spec: TrajectorySpec, sample_rate: float) -> TimeSeries:
    """Smooth point-to-point motion: one sinusoidal acceleration period per joint.

    Acceleration a(t) = A sin(2 pi t / T) integrated twice from rest covers the
    requested amplitude with exactly zero boundary velocity and acceleration.
    """
    if spec.kind == "custom":
        return signals.read_timeseries_csv(spec.custom_path)
    if spec.duration <= 0:
        raise ConfigError("duration must be positive")
    n = max(2, int(round(spec.duration * sample_rate)) + 1)
    t = np.arange(n) / sample_rate
    # snap the period to the sample grid so the boundary conditions hold
    # exactly at the first and last samples
    T = (n - 1) / sample_rate
    channels = {}
    for i, amp in enumerate(spec.amplitudes):
        # displacement(T) = A T^2 / (2 pi)  =>  A = 2 pi amp / T^2
        A = 2.0 * math.pi * amp / T**2
        pos = A * (T / (2.0 * math.pi)) * t - A * (T / (2.0 * math.pi)) ** 2 * np.sin(
            2.0 * math.pi * t / T
        )
        channels[f"y{i + 1}"] = pos
    return TimeSeries(sample_rate=sample_rate, channels=channels)


def generate_seed_trajectory(
    y_d: TimeSeries, config: LearningConfig, passes: int = 1
) -> TimeSeries:
    """Staircase through the quantized levels of the desired trajectory.

    Every distinct consecutive quantized level combination is held for the
    training-window length plus a settle margin, so each step yields one
    clean excitation window. When several channels change level together,
    the change is broken into one step per channel: simultaneous steps make
    the input spectra of a window collinear and the per-input transfer
    entries unidentifiable from it. With passes > 1 the staircase retraces
    itself (up, down, up, ...) for denser training coverage.
    """
    q = np.stack(
        [ilc.quantize(y_d.channels[name], config.param_quantum) for name in y_d.channel_names]
    )
    changed = np.any(q[:, 1:] != q[:, :-1], axis=0)
    starts = [0] + list(np.nonzero(changed)[0] + 1)
    raw_levels = q[:, starts]

    # stagger multi-channel changes into single-channel steps
    columns = [raw_levels[:, 0]]
    for c in range(1, raw_levels.shape[1]):
        prev = columns[-1].copy()
        target = raw_levels[:, c]
        for ch in range(raw_levels.shape[0]):
            if target[ch] != prev[ch]:
                prev = prev.copy()
                prev[ch] = target[ch]
                columns.append(prev)
    for extra in range(1, passes):
        retrace = columns[-2::-1] if extra % 2 == 1 else columns[1:]
        columns.extend(col.copy() for col in retrace)
    levels = np.stack(columns, axis=1)

    hold = config.window_seconds + config.settle_seconds
    hold_samples = max(2, int(round(hold * y_d.sample_rate)))
    channels = {}
    for i in range(q.shape[0]):
        channels[f"u{i + 1}"] = np.repeat(levels[i], hold_samples)
    return TimeSeries(sample_rate=y_d.sample_rate, channels=channels)


def _build_plant(config: RunConfig):
    if config.plant == "sea-arm":
        return SeaArm(
            params=config.arm, noise_std=config.noise_std, noise_seed=config.seed
        )
    if config.plant.startswith("lti:"):
        path = config.plant[len("lti:"):]
        return load_lti_plant(path)
    raise ConfigError(f"unknown plant selection {config.plant!r}")


def load_lti_plant(path) -> LtiPlant:
    """LTI plant from a JSON file: {"entries": [[{"num": [...], "den": [...]}]]}."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        entries = [
            [TransferFunction(tuple(e["num"]), tuple(e["den"])) for e in row]
            for row in doc["entries"]
        ]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed LTI plant file {path}: {exc}") from exc
    padding = int(doc.get("padding_factor", 1))
    return lti_test_plant(entries, padding_factor=padding)


@dataclass
class RunOutcome:
    """Artifact directory plus the in-memory learning result."""

    directory: Path
    learning: LearningResult

    @property
    def ok(self) -> bool:
        res = self.learning
        if res.seed_record is not None and res.seed_record.fault:
            return False
        return all(r.ok for r in res.records)


def run_experiment(config: RunConfig) -> RunOutcome:
    """Execute the configured experiment and persist all artifacts.

    Raises nothing on plant faults; partial artifacts are written and the
    summary notes the fault (the CLI maps this to a nonzero exit code).
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.ini")

    plant = _build_plant(config)
    y_d = generate_trajectory(config.trajectory, config.sample_rate)
    seed_input = generate_seed_trajectory(y_d, config.learning, passes=config.seed_passes)
    signals.write_timeseries_csv(y_d, out / "desired.csv")
    signals.write_timeseries_csv(seed_input, out / "seed_input.csv")

    snapshots = out / "models"
    snapshots.mkdir(exist_ok=True)

    def sink(ref: str, doc: dict) -> None:
        with open(snapshots / f"{ref}.json", "w") as fh:
            json.dump(doc, fh)

    result = ilc.run_learning(
        plant, y_d, config.learning, seed_input, snapshot_sink=sink
    )

    if result.seed_record is not None:
        _write_iteration(out / "seed_run.csv", result.seed_record)
    for record in result.records:
        _write_iteration(out / f"iteration_{record.index:02d}.csv", record)
    _write_convergence(out / "convergence.csv", result.records)
    if result.model is not None:
        result.model.save(out / "model_final.json")
        _write_pose_tables(out, result.model, config)
    _write_summary(out / "summary.txt", config, result)
    return RunOutcome(directory=out, learning=result)


def _write_iteration(path, record: IterationRecord) -> None:
    channels = {}
    for name in record.input.channel_names:
        channels[name] = record.input.channels[name]
    n = record.output.n_samples
    for name in record.output.channel_names:
        channels[name] = record.output.channels[name]
    for name in record.error.channel_names:
        channels[name] = record.error.channels[name]
    shortest = min(v.size for v in channels.values())
    ts = TimeSeries(
        sample_rate=record.input.sample_rate,
        channels={k: v[:shortest] for k, v in channels.items()},
        start_time=record.input.start_time,
    )
    signals.write_timeseries_csv(ts, path)


def _write_convergence(path, records: list[IterationRecord]) -> None:
    with open(path, "w") as fh:
        if not records:
            fh.write("iteration\n")
            return
        n_ch = records[0].max_abs_error.size
        cols = ["iteration"]
        cols += [f"max_abs_e{i + 1}" for i in range(n_ch)]
        cols += [f"rms_e{i + 1}" for i in range(n_ch)]
        cols += ["fault"]
        fh.write(",".join(cols) + "\n")
        for r in records:
            row = [str(r.index)]
            row += [f"{v:.12e}" for v in r.max_abs_error]
            row += [f"{v:.12e}" for v in r.rms_error]
            row += [r.fault or ""]
            fh.write(",".join(row) + "\n")


def _write_pose_tables(out: Path, model: TransferMatrixGP, config: RunConfig) -> None:
    if model.input_dim <= 1:
        return
    n_pose_params = model.input_dim - 1
    horizon = generate_trajectory(config.trajectory, config.sample_rate).n_samples
    grid = dft_grid(horizon, config.sample_rate)
    grid = grid[grid <= config.learning.cutoff(config.sample_rate)]
    for p_idx, pose in enumerate(REFERENCE_POSES):
        pose_vec = np.asarray(pose[:n_pose_params], dtype=float)
        lm = ilc.local_model(model, pose_vec, grid)
        path = out / f"bode_pose{p_idx + 1}.csv"
        with open(path, "w") as fh:
            header = ["omega"]
            for i in range(model.n_outputs):
                for j in range(model.n_inputs):
                    header += [
                        f"mag_{i + 1}{j + 1}",
                        f"phase_{i + 1}{j + 1}",
                        f"std_{i + 1}{j + 1}",
                    ]
            fh.write(",".join(header) + "\n")
            for k, w in enumerate(grid):
                row = [f"{w:.9e}"]
                for i in range(model.n_outputs):
                    for j in range(model.n_inputs):
                        g = lm.estimate.mean[i, j, k]
                        row += [
                            f"{abs(g):.9e}",
                            f"{math.degrees(np.angle(g)):.9e}",
                            f"{math.sqrt(lm.estimate.variance[i, j, k]):.9e}",
                        ]
                fh.write(",".join(row) + "\n")


def _format_vector(values) -> str:
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


def _write_summary(path, config: RunConfig, result: LearningResult) -> None:
    lines = []
    lines.append(f"plant: {config.plant}")
    lines.append(f"trajectory: {config.trajectory.kind} duration {config.trajectory.duration} s")
    lines.append(f"iterations recorded: {len(result.records)}")
    lines.append(f"stop reason: {result.stop_reason}")
    lines.append(f"converged: {result.converged}")
    lines.append(f"dc gain estimate: {_format_vector(result.dc_gain)}")
    ok_records = [r for r in result.records if r.ok]
    if ok_records:
        first, last = ok_records[0], ok_records[-1]
        lines.append(
            f"initial max abs error (iteration {first.index}): "
            f"{_format_vector(first.max_abs_error)} rad"
        )
        lines.append(
            f"final max abs error (iteration {last.index}): "
            f"{_format_vector(last.max_abs_error)} rad"
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            reduction = 1.0 - last.max_abs_error / first.max_abs_error
        lines.append(f"error reduction: {_format_vector(reduction * 100.0)} %")
    faults = [r for r in result.records if not r.ok]
    for r in faults:
        lines.append(f"FAULT at iteration {r.index}: {r.fault}")
    if result.seed_record is not None and result.seed_record.fault:
        lines.append(f"FAULT in seed run: {result.seed_record.fault}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def report(run_dir) -> str:
    """Digest a (possibly partial) run directory into a printable summary.

    Returns the summary text; also writes report.txt and report.csv in place.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"{run_dir} is not a run directory")
    convergence_path = run_dir / "convergence.csv"
    if not convergence_path.exists():
        raise ConfigError(f"{run_dir} has no convergence.csv")

    with open(convergence_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise ConfigError(f"{convergence_path} contains no iterations")

    n_ch = sum(1 for c in header if c.startswith("max_abs_"))
    lines = [f"run directory: {run_dir}"]
    summary_path = run_dir / "summary.txt"
    if summary_path.exists():
        lines.append(summary_path.read_text().rstrip())

    first = rows[0]
    last = rows[-1]
    init_max = [float(v) for v in first[1 : 1 + n_ch]]
    final_max = [float(v) for v in last[1 : 1 + n_ch]]
    lines.append(f"iterations: {first[0]} .. {last[0]} ({len(rows)} rows)")
    lines.append(f"initial [max|error| per joint]: {_format_vector(init_max)} rad")
    lines.append(f"final   [max|error| per joint]: {_format_vector(final_max)} rad")
    faults = [r for r in rows if r[-1]]
    if faults:
        lines.append(f"fault noted at iteration {faults[0][0]}: {faults[0][-1]}")

    hyper_lines = _hyperparameter_lines(run_dir / "model_final.json")
    lines.extend(hyper_lines)

    text = "\n".join(lines) + "\n"
    (run_dir / "report.txt").write_text(text)
    with open(run_dir / "report.csv", "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return text


def _hyperparameter_lines(model_path: Path) -> list[str]:
    if not model_path.exists():
        return []
    with open(model_path) as fh:
        doc = json.load(fh)
    lines = []
    for i, row in enumerate(doc.get("rows", [])):
        for j, params in enumerate(row.get("params", [])):
            ls = ", ".join(f"{v:.4g}" for v in params["length_scales"])
            lines.append(
                f"kernel[{i + 1}][{j + 1}]: signal_var={params['signal_variance']:.4g} "
                f"length_scales=[{ls}] noise_var={params['noise_variance']:.4g}"
            )
    return lines


# -- configuration file round trip ------------------------------------------


def config_text(config: RunConfig) -> str:
    import io

    buf = io.StringIO()
    _config_parser(config).write(buf)
    return buf.getvalue()


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        _config_parser(config).write(fh)


def _config_parser(config: RunConfig) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser["run"] = {
        "plant": config.plant,
        "sample_rate": repr(config.sample_rate),
        "seed": str(config.seed),
        "noise_std": repr(config.noise_std),
        "out_dir": str(config.out_dir),
        "seed_passes": str(config.seed_passes),
    }
    parser["trajectory"] = {
        "kind": config.trajectory.kind,
        "amplitudes": " ".join(repr(a) for a in config.trajectory.amplitudes),
        "duration": repr(config.trajectory.duration),
        "custom_path": config.trajectory.custom_path or "none",
    }
    parser["learning"] = {
        f.name: _to_ini(getattr(config.learning, f.name))
        for f in dataclasses.fields(LearningConfig)
    }
    parser["arm"] = {
        f.name: repr(getattr(config.arm, f.name)) for f in dataclasses.fields(ArmParams)
    }
    return parser


def _to_ini(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def _from_ini(text: str, target_type):
    text = text.strip()
    if text.lower() == "none":
        return None
    if target_type is bool or text.lower() in ("true", "false"):
        return text.lower() == "true"
    if target_type is int:
        return int(text)
    return float(text)


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    config = RunConfig()
    try:
        if parser.has_section("run"):
            sec = parser["run"]
            config.plant = sec.get("plant", config.plant)
            config.sample_rate = float(sec.get("sample_rate", config.sample_rate))
            config.seed = int(sec.get("seed", config.seed))
            config.noise_std = float(sec.get("noise_std", config.noise_std))
            config.out_dir = sec.get("out_dir", config.out_dir)
            config.seed_passes = int(sec.get("seed_passes", config.seed_passes))
        if parser.has_section("trajectory"):
            sec = parser["trajectory"]
            kind = sec.get("kind", config.trajectory.kind)
            amps = tuple(
                float(a)
                for a in sec.get(
                    "amplitudes",
                    " ".join(str(a) for a in config.trajectory.amplitudes),
                ).split()
            )
            duration = float(sec.get("duration", config.trajectory.duration))
            custom = sec.get("custom_path", "none")
            custom = None if custom.strip().lower() == "none" else custom
            config.trajectory = TrajectorySpec(kind, amps, duration, custom)
        if parser.has_section("learning"):
            sec = parser["learning"]
            kwargs = {}
            for f in dataclasses.fields(LearningConfig):
                if f.name in sec:
                    default = getattr(LearningConfig(), f.name)
                    target = type(default) if default is not None else float
                    kwargs[f.name] = _from_ini(sec[f.name], target)
            config.learning = LearningConfig(**{**dataclasses.asdict(LearningConfig()), **kwargs})
        if parser.has_section("arm"):
            sec = parser["arm"]
            kwargs = {}
            for f in dataclasses.fields(ArmParams):
                if f.name in sec:
                    kwargs[f.name] = float(sec[f.name])
            config.arm = ArmParams(**{**dataclasses.asdict(ArmParams()), **kwargs})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value in {path}: {exc}") from exc
    return config
