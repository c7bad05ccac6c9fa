"""Iterative learning loop: training-data extraction, local models, input updates.

Each iteration runs the plant, windows the measured data around quantized
parameter changes, turns thresholded window spectra into training points,
refits the transfer-matrix GP on the cumulative set, and applies the
frequency-domain correction through per-parameter-combination local models.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import cgpr, convergence, signals
from .signals import Spectrum, TimeSeries, Window


@dataclass(frozen=True)
class LearningConfig:
    """Knobs of the learning protocol; defaults follow the reference procedure."""

    param_quantum: float = math.pi / 10.0
    window_seconds: float = 2.0
    threshold_fraction: float = 0.5
    gain_fraction: float = 0.6
    sigma_multiple: float = 2.0
    max_iterations: int = 20
    frequency_cutoff: float | None = None  # rad/s; None -> Nyquist / 4
    window_lead_seconds: float = 0.25
    mask_blend_seconds: float = 0.2
    parameterize_on_outputs: bool = True
    shared_hyperparams: bool = False
    stall_tolerance: float = 1e-4
    stall_iterations: int = 3  # 0 disables early stopping
    refit_freeze_after: int | None = None
    fit_seed: int = 0
    fit_starts: int = 4
    fit_max_iter: int = 150
    settle_seconds: float = 1.0

    def __post_init__(self):
        if self.param_quantum <= 0:
            raise ValueError("param_quantum must be positive")
        for name in ("threshold_fraction", "gain_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        if self.sigma_multiple <= 0:
            raise ValueError("sigma_multiple must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")

    def cutoff(self, sample_rate: float) -> float:
        if self.frequency_cutoff is not None:
            return self.frequency_cutoff
        return math.pi * sample_rate / 4.0


@dataclass
class IterationRecord:
    """Everything measured and derived in one learning iteration."""

    index: int
    input: TimeSeries
    output: TimeSeries
    error: TimeSeries
    max_abs_error: np.ndarray
    rms_error: np.ndarray
    model_snapshot_ref: str = ""
    fault: str | None = None

    @property
    def ok(self) -> bool:
        return self.fault is None


@dataclass
class UpdateDetails:
    """Diagnostics from one input update."""

    combos: np.ndarray
    rho: np.ndarray  # (n_combos, n_outputs, n_selected_bins)
    correction_spectra: np.ndarray  # (n_combos, n_inputs, n_bins_full)
    selected_bins: np.ndarray
    feasible_fraction: float


@dataclass
class LearningResult:
    records: list[IterationRecord]
    model: object
    dc_gain: np.ndarray
    seed_record: IterationRecord | None
    converged: bool
    stop_reason: str


def quantize(values: np.ndarray, quantum: float) -> np.ndarray:
    """Round to the nearest multiple of quantum, ties away from zero."""
    if quantum <= 0:
        raise ValueError("quantum must be positive")
    values = np.asarray(values, dtype=float)
    return quantum * np.sign(values) * np.floor(np.abs(values) / quantum + 0.5)


def quantize_params(
    ts: TimeSeries, quantum: float, channels: list[str] | None = None
) -> TimeSeries:
    """Quantize the named (default: all) channels of a TimeSeries."""
    names = channels if channels is not None else ts.channel_names
    new = dict(ts.channels)
    for name in names:
        new[name] = quantize(ts.channels[name], quantum)
    return TimeSeries(sample_rate=ts.sample_rate, channels=new, start_time=ts.start_time)


def _windows_for(params: TimeSeries, config: LearningConfig) -> list[Window]:
    if not config.parameterize_on_outputs:
        n = params.n_samples
        return [Window(0, n, np.zeros(0))] if n >= 2 else []
    qp = quantize_params(params, config.param_quantum)
    return signals.extract_windows(qp, qp.channel_names, config.window_seconds)


def build_training_update(
    u_k: TimeSeries,
    y_k: TimeSeries,
    config: LearningConfig,
    params_source: TimeSeries | None = None,
) -> list[list[cgpr.TrainingPoint]]:
    """Training points per output row from one iteration's trajectories.

    Windows follow quantized-parameter changes in params_source (defaults to
    the measured outputs; the learning loop passes the planned trajectory so
    that window boundaries and combination labels stay noise-free). Each
    window's segment is pulled back by window_lead_seconds so the input
    transition that caused the parameter change lands inside the segment, and
    the transform is taken of the first difference of each segment: the level
    offsets that would otherwise swamp every bin vanish, a step input becomes
    a fully-contained impulse (so the segment ratio actually equals the local
    transfer function), and the difference factor cancels between input and
    output. A bin is kept for output i when the differenced |Y_i| clears the
    magnitude threshold together with at least one differenced input spectrum,
    and lies inside the correction band (the learning loop never queries the
    model above the frequency cutoff, so data there would only distort the
    fitted length scales).
    """
    if u_k.n_samples != y_k.n_samples:
        raise ValueError("input and output trajectories must be aligned")
    in_names = u_k.channel_names
    out_names = y_k.channel_names
    lead = int(round(config.window_lead_seconds * u_k.sample_rate))
    source = params_source if params_source is not None else y_k
    full_len = int(round(config.window_seconds * u_k.sample_rate))
    per_row: list[list[cgpr.TrainingPoint]] = [[] for _ in out_names]
    for window in _windows_for(source, config):
        if config.parameterize_on_outputs and window.length < full_len:
            # a truncated tail window lives on its own frequency grid and its
            # response never settles; skip it rather than pollute the fit
            continue
        start = max(0, window.start_index - lead)
        sl = slice(start, start + window.length)

        def differenced(values: np.ndarray) -> Spectrum:
            return signals.forward_transform(np.diff(values[sl]), u_k.sample_rate)

        u_spectra = [differenced(u_k.channels[name]) for name in in_names]
        in_band = np.nonzero(
            u_spectra[0].frequencies <= config.cutoff(u_k.sample_rate)
        )[0]
        band_freqs = u_spectra[0].frequencies[in_band]
        u_band = [Spectrum(band_freqs, s.values[in_band]) for s in u_spectra]
        for i, out_name in enumerate(out_names):
            y_spec = differenced(y_k.channels[out_name])
            y_band = Spectrum(band_freqs, y_spec.values[in_band])
            kept: set[int] = set()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # all-zero spectra are expected here
                for u_spec in u_band:
                    kept.update(
                        in_band[k]
                        for k in signals.threshold_spectra(
                            u_spec, y_band, config.threshold_fraction
                        )
                    )
            per_row[i].extend(
                cgpr.samples_from_spectra(
                    u_spectra, y_spec, window, np.array(sorted(kept), dtype=int)
                )
            )
    return per_row


@dataclass
class LocalModel:
    """Transfer-matrix estimate on a frequency grid with per-bin inverses."""

    estimate: cgpr.ModelEstimate
    inverse: np.ndarray  # (n_inputs, n_outputs, n_freq)
    invertible: np.ndarray  # (n_freq,) bool


def _invert_per_frequency(mean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_out, n_in, n_freq = mean.shape
    inverse = np.zeros((n_in, n_out, n_freq), dtype=complex)
    invertible = np.zeros(n_freq, dtype=bool)
    for k in range(n_freq):
        G = mean[:, :, k]
        try:
            if np.linalg.cond(G) > 1e12:
                continue
            inverse[:, :, k] = np.linalg.inv(G)
            invertible[k] = True
        except np.linalg.LinAlgError:
            continue
    return inverse, invertible


def local_model(model, params: np.ndarray, freq_grid: np.ndarray) -> LocalModel:
    """Evaluate the trained model at fixed parameters over a frequency grid."""
    params = np.asarray(params, dtype=float)
    freq_grid = np.asarray(freq_grid, dtype=float)
    locations = np.column_stack(
        [freq_grid] + [np.full(freq_grid.size, p) for p in params]
    )
    estimate = model.predict(locations)
    inverse, invertible = _invert_per_frequency(estimate.mean)
    return LocalModel(estimate=estimate, inverse=inverse, invertible=invertible)


def update_input_detailed(
    u_prev: TimeSeries,
    e_prev: TimeSeries,
    model,
    config: LearningConfig,
    params: TimeSeries | None = None,
) -> tuple[TimeSeries, UpdateDetails]:
    """Frequency-domain input correction applied per parameter combination.

    For every unique quantized parameter combination along the trajectory, the
    local model supplies the per-frequency inverse and uncertainty, gains come
    from the worst-case bound scaled by gain_fraction, and the globally
    inverse-transformed correction is added at matching time indices, with the
    region masks cross-faded over mask_blend_seconds (hard-edged masks would
    inject broadband steps at region boundaries that fall outside the
    correction band and can never be unlearned). Frequencies above the cutoff
    and infeasible bins contribute nothing.
    """
    n = u_prev.n_samples
    fs = u_prev.sample_rate
    in_names = u_prev.channel_names
    out_names = e_prev.channel_names
    n_in, n_out = len(in_names), len(out_names)
    grid = signals.dft_grid(n, fs)
    n_bins = grid.size
    selected = np.nonzero(grid <= config.cutoff(fs))[0]

    if config.parameterize_on_outputs and params is not None:
        q = np.stack(
            [quantize(params.channels[name], config.param_quantum) for name in params.channel_names]
        )
        combos, inverse_idx = np.unique(q.T, axis=0, return_inverse=True)
    else:
        combos = np.zeros((1, 0))
        inverse_idx = np.zeros(n, dtype=int)

    errors = np.stack([e_prev.channels[name] for name in out_names])
    new_channels = {name: u_prev.channels[name].copy() for name in in_names}
    n_combos = combos.shape[0]
    rho_all = np.zeros((n_combos, n_out, selected.size))
    spectra_all = np.zeros((n_combos, n_in, n_bins), dtype=complex)

    if np.all(errors == 0.0):
        # exact fixed point: zero error leaves the input untouched
        details = UpdateDetails(
            combos=combos,
            rho=rho_all,
            correction_spectra=spectra_all,
            selected_bins=selected,
            feasible_fraction=0.0,
        )
        return (
            TimeSeries(sample_rate=fs, channels=new_channels, start_time=u_prev.start_time),
            details,
        )

    E = np.stack([np.fft.rfft(errors[i]) for i in range(n_out)])

    # one batched prediction over (combo, bin) pairs keeps the GP solves dense
    locs = np.empty((n_combos * selected.size, 1 + combos.shape[1]))
    for c in range(n_combos):
        block = slice(c * selected.size, (c + 1) * selected.size)
        locs[block, 0] = grid[selected]
        locs[block, 1:] = combos[c]
    estimate = model.predict(locs)
    mean = estimate.mean.reshape(n_out, n_in, n_combos, selected.size)
    var = estimate.variance.reshape(n_out, n_in, n_combos, selected.size)

    blend = _blend_weights(inverse_idx, n_combos, config.mask_blend_seconds, fs)
    feasible_count = 0
    for c in range(n_combos):
        corr_spec = np.zeros((n_in, n_bins), dtype=complex)
        for b, k in enumerate(selected):
            G = mean[:, :, c, b]
            try:
                if not np.all(np.isfinite(G)) or np.linalg.cond(G) > 1e12:
                    continue
                G_inv = np.linalg.inv(G)
            except np.linalg.LinAlgError:
                continue
            widths = config.sigma_multiple * np.sqrt(var[:, :, c, b])
            gains = convergence.bounded_uncertainty_gain(
                G,
                convergence.ModelErrorBounds(delta_a=widths, delta_b=widths),
                gain_fraction=config.gain_fraction,
            )
            rho_all[c, :, b] = gains.rho
            feasible_count += int(np.count_nonzero(gains.feasible))
            if np.any(gains.rho):
                corr_spec[:, k] = gains.rho * (G_inv @ E[:, k])
        spectra_all[c] = corr_spec
        if not np.any(corr_spec) or not np.any(blend[c]):
            continue
        for j, name in enumerate(in_names):
            corr_time = np.fft.irfft(corr_spec[j], n=n)
            new_channels[name] += blend[c] * corr_time

    details = UpdateDetails(
        combos=combos,
        rho=rho_all,
        correction_spectra=spectra_all,
        selected_bins=selected,
        feasible_fraction=feasible_count / max(1, n_combos * selected.size * n_out),
    )
    return (
        TimeSeries(sample_rate=fs, channels=new_channels, start_time=u_prev.start_time),
        details,
    )


def _blend_weights(
    inverse_idx: np.ndarray, n_combos: int, blend_seconds: float, sample_rate: float
) -> np.ndarray:
    """Partition-of-unity region weights: indicator masks smoothed in time.

    Smoothing each combination's indicator with one shared kernel keeps the
    weights summing to one, so identical per-region corrections reduce to the
    plain global correction.
    """
    n = inverse_idx.size
    masks = np.zeros((n_combos, n))
    masks[inverse_idx, np.arange(n)] = 1.0
    width = int(round(blend_seconds * sample_rate))
    if width < 2 or n_combos == 1:
        return masks
    kernel = np.hanning(width + 2)[1:-1]
    kernel /= kernel.sum()
    # edge-pad before smoothing so the weights still sum to one at the ends
    padded = np.pad(masks, ((0, 0), (width, width)), mode="edge")
    smoothed = np.stack([np.convolve(m, kernel, mode="same") for m in padded])
    return smoothed[:, width:-width]


def update_input(
    u_prev: TimeSeries,
    e_prev: TimeSeries,
    model,
    config: LearningConfig,
    params: TimeSeries | None = None,
) -> TimeSeries:
    """Next-iteration input; see update_input_detailed for the mechanics."""
    return update_input_detailed(u_prev, e_prev, model, config, params)[0]


def estimate_dc_gain(
    seed_input: TimeSeries, seed_output: TimeSeries, config: LearningConfig
) -> np.ndarray:
    """Per-channel DC gain from the staircase seed run's steady states.

    Each held input level contributes the mean output over its settled tail;
    the gain is the least-squares slope of steady-state output change against
    input step size, channel by channel.
    """
    in_names = seed_input.channel_names
    out_names = seed_output.channel_names
    n = min(seed_input.n_samples, seed_output.n_samples)
    u = seed_input.stack()[:, :n]
    y = seed_output.stack()[:, :n]

    level_change = np.any(u[:, 1:] != u[:, :-1], axis=0)
    boundaries = [0] + list(np.nonzero(level_change)[0] + 1) + [n]
    u_levels, y_levels = [], []
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if b - a < 4:
            continue
        tail = slice(a + 3 * (b - a) // 4, b)
        u_levels.append(u[:, a])
        y_levels.append(np.mean(y[:, tail], axis=1))
    gains = np.ones(len(out_names))
    if len(u_levels) >= 2:
        du = np.diff(np.stack(u_levels, axis=1), axis=1)
        dy = np.diff(np.stack(y_levels, axis=1), axis=1)
        for i in range(min(len(in_names), len(out_names))):
            denom = float(np.dot(du[i], du[i]))
            if denom > 1e-12:
                gains[i] = float(np.dot(du[i], dy[i])) / denom
    small = np.abs(gains) < 1e-6
    if np.any(small):
        warnings.warn("near-zero DC gain estimate; clamping to 1.0")
        gains[small] = 1.0
    return gains


def _make_record(
    index: int, u: TimeSeries, run, y_d: TimeSeries, snapshot_ref: str = ""
) -> IterationRecord:
    y = run.outputs
    n = min(y.n_samples, y_d.n_samples)
    err = {}
    for i, name in enumerate(y_d.channel_names):
        err[f"e{i + 1}"] = y_d.channels[name][:n] - y.channels[y.channel_names[i]][:n]
    error = TimeSeries(sample_rate=y.sample_rate, channels=err, start_time=y.start_time)
    stacked = error.stack()
    return IterationRecord(
        index=index,
        input=u,
        output=y,
        error=error,
        max_abs_error=np.max(np.abs(stacked), axis=1),
        rms_error=np.sqrt(np.mean(stacked**2, axis=1)),
        model_snapshot_ref=snapshot_ref,
        fault=run.fault,
    )


def run_learning(
    plant,
    y_d: TimeSeries,
    config: LearningConfig,
    seed_input: TimeSeries,
    snapshot_sink=None,
) -> LearningResult:
    """Run the full learning protocol against a plant.

    The seed trajectory is executed first to train the initial model and
    estimate the DC gain; iteration 0 then uses the desired trajectory scaled
    by the DC gain, and later iterations apply model-based corrections until
    max_iterations or until the maximum error stops improving.
    """
    n_out = len(y_d.channel_names)
    input_dim = 1 + (n_out if config.parameterize_on_outputs else 0)

    seed_run = plant.execute(seed_input)
    seed_record = _make_record(-1, seed_input, seed_run, _resample_like(y_d, seed_input))
    if seed_run.fault is not None:
        return LearningResult(
            records=[],
            model=None,
            dc_gain=np.ones(n_out),
            seed_record=seed_record,
            converged=False,
            stop_reason=f"seed run fault: {seed_run.fault}",
        )

    model = cgpr.TransferMatrixGP(
        n_outputs=n_out,
        n_inputs=len(seed_input.channel_names),
        input_dim=input_dim,
        shared_hyperparams=config.shared_hyperparams,
    )
    # the commanded staircase is the noise-free parameter trajectory of the seed run
    model.add_training_points(
        build_training_update(seed_input, seed_run.outputs, config, params_source=seed_input)
    )
    model.fit(seed=config.fit_seed, n_starts=config.fit_starts, max_iter=config.fit_max_iter)
    _emit_snapshot(snapshot_sink, "model-seed", model)

    dc_gain = estimate_dc_gain(seed_input, seed_run.outputs, config)
    u = TimeSeries(
        sample_rate=y_d.sample_rate,
        channels={
            f"u{i + 1}": y_d.channels[name] / dc_gain[i]
            for i, name in enumerate(y_d.channel_names)
        },
        start_time=y_d.start_time,
    )

    records: list[IterationRecord] = []
    stall_count = 0
    prev_max = None
    converged = False
    stop_reason = "max_iterations"
    for k in range(config.max_iterations + 1):
        run = plant.execute(u)
        record = _make_record(k, u, run, y_d)
        records.append(record)
        if run.fault is not None:
            stop_reason = f"plant fault at iteration {k}: {run.fault}"
            break
        cur_max = float(np.max(record.max_abs_error))
        if config.stall_iterations > 0:
            if cur_max < config.stall_tolerance:
                converged = True
                stop_reason = f"error below {config.stall_tolerance} rad"
                break
            if prev_max is not None and prev_max - cur_max < config.stall_tolerance:
                stall_count += 1
                if stall_count >= config.stall_iterations:
                    converged = True
                    stop_reason = (
                        f"no improvement above {config.stall_tolerance} rad for "
                        f"{config.stall_iterations} iterations"
                    )
                    break
            else:
                stall_count = 0
        prev_max = cur_max
        if k == config.max_iterations:
            break

        model.add_training_points(
            build_training_update(u, run.outputs, config, params_source=y_d)
        )
        refit = config.refit_freeze_after is None or k <= config.refit_freeze_after
        if refit:
            model.fit(
                seed=config.fit_seed,
                n_starts=config.fit_starts,
                max_iter=config.fit_max_iter,
            )
        else:
            model.refresh()
        ref = f"model-{k:02d}"
        _emit_snapshot(snapshot_sink, ref, model)
        record.model_snapshot_ref = ref

        params = y_d if config.parameterize_on_outputs else None
        u = update_input(u, record.error, model, config, params=params)

    return LearningResult(
        records=records,
        model=model,
        dc_gain=dc_gain,
        seed_record=seed_record,
        converged=converged,
        stop_reason=stop_reason,
    )


def _emit_snapshot(sink, ref: str, model) -> None:
    if sink is not None:
        sink(ref, model.to_snapshot())


def _resample_like(y_d: TimeSeries, other: TimeSeries) -> TimeSeries:
    """Desired-output stand-in matched to another signal's length (for the seed
    record the 'desired' value is simply the commanded staircase)."""
    channels = {
        name: other.channels[other.channel_names[min(i, len(other.channel_names) - 1)]]
        for i, name in enumerate(y_d.channel_names)
    }
    return TimeSeries(
        sample_rate=other.sample_rate, channels=channels, start_time=other.start_time
    )
