"""Time- and frequency-domain signal containers and transforms.

Conventions: the forward DFT is unnormalized and the inverse carries the
1/N factor; spectra are stored one-sided (nonnegative frequencies, Hermitian
symmetry implied), on the grid w_k = 2*pi*k*fs/N rad/s for k = 0..floor(N/2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class InvalidSignalError(ValueError):
    """Raised when a signal or spectrum violates a precondition."""


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled multichannel real-valued signal.

    channels maps name -> 1-D float array; all channels share one length.
    """

    sample_rate: float
    channels: dict[str, np.ndarray]
    start_time: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InvalidSignalError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.channels:
            raise InvalidSignalError("TimeSeries needs at least one channel")
        clean = {}
        length = None
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1 or arr.size < 1:
                raise InvalidSignalError(f"channel {name!r} must be a nonempty 1-D array")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise InvalidSignalError(
                    f"channel {name!r} has length {arr.size}, expected {length}"
                )
            clean[name] = arr
        object.__setattr__(self, "channels", clean)

    @property
    def n_samples(self) -> int:
        return next(iter(self.channels.values())).size

    @property
    def channel_names(self) -> list[str]:
        return list(self.channels)

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    def channel(self, name: str) -> np.ndarray:
        return self.channels[name]

    def stack(self, names: list[str] | None = None) -> np.ndarray:
        """Channel values as a (n_channels, n_samples) array."""
        names = names if names is not None else self.channel_names
        return np.stack([self.channels[n] for n in names])


@dataclass(frozen=True)
class Spectrum:
    """One-sided complex spectrum on an explicit frequency grid (rad/s)."""

    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if freqs.ndim != 1 or vals.ndim != 1 or freqs.size != vals.size:
            raise InvalidSignalError("frequencies and values must be 1-D and equal length")
        if freqs.size and freqs[0] < 0:
            raise InvalidSignalError("frequencies must be nonnegative")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise InvalidSignalError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Window:
    """A contiguous segment of a signal with its representative parameters."""

    start_index: int
    length: int
    representative_params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.length < 2:
            raise InvalidSignalError(f"window length must be >= 2, got {self.length}")
        if self.start_index < 0:
            raise InvalidSignalError("window start_index must be nonnegative")
        object.__setattr__(
            self, "representative_params", np.asarray(self.representative_params, dtype=float)
        )

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length


def dft_grid(n_samples: int, sample_rate: float) -> np.ndarray:
    """One-sided DFT frequency grid in rad/s for a length-n signal."""
    return 2.0 * np.pi * np.fft.rfftfreq(n_samples, d=1.0 / sample_rate)


def forward_transform(x: np.ndarray, sample_rate: float) -> Spectrum:
    """Unnormalized one-sided DFT of a real channel.

    Raises InvalidSignalError for channels shorter than 2 samples.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidSignalError("forward_transform needs a 1-D channel with >= 2 samples")
    return Spectrum(dft_grid(x.size, sample_rate), np.fft.rfft(x))


def inverse_transform(s: Spectrum, n_samples: int, sample_rate: float) -> np.ndarray:
    """Real inverse DFT (1/N-normalized) of a one-sided spectrum.

    The spectrum grid must match dft_grid(n_samples, sample_rate).
    """
    expected = dft_grid(n_samples, sample_rate)
    if len(s) != expected.size or not np.allclose(s.frequencies, expected, rtol=1e-12, atol=1e-9):
        raise InvalidSignalError(
            f"spectrum grid does not match a {n_samples}-sample DFT at {sample_rate} Hz"
        )
    return np.fft.irfft(s.values, n=n_samples)


def circular_convolve(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Circular convolution computed in the time domain (same length inputs)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape or x.ndim != 1:
        raise InvalidSignalError("circular_convolve needs two equal-length 1-D arrays")
    n = x.size
    # direct index arithmetic keeps this path independent of the FFT
    out = np.empty(n)
    idx = np.arange(n)
    for k in range(n):
        out[k] = np.dot(x, z[(k - idx) % n])
    return out


def extract_windows(
    data: TimeSeries, param_channels: list[str], window_seconds: float
) -> list[Window]:
    """Split a signal into windows starting wherever a quantized parameter changes.

    One window starts at sample 0 and at every sample where any of the named
    parameter channels changes value. Windows are window_seconds long,
    truncated at the signal end; windows shorter than 2 samples are dropped.
    If the parameters never change, a single window spans the whole signal.
    """
    if not param_channels:
        raise InvalidSignalError("extract_windows needs at least one parameter channel")
    params = data.stack(param_channels)
    n = data.n_samples
    win_len = int(round(window_seconds * data.sample_rate))
    if win_len < 2:
        raise InvalidSignalError("window_seconds * sample_rate must be >= 2")

    changed = np.any(params[:, 1:] != params[:, :-1], axis=0)
    starts = [0] + list(np.nonzero(changed)[0] + 1)

    if len(starts) == 1:
        return [Window(0, n, params[:, 0])] if n >= 2 else []

    windows = []
    for s in starts:
        length = min(win_len, n - s)
        if length < 2:
            continue
        # label with the mid-window values: parameters may drift within the
        # window, and the centre is the least-stale representative
        windows.append(Window(s, length, params[:, s + length // 2]))
    return windows


def threshold_spectra(u: Spectrum, y: Spectrum, fraction: float) -> np.ndarray:
    """Indices where both |U| and |Y| reach the given fraction of their maxima.

    An all-zero spectrum yields an empty index set (with a warning).
    """
    if not 0.0 < fraction <= 1.0:
        raise InvalidSignalError(f"fraction must be in (0, 1], got {fraction}")
    if len(u) != len(y) or not np.allclose(u.frequencies, y.frequencies, rtol=1e-12, atol=1e-9):
        raise InvalidSignalError("u and y must share a frequency grid")
    mag_u = np.abs(u.values)
    mag_y = np.abs(y.values)
    if mag_u.max() == 0.0 or mag_y.max() == 0.0:
        warnings.warn("all-zero spectrum in threshold_spectra; no indices kept")
        return np.zeros(0, dtype=int)
    keep = (mag_u >= fraction * mag_u.max()) & (mag_y >= fraction * mag_y.max())
    return np.nonzero(keep)[0]


def write_timeseries_csv(ts: TimeSeries, path) -> None:
    """Write a TimeSeries as CSV: column t (seconds) then one column per channel."""
    header = ",".join(["t"] + ts.channel_names)
    data = np.column_stack([ts.times()] + [ts.channels[n] for n in ts.channel_names])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12e")


def read_timeseries_csv(path) -> TimeSeries:
    """Read a TimeSeries from the CSV layout written by write_timeseries_csv."""
    with open(path) as fh:
        header = fh.readline().strip()
    names = [c.strip() for c in header.split(",")]
    if not names or names[0] != "t":
        raise InvalidSignalError(f"{path}: first CSV column must be 't'")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(names):
        raise InvalidSignalError(f"{path}: column count does not match header")
    t = data[:, 0]
    if t.size < 2:
        rate = 1.0
    else:
        steps = np.diff(t)
        rate = 1.0 / np.mean(steps)
        if np.any(np.abs(steps - steps[0]) > 1e-6 * max(steps[0], 1e-12)):
            raise InvalidSignalError(f"{path}: time column is not uniformly sampled")
    channels = {name: data[:, i + 1] for i, name in enumerate(names[1:])}
    return TimeSeries(sample_rate=rate, channels=channels, start_time=float(t[0]))
