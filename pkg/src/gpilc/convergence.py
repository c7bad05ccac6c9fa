"""Convergence tests and iteration-gain bounds for the frequency-domain update.

The per-frequency iteration contracts when every eigenvalue of
(I - rho * G_inv_est * G) lies inside the unit circle. Gains are bounded
either from the realized model-error ratio (Gershgorin rows) or, when only
entrywise real/imaginary error boxes are known, from the worst case over
those boxes.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .cgpr import ModelEstimate

CONDITION_WARN_THRESHOLD = 1e8


@dataclass(frozen=True)
class ModelErrorBounds:
    """Entrywise nonnegative bounds on real (delta_a) and imaginary (delta_b) errors."""

    delta_a: np.ndarray
    delta_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.delta_a, dtype=float)
        b = np.asarray(self.delta_b, dtype=float)
        if a.shape != b.shape or a.ndim != 2:
            raise ValueError("delta_a and delta_b must be equal-shape matrices")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("error bounds must be nonnegative")
        object.__setattr__(self, "delta_a", a)
        object.__setattr__(self, "delta_b", b)


@dataclass(frozen=True)
class GainResult:
    """Per-output-channel gain bound, chosen gain, and feasibility flags."""

    rho: np.ndarray
    feasible: np.ndarray
    bound: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "feasible", np.asarray(self.feasible, dtype=bool))
        object.__setattr__(self, "bound", np.asarray(self.bound, dtype=float))


def iteration_map_spectral_radius(
    G: np.ndarray, G_inv_est: np.ndarray, rho: np.ndarray
) -> float:
    """Largest eigenvalue magnitude of I - diag(rho) * G_inv_est * G."""
    G = np.asarray(G, dtype=complex)
    G_inv_est = np.asarray(G_inv_est, dtype=complex)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    n = G.shape[0]
    if G.shape != (n, n) or G_inv_est.shape != (n, n) or rho.size != n:
        raise ValueError("G, G_inv_est must be square and rho must match their size")
    if not np.all(np.isfinite(rho)):
        raise ValueError("rho must be finite")
    M = np.eye(n) - np.diag(rho) @ G_inv_est @ G
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def scalar_gain_bound(
    delta_m: float, delta_p: float, gain_fraction: float = 0.6
) -> GainResult:
    """Single-channel gain bound 2*cos(delta_p)/delta_m, feasible iff |delta_p| < pi/2.

    delta_m and delta_p are the magnitude and phase of the model-error ratio
    (estimated inverse times true transfer function).
    """
    if delta_m <= 0:
        raise ValueError(f"delta_m must be > 0, got {delta_m}")
    feasible = abs(delta_p) < np.pi / 2
    bound = 2.0 * np.cos(delta_p) / delta_m if feasible else 0.0
    rho = gain_fraction * bound if feasible else 0.0
    return GainResult(rho=[rho], feasible=[feasible], bound=[bound])


def mimo_gain_bound(Delta: np.ndarray, gain_fraction: float = 0.6) -> GainResult:
    """Per-channel gain bounds from the realized model-error matrix Delta.

    Channel i is feasible when the diagonal term dominates its row:
    |Delta_ii| * cos(arg Delta_ii) > sum_{j != i} |Delta_ij|. The bound is
    2 * (m_ii cos(p_ii) - off_i) / (m_ii^2 - off_i^2) and rho is
    gain_fraction times it; infeasible channels get rho = bound = 0.
    """
    Delta = np.atleast_2d(np.asarray(Delta, dtype=complex))
    n = Delta.shape[0]
    if Delta.shape != (n, n):
        raise ValueError("Delta must be square")
    mag = np.abs(Delta)
    diag_mag = np.diag(mag).copy()
    if np.any(diag_mag == 0):
        raise ValueError("Delta has a zero diagonal magnitude")
    diag_phase = np.angle(np.diag(Delta))
    off_sum = mag.sum(axis=1) - diag_mag

    rho = np.zeros(n)
    bound = np.zeros(n)
    feasible = np.zeros(n, dtype=bool)
    for i in range(n):
        lead = diag_mag[i] * np.cos(diag_phase[i])
        if lead > off_sum[i]:
            feasible[i] = True
            bound[i] = 2.0 * (lead - off_sum[i]) / (diag_mag[i] ** 2 - off_sum[i] ** 2)
            rho[i] = gain_fraction * bound[i]
    return GainResult(rho=rho, feasible=feasible, bound=bound)


def bounded_uncertainty_gain(
    G_est: np.ndarray,
    bounds: ModelErrorBounds,
    gain_fraction: float = 0.6,
) -> GainResult:
    """Worst-case gain bounds when the true matrix lies in entrywise error boxes.

    For each channel the numerator discounts the perfect-model value 1 by the
    box-aligned worst case of the inverse rows against the uncertainty, and
    the denominator uses the maximum diagonal error magnitude; this never
    exceeds the bound computed from any realized matrix inside the boxes.
    """
    G_est = np.atleast_2d(np.asarray(G_est, dtype=complex))
    n = G_est.shape[0]
    if G_est.shape != (n, n):
        raise ValueError("G_est must be square")
    if bounds.delta_a.shape != (n, n):
        raise ValueError("bounds shape does not match G_est")
    cond = np.linalg.cond(G_est)
    if not np.isfinite(cond):
        raise np.linalg.LinAlgError("G_est is singular")
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(f"G_est condition number {cond:.3e} exceeds {CONDITION_WARN_THRESHOLD:.0e}")
    G_inv = np.linalg.inv(G_est)

    A = bounds.delta_a
    B = bounds.delta_b
    box_mag = np.abs(A + 1j * B)

    rho = np.zeros(n)
    bound = np.zeros(n)
    feasible = np.zeros(n, dtype=bool)
    for i in range(n):
        r = G_inv[i, :]
        col = G_est[:, i]
        c_abs = np.abs(np.real(col)) + 1j * np.abs(np.imag(col))
        # off-diagonal box magnitudes accumulated across columns j != i
        D = box_mag.sum(axis=1) - box_mag[:, i]
        numer = 1.0 - (
            np.dot(np.abs(np.real(r)), A[:, i])
            + np.dot(np.abs(np.imag(r)), B[:, i])
            + np.dot(np.abs(r), D)
        )
        if numer <= 0:
            continue
        diag_max = np.dot(np.abs(r), np.abs(c_abs + A[:, i] + 1j * B[:, i]))
        feasible[i] = True
        bound[i] = 2.0 * numer / diag_max**2
        rho[i] = gain_fraction * bound[i]
    return GainResult(rho=rho, feasible=feasible, bound=bound)


def variance_to_bounds(
    estimate: ModelEstimate, sigma_multiple: float = 2.0
) -> list[ModelErrorBounds]:
    """Per-frequency symmetric error boxes sigma_multiple * sqrt(variance)."""
    if sigma_multiple <= 0:
        raise ValueError(f"sigma_multiple must be > 0, got {sigma_multiple}")
    if np.any(estimate.variance < 0):
        raise ValueError("variance must be nonnegative")
    widths = sigma_multiple * np.sqrt(estimate.variance)
    return [
        ModelErrorBounds(delta_a=widths[:, :, k], delta_b=widths[:, :, k])
        for k in range(estimate.frequencies.size)
    ]


def write_gain_diagnostics(path, omegas, gains: list[GainResult], G_estimates) -> None:
    """CSV dump per frequency and channel: bound, rho, feasibility, and the
    spectral radius of the iteration map under a self-consistent model."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "channel", "bound", "rho", "feasible", "spectral_radius_check"])
        for omega, gain, G in zip(omegas, gains, G_estimates):
            G = np.atleast_2d(np.asarray(G, dtype=complex))
            try:
                radius = iteration_map_spectral_radius(G, np.linalg.inv(G), gain.rho)
            except np.linalg.LinAlgError:
                radius = float("nan")
            for ch in range(gain.rho.size):
                writer.writerow(
                    [
                        f"{omega:.9e}",
                        ch,
                        f"{gain.bound[ch]:.9e}",
                        f"{gain.rho[ch]:.9e}",
                        int(gain.feasible[ch]),
                        f"{radius:.9e}",
                    ]
                )
