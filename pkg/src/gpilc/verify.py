"""Seeded Monte-Carlo checks of the convergence bounds.

Each check draws its per-trial randomness from a child seed of the master
seed, so results are reproducible and trials are independently replayable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .convergence import (
    ModelErrorBounds,
    bounded_uncertainty_gain,
    iteration_map_spectral_radius,
    mimo_gain_bound,
)


@dataclass
class CheckResult:
    name: str
    trials: int
    violations: int
    elapsed: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: {self.violations} violations in "
            f"{self.trials} trials ({self.elapsed:.2f} s){' - ' + self.detail if self.detail else ''}"
        )


def _random_invertible(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    """Complex matrix with moderate conditioning (diagonally weighted)."""
    while True:
        mag = rng.uniform(0.5, 2.0, (n, n))
        phase = rng.uniform(-np.pi, np.pi, (n, n))
        M = mag * np.exp(1j * phase)
        M += 2.0 * np.diag(np.diag(M) / np.abs(np.diag(M)) * mag.max())
        if np.linalg.cond(M) < 50:
            return M


def _random_feasible_delta(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    """Model-error matrix whose every channel satisfies the row-dominance test."""
    while True:
        diag_mag = rng.uniform(0.3, 2.0, n)
        diag_phase = rng.uniform(-np.pi / 2.5, np.pi / 2.5, n)
        Delta = np.diag(diag_mag * np.exp(1j * diag_phase)).astype(complex)
        off_scale = rng.uniform(0.0, 0.4)
        for i in range(n):
            for j in range(n):
                if i != j:
                    Delta[i, j] = (
                        off_scale
                        * diag_mag[i]
                        * rng.uniform(0.0, 1.0)
                        * np.exp(1j * rng.uniform(-np.pi, np.pi))
                    )
        if np.all(mimo_gain_bound(Delta).feasible):
            return Delta


def check_perfect_model(trials: int = 1000, seed: int = 0) -> CheckResult:
    """Perfect inverse model: unit gains kill the iteration map;
    any gain inside the bound keeps its spectral radius below one."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        G = _random_invertible(rng)
        G_inv = np.linalg.inv(G)
        radius = iteration_map_spectral_radius(G, G_inv, np.ones(2))
        worst = max(worst, radius)
        if radius > 1e-10:
            violations += 1
        gains = mimo_gain_bound(np.eye(2))
        rho = rng.uniform(1e-6, gains.bound * (1.0 - 1e-9))
        if iteration_map_spectral_radius(G, G_inv, rho) >= 1.0:
            violations += 1
    return CheckResult(
        "perfect-model iteration map",
        trials,
        violations,
        time.perf_counter() - start,
        detail=f"max radius at unit gain {worst:.2e}",
    )


def check_gain_bound_soundness(trials: int = 1000, seed: int = 1) -> CheckResult:
    """Row-dominance bound: gains drawn inside it always contract the map."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(trials):
        Delta = _random_feasible_delta(rng)
        gains = mimo_gain_bound(Delta)
        rho = rng.uniform(1e-9, gains.bound * (1.0 - 1e-9))
        # radius of I - diag(rho) Delta, with Delta playing G_inv_est @ G
        radius = iteration_map_spectral_radius(Delta, np.eye(2), rho)
        if radius >= 1.0:
            violations += 1
    return CheckResult(
        "gain bound soundness", trials, violations, time.perf_counter() - start
    )


def check_worst_case_conservative(trials: int = 1000, seed: int = 2) -> CheckResult:
    """Box-uncertainty bound never exceeds the realized-error bound, and
    iterating at 60% of it contracts for every admissible true matrix."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations = 0
    done = 0
    while done < trials:
        G_est = _random_invertible(rng)
        scale = rng.uniform(0.01, 0.08)
        A = scale * np.abs(G_est) * rng.uniform(0.2, 1.0, (2, 2))
        B = scale * np.abs(G_est) * rng.uniform(0.2, 1.0, (2, 2))
        bounds = ModelErrorBounds(delta_a=A, delta_b=B)
        worst = bounded_uncertainty_gain(G_est, bounds)
        if not np.all(worst.feasible):
            continue
        done += 1
        G_true = G_est + rng.uniform(-1, 1, (2, 2)) * A + 1j * rng.uniform(-1, 1, (2, 2)) * B
        Delta = np.linalg.inv(G_est) @ G_true
        realized = mimo_gain_bound(Delta)
        if np.all(realized.feasible):
            if np.any(worst.bound > realized.bound * (1.0 + 1e-12) + 1e-12):
                violations += 1
        radius = iteration_map_spectral_radius(G_true, np.linalg.inv(G_est), 0.6 * worst.bound)
        if radius >= 1.0:
            violations += 1
    return CheckResult(
        "worst-case bound conservativeness", trials, violations, time.perf_counter() - start
    )


def run_all_checks(trials: int = 1000, seed: int = 0) -> list[CheckResult]:
    seeds = np.random.SeedSequence(seed).spawn(3)
    results = [
        check_perfect_model(trials, seed=seeds[0]),
        check_gain_bound_soundness(trials, seed=seeds[1]),
        check_worst_case_conservative(trials, seed=seeds[2]),
    ]
    return results
