"""Simulated plants: a two-link series-elastic arm and exact LTI references.

The arm is a planar (horizontal, gravity optional) two-link chain driven
through torsional springs by first-order position servos; integration is
fixed-step RK4 at 1 ms with zero-order-hold inputs. LTI plants evaluate
rational transfer functions on the DFT grid, which makes them an exact
frequency-domain oracle for the learning loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signals import TimeSeries, dft_grid

IN_TO_M = 0.0254
DIVERGENCE_DEFLECTION = 1.0  # rad of spring wind-up treated as a blown run


@dataclass(frozen=True)
class ArmParams:
    """Physical parameters of the simulated series-elastic arm."""

    l1: float = 6.25 * IN_TO_M
    l2: float = 10.5 * IN_TO_M
    tip_mass: float = 0.275
    link_mass: float = 0.12
    spring_stiffness: float = 70.0
    continuous_torque_limit: float = 4.0
    peak_torque_limit: float = 7.0
    motor_speed_limit: float = 32.0 * 2.0 * math.pi / 60.0
    servo_bandwidth: float = 2.0 * math.pi * 5.0
    joint_damping: float = 0.05
    gravity: float = 0.0  # in-plane gravitational acceleration, 0 = horizontal

    def __post_init__(self):
        positives = {
            "l1": self.l1,
            "l2": self.l2,
            "tip_mass": self.tip_mass,
            "link_mass": self.link_mass,
            "spring_stiffness": self.spring_stiffness,
            "continuous_torque_limit": self.continuous_torque_limit,
            "peak_torque_limit": self.peak_torque_limit,
            "motor_speed_limit": self.motor_speed_limit,
            "servo_bandwidth": self.servo_bandwidth,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.joint_damping < 0:
            raise ValueError("joint_damping must be nonnegative")
        if self.peak_torque_limit < self.continuous_torque_limit:
            raise ValueError("peak torque must be >= continuous torque")


@dataclass
class PlantState:
    """Load and motor kinematic state of the arm."""

    load_angles: np.ndarray = field(default_factory=lambda: np.zeros(2))
    load_velocities: np.ndarray = field(default_factory=lambda: np.zeros(2))
    motor_angles: np.ndarray = field(default_factory=lambda: np.zeros(2))
    motor_velocities: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.load_angles, self.load_velocities, self.motor_angles]
        )


@dataclass
class PlantRun:
    """Result of executing one input trajectory."""

    outputs: TimeSeries
    fault: str | None = None
    torque_saturated: bool = False

    @property
    def ok(self) -> bool:
        return self.fault is None


class SimulationFault(RuntimeError):
    pass


def _inertia_terms(p: ArmParams) -> tuple[float, float, float]:
    """Constant pieces (a1, a2, a3) of the two-link inertia matrix."""
    m1 = m2 = p.link_mass
    mt = p.tip_mass
    r1, r2 = p.l1 / 2.0, p.l2 / 2.0
    iz1 = m1 * p.l1**2 / 12.0
    iz2 = m2 * p.l2**2 / 12.0
    a1 = iz1 + m1 * r1**2 + iz2 + m2 * (p.l1**2 + r2**2) + mt * (p.l1**2 + p.l2**2)
    a2 = iz2 + m2 * r2**2 + mt * p.l2**2
    a3 = m2 * p.l1 * r2 + mt * p.l1 * p.l2
    return a1, a2, a3


class SeaArm:
    """Two-link arm with series-elastic joints and motor-angle command inputs."""

    n_inputs = 2
    n_outputs = 2

    def __init__(
        self,
        params: ArmParams | None = None,
        sim_dt: float = 1e-3,
        noise_std: float = 0.0,
        noise_seed: int = 0,
    ):
        self.params = params if params is not None else ArmParams()
        self.sim_dt = sim_dt
        self.noise_std = noise_std
        self.noise_seed = noise_seed
        self._a1, self._a2, self._a3 = _inertia_terms(self.params)

    def mass_matrix(self, pose) -> np.ndarray:
        c2 = math.cos(pose[1])
        return np.array(
            [
                [self._a1 + 2.0 * self._a3 * c2, self._a2 + self._a3 * c2],
                [self._a2 + self._a3 * c2, self._a2],
            ]
        )

    def derivative(self, state, commanded) -> tuple[tuple, bool]:
        """Time derivative of [th1, th2, w1, w2, thm1, thm2]; flags torque saturation."""
        p = self.params
        th1, th2, w1, w2, tm1, tm2 = state
        u1, u2 = commanded
        if not all(map(math.isfinite, (th1, th2, w1, w2, tm1, tm2, u1, u2))):
            raise SimulationFault("non-finite state or command")

        k = p.spring_stiffness
        tau1 = k * (tm1 - th1)
        tau2 = k * (tm2 - th2)
        saturated = abs(tau1) > p.peak_torque_limit or abs(tau2) > p.peak_torque_limit
        tau1 = max(-p.peak_torque_limit, min(p.peak_torque_limit, tau1))
        tau2 = max(-p.peak_torque_limit, min(p.peak_torque_limit, tau2))

        c2 = math.cos(th2)
        s2 = math.sin(th2)
        m11 = self._a1 + 2.0 * self._a3 * c2
        m12 = self._a2 + self._a3 * c2
        m22 = self._a2

        v1 = -self._a3 * s2 * (2.0 * w1 * w2 + w2 * w2)
        v2 = self._a3 * s2 * w1 * w1

        g1 = g2 = 0.0
        if p.gravity != 0.0:
            m1 = m2 = p.link_mass
            mt = p.tip_mass
            r1, r2 = p.l1 / 2.0, p.l2 / 2.0
            g12 = p.gravity * (m2 * r2 + mt * p.l2) * math.cos(th1 + th2)
            g1 = p.gravity * (m1 * r1 + (m2 + mt) * p.l1) * math.cos(th1) + g12
            g2 = g12

        rhs1 = tau1 - v1 - p.joint_damping * w1 - g1
        rhs2 = tau2 - v2 - p.joint_damping * w2 - g2
        det = m11 * m22 - m12 * m12
        acc1 = (m22 * rhs1 - m12 * rhs2) / det
        acc2 = (m11 * rhs2 - m12 * rhs1) / det

        lim = p.motor_speed_limit
        bw = p.servo_bandwidth
        dm1 = max(-lim, min(lim, bw * (u1 - tm1)))
        dm2 = max(-lim, min(lim, bw * (u2 - tm2)))

        deriv = (w1, w2, acc1, acc2, dm1, dm2)
        if not all(map(math.isfinite, deriv)):
            raise SimulationFault("non-finite state derivative")
        return deriv, saturated

    def total_energy(self, state) -> float:
        """Kinetic plus spring (plus gravity) energy of the configuration."""
        p = self.params
        th1, th2, w1, w2, tm1, tm2 = state
        M = self.mass_matrix((th1, th2))
        w = np.array([w1, w2])
        kinetic = 0.5 * float(w @ M @ w)
        spring = 0.5 * p.spring_stiffness * ((tm1 - th1) ** 2 + (tm2 - th2) ** 2)
        potential = 0.0
        if p.gravity != 0.0:
            m1 = m2 = p.link_mass
            mt = p.tip_mass
            r1, r2 = p.l1 / 2.0, p.l2 / 2.0
            potential = p.gravity * (
                (m1 * r1 + (m2 + mt) * p.l1) * math.sin(th1)
                + (m2 * r2 + mt * p.l2) * math.sin(th1 + th2)
            )
        return kinetic + spring + potential

    def initial_state(self, pose=(0.0, 0.0)) -> tuple:
        return (pose[0], pose[1], 0.0, 0.0, pose[0], pose[1])

    def execute(self, u: TimeSeries) -> PlantRun:
        """Integrate the arm along a commanded-angle trajectory.

        Inputs are zero-order-held between samples; outputs are the load
        angles at the input sample instants. A spring wind-up beyond the
        divergence threshold truncates the run and raises the fault flag.
        """
        if len(u.channel_names) != 2:
            raise ValueError("SeaArm expects exactly two input channels")
        names = u.channel_names
        u1s = u.channels[names[0]]
        u2s = u.channels[names[1]]
        n = u.n_samples
        substeps = max(1, int(round(1.0 / (u.sample_rate * self.sim_dt))))
        h = 1.0 / (u.sample_rate * substeps)

        state = self.initial_state((u1s[0], u2s[0]))
        y1 = np.empty(n)
        y2 = np.empty(n)
        saturated = False
        fault = None
        valid = 0
        for i in range(n):
            y1[i] = state[0]
            y2[i] = state[1]
            valid = i + 1
            if (
                abs(state[4] - state[0]) > DIVERGENCE_DEFLECTION
                or abs(state[5] - state[1]) > DIVERGENCE_DEFLECTION
            ):
                fault = f"spring deflection exceeded {DIVERGENCE_DEFLECTION} rad at sample {i}"
                break
            if i == n - 1:
                break
            cmd = (u1s[i], u2s[i])
            try:
                for _ in range(substeps):
                    state, sat = self._rk4_step(state, cmd, h)
                    saturated = saturated or sat
            except SimulationFault as exc:
                fault = str(exc)
                break

        y1 = y1[:valid]
        y2 = y2[:valid]
        if self.noise_std > 0.0:
            rng = np.random.default_rng(self.noise_seed)
            y1 = y1 + rng.normal(0.0, self.noise_std, y1.size)
            y2 = y2 + rng.normal(0.0, self.noise_std, y2.size)
        outputs = TimeSeries(
            sample_rate=u.sample_rate,
            channels={"y1": y1, "y2": y2},
            start_time=u.start_time,
        )
        return PlantRun(outputs=outputs, fault=fault, torque_saturated=saturated)

    def _rk4_step(self, state, cmd, h):
        k1, s1 = self.derivative(state, cmd)
        k2, s2 = self.derivative(
            tuple(x + 0.5 * h * d for x, d in zip(state, k1)), cmd
        )
        k3, s3 = self.derivative(
            tuple(x + 0.5 * h * d for x, d in zip(state, k2)), cmd
        )
        k4, s4 = self.derivative(tuple(x + h * d for x, d in zip(state, k3)), cmd)
        new = tuple(
            x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for x, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
        return new, (s1 or s2 or s3 or s4)

    def linearized_transfer(self, pose, omegas) -> np.ndarray:
        """Analytic small-signal transfer matrix at a frozen pose.

        Servo: a / (jw + a); load: (M(pose) (jw)^2 + D jw + K)^-1 K. Valid while
        speed and torque clamps stay inactive.
        """
        p = self.params
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        M = self.mass_matrix(pose)
        D = p.joint_damping * np.eye(2)
        K = p.spring_stiffness * np.eye(2)
        a = p.servo_bandwidth
        out = np.empty((2, 2, omegas.size), dtype=complex)
        for idx, w in enumerate(omegas):
            s = 1j * w
            load = np.linalg.solve(M * s**2 + D * s + K, K)
            out[:, :, idx] = load * (a / (s + a))
        return out


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function in s, coefficients in descending powers."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = tuple(float(c) for c in np.atleast_1d(self.num))
        den = tuple(float(c) for c in np.atleast_1d(self.den))
        if not den or all(c == 0 for c in den):
            raise ValueError("denominator must be nonzero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def poles(self) -> np.ndarray:
        return np.roots(self.den) if len(self.den) > 1 else np.zeros(0)

    def is_stable(self) -> bool:
        return bool(np.all(np.real(self.poles()) < 0))

    def response(self, omegas) -> np.ndarray:
        """Continuous-time frequency response G(jw)."""
        s = 1j * np.atleast_1d(np.asarray(omegas, dtype=float))
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def discrete_response(self, omegas, sample_rate: float) -> np.ndarray:
        """Zero-order-hold discrete equivalent evaluated at z = exp(jw/fs).

        This is the exact transfer function between input samples and output
        samples when the input is held constant over each sample interval.
        """
        import scipy.signal

        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        if len(self.den) == 1:
            gain = np.polyval(self.num, 0.0) / self.den[0]
            return np.full(omegas.size, gain, dtype=complex)
        dt = 1.0 / sample_rate
        num_d, den_d, _ = scipy.signal.cont2discrete((self.num, self.den), dt, method="zoh")
        num_d = np.atleast_1d(np.squeeze(num_d))
        z = np.exp(1j * omegas * dt)
        return np.polyval(num_d, z) / np.polyval(den_d, z)


class LtiPlant:
    """Exact LTI simulation by transfer-matrix multiplication on the DFT grid."""

    def __init__(self, entries, padding_factor: int = 1):
        if isinstance(entries, TransferFunction):
            entries = [[entries]]
        self.entries = [list(row) for row in entries]
        self.n_outputs = len(self.entries)
        self.n_inputs = len(self.entries[0])
        if any(len(row) != self.n_inputs for row in self.entries):
            raise ValueError("transfer matrix rows must have equal length")
        for row in self.entries:
            for tf in row:
                if not tf.is_stable():
                    raise ValueError(f"unstable pole in transfer function {tf}")
        if padding_factor < 1:
            raise ValueError("padding_factor must be >= 1")
        self.padding_factor = int(padding_factor)

    def response(self, omegas) -> np.ndarray:
        """(n_outputs, n_inputs, n_freq) continuous frequency response."""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        out = np.empty((self.n_outputs, self.n_inputs, omegas.size), dtype=complex)
        for i, row in enumerate(self.entries):
            for j, tf in enumerate(row):
                out[i, j] = tf.response(omegas)
        return out

    def discrete_response(self, omegas, sample_rate: float) -> np.ndarray:
        """(n_outputs, n_inputs, n_freq) ZOH-discretized frequency response.

        This is the map the plant realizes exactly, bin by bin, on the DFT
        grid of any trajectory it executes (with padding_factor 1).
        """
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        out = np.empty((self.n_outputs, self.n_inputs, omegas.size), dtype=complex)
        for i, row in enumerate(self.entries):
            for j, tf in enumerate(row):
                out[i, j] = tf.discrete_response(omegas, sample_rate)
        return out

    def execute(self, u: TimeSeries) -> PlantRun:
        names = u.channel_names
        if len(names) != self.n_inputs:
            raise ValueError(f"plant expects {self.n_inputs} input channels")
        n = u.n_samples
        n_pad = n * self.padding_factor
        grid = dft_grid(n_pad, u.sample_rate)
        U = np.stack([np.fft.rfft(u.channels[name], n=n_pad) for name in names])
        G = self.discrete_response(grid, u.sample_rate)
        channels = {}
        for i in range(self.n_outputs):
            Yi = np.einsum("jk,jk->k", G[i], U)
            channels[f"y{i + 1}"] = np.fft.irfft(Yi, n=n_pad)[:n]
        outputs = TimeSeries(
            sample_rate=u.sample_rate, channels=channels, start_time=u.start_time
        )
        return PlantRun(outputs=outputs)


def lti_test_plant(entries, padding_factor: int = 1) -> LtiPlant:
    """Build an exact LTI plant from a TransferFunction or matrix of them."""
    return LtiPlant(entries, padding_factor=padding_factor)
