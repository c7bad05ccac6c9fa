"""Complex-valued Gaussian process regression over (frequency, parameter) space.

Transfer-matrix entries are learned from coupled input/output spectra through
an input-weighted squared-exponential ARD kernel: the covariance between two
output samples is sum_j U_jr * k_j(x_r, x_s) * conj(U_js), so a single GP per
output row absorbs all inputs at once. Setting a unit test weight on one input
(zero on the rest) recovers that column's transfer-function entry.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .signals import Spectrum, Window


class ModelStateError(RuntimeError):
    """Raised when a prediction is requested from an unusable model state."""


class NumericalError(RuntimeError):
    """Raised when a covariance factorization cannot be stabilized."""


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential ARD kernel hyperparameters (one set per plant input)."""

    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if self.signal_variance <= 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if np.any(ls <= 0):
            raise ValueError("all length scales must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        object.__setattr__(self, "length_scales", ls)

    @property
    def n_dims(self) -> int:
        return self.length_scales.size


@dataclass(frozen=True)
class TrainingPoint:
    """One frequency-domain sample: location [w, p1..pm], input weights, output value."""

    input_location: np.ndarray
    input_weights: np.ndarray
    target: complex

    def __post_init__(self):
        object.__setattr__(
            self, "input_location", np.asarray(self.input_location, dtype=float)
        )
        object.__setattr__(self, "input_weights", np.asarray(self.input_weights, dtype=complex))
        object.__setattr__(self, "target", complex(self.target))


@dataclass(frozen=True)
class ModelEstimate:
    """Per-frequency transfer-matrix mean and predictive variance.

    mean and variance have shape (n_outputs, n_inputs, n_frequencies).
    """

    frequencies: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        mean = np.asarray(self.mean, dtype=complex)
        var = np.asarray(self.variance, dtype=float)
        if mean.ndim != 3 or var.shape != mean.shape or mean.shape[2] != freqs.size:
            raise ValueError("mean/variance must be (n_outputs, n_inputs, n_frequencies)")
        if np.any(var < 0):
            raise ValueError("variance must be nonnegative")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def n_outputs(self) -> int:
        return self.mean.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.mean.shape[1]

    def at_frequency(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(mean matrix, variance matrix) at frequency index k."""
        return self.mean[:, :, k], self.variance[:, :, k]


def kernel_eval(x1: np.ndarray, x2: np.ndarray, params: KernelParams) -> float:
    """SE-ARD kernel value sf2 * exp(-0.5 * sum(((x1-x2)/l)^2))."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.size != params.n_dims:
        raise ValueError("kernel_eval inputs must match the length-scale dimension")
    z = (x1 - x2) / params.length_scales
    return float(params.signal_variance * np.exp(-0.5 * np.dot(z, z)))


def kernel_matrix(X1: np.ndarray, X2: np.ndarray, params: KernelParams) -> np.ndarray:
    """SE-ARD kernel evaluated on all location pairs; X* are (n, d) arrays."""
    A = np.asarray(X1, dtype=float) / params.length_scales
    B = np.asarray(X2, dtype=float) / params.length_scales
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-0.5 * sq)


def weighted_kernel_eval(
    p1: TrainingPoint, p2: TrainingPoint, per_input_params: list[KernelParams]
) -> complex:
    """Input-weighted kernel sum_j U_j1 * k_j(x1, x2) * conj(U_j2)."""
    if p1.input_weights.size != p2.input_weights.size:
        raise ValueError("points carry different input counts")
    if len(per_input_params) != p1.input_weights.size:
        raise ValueError(
            f"need {p1.input_weights.size} kernel parameter sets, got {len(per_input_params)}"
        )
    total = 0.0 + 0.0j
    for j, params in enumerate(per_input_params):
        total += (
            p1.input_weights[j]
            * kernel_eval(p1.input_location, p2.input_location, params)
            * np.conj(p2.input_weights[j])
        )
    return complex(total)


def build_covariance(
    points: list[TrainingPoint], per_input_params: list[KernelParams]
) -> np.ndarray:
    """Hermitian weighted covariance sum_j diag(U_j) K_j diag(conj(U_j)), noise-free."""
    if not points:
        raise ValueError("build_covariance needs at least one point")
    X = np.stack([p.input_location for p in points])
    W = np.stack([p.input_weights for p in points])
    if W.shape[1] != len(per_input_params):
        raise ValueError("weight count does not match kernel parameter sets")
    n = len(points)
    K = np.zeros((n, n), dtype=complex)
    for j, params in enumerate(per_input_params):
        Kj = kernel_matrix(X, X, params)
        K += W[:, j][:, None] * Kj * np.conj(W[:, j])[None, :]
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite covariance entries")
    # enforce exact Hermitian symmetry against rounding
    return 0.5 * (K + K.conj().T)


def _stabilized_cholesky(K_T: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky of a Hermitian matrix with adaptive jitter; returns (L, jitter)."""
    n = K_T.shape[0]
    base = 1e-10 * max(np.real(np.trace(K_T)) / n, 1.0e-30)
    jitter = 0.0
    for attempt in range(4):
        try:
            L = scipy.linalg.cholesky(
                K_T + jitter * np.eye(n), lower=True, check_finite=False
            )
            return L, jitter
        except scipy.linalg.LinAlgError:
            jitter = base * (10.0**attempt)
    raise NumericalError(
        f"covariance factorization failed after jitter {jitter:.3e}; "
        f"condition number ~{np.linalg.cond(K_T):.3e}"
    )


def marginal_log_likelihood(
    K_T: np.ndarray, targets: np.ndarray, method: str = "cholesky"
) -> float:
    """Circular complex Gaussian log-likelihood -y^H K^-1 y - ln det K - n ln pi.

    method 'cholesky' factorizes once; 'direct' uses slogdet plus a dense solve
    (kept as an independent cross-check path).
    """
    n = targets.size
    if method == "cholesky":
        L, _ = _stabilized_cholesky(K_T)
        v = scipy.linalg.solve_triangular(L, targets, lower=True, check_finite=False)
        quad = float(np.real(np.vdot(v, v)))
        logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))
    elif method == "direct":
        _, logdet = np.linalg.slogdet(K_T)
        alpha = np.linalg.solve(K_T, targets)
        quad = float(np.real(np.vdot(targets, alpha)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return -quad - logdet - n * np.log(np.pi)


@dataclass
class _RowState:
    """Trained state for one output row: data, kernels, cached factorization."""

    params: list[KernelParams]
    points: list[TrainingPoint] = field(default_factory=list)
    L: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def invalidate(self):
        self.L = None
        self.alpha = None


def _row_noise_variance(params: list[KernelParams]) -> float:
    # output noise is a single per-row quantity; kernels carry identical copies
    return params[0].noise_variance


def _row_covariance_with_noise(
    points: list[TrainingPoint], params: list[KernelParams]
) -> np.ndarray:
    K = build_covariance(points, params)
    return K + _row_noise_variance(params) * np.eye(len(points))


class TransferMatrixGP:
    """Independent complex GP per output row of a MIMO transfer matrix.

    Training mutates the object and must be serialized externally; once
    trained, predictions are read-only and thread-safe.
    """

    FORMAT_TAG = "gpilc-cgpr/1"

    def __init__(
        self,
        n_outputs: int,
        n_inputs: int,
        input_dim: int,
        init_params: KernelParams | None = None,
        shared_hyperparams: bool = False,
    ):
        if init_params is None:
            init_params = KernelParams(1.0, np.ones(input_dim), 1e-6)
        if init_params.n_dims != input_dim:
            raise ValueError("init_params length scales must match input_dim")
        self.n_outputs = n_outputs
        self.n_inputs = n_inputs
        self.input_dim = input_dim
        self.shared_hyperparams = shared_hyperparams
        self.rows = [
            _RowState(params=[init_params] * n_inputs) for _ in range(n_outputs)
        ]

    # -- training ---------------------------------------------------------

    def add_training_points(self, per_row_points: list[list[TrainingPoint]]) -> None:
        if len(per_row_points) != self.n_outputs:
            raise ValueError(f"expected {self.n_outputs} point lists")
        for row, pts in zip(self.rows, per_row_points):
            for p in pts:
                if p.input_location.size != self.input_dim:
                    raise ValueError("training location dimension mismatch")
                if p.input_weights.size != self.n_inputs:
                    raise ValueError("training weight count mismatch")
            row.points.extend(pts)
            row.invalidate()

    def n_training_points(self, row: int | None = None) -> int:
        if row is not None:
            return len(self.rows[row].points)
        return sum(len(r.points) for r in self.rows)

    def _ensure_factorized(self, row: _RowState) -> None:
        if row.L is not None or not row.points:
            return
        K_T = _row_covariance_with_noise(row.points, row.params)
        row.L, _ = _stabilized_cholesky(K_T)
        targets = np.array([p.target for p in row.points])
        v = scipy.linalg.solve_triangular(row.L, targets, lower=True, check_finite=False)
        row.alpha = scipy.linalg.solve_triangular(
            row.L.conj().T, v, lower=False, check_finite=False
        )

    def refresh(self) -> None:
        """Recompute cached factorizations for all rows."""
        for row in self.rows:
            row.invalidate()
            self._ensure_factorized(row)

    def row_log_likelihood(self, row_index: int, method: str = "cholesky") -> float:
        row = self.rows[row_index]
        if not row.points:
            raise ModelStateError("row has no training data")
        K_T = _row_covariance_with_noise(row.points, row.params)
        targets = np.array([p.target for p in row.points])
        return marginal_log_likelihood(K_T, targets, method=method)

    def fit(self, bounds: "HyperBounds | None" = None, seed: int = 0,
            n_starts: int = 4, max_iter: int = 150) -> None:
        """Maximize each row's marginal likelihood over kernel hyperparameters.

        Without explicit bounds, each row uses bounds scaled to its own
        training-data geometry (HyperBounds.from_data).
        """
        for i, row in enumerate(self.rows):
            if len(row.points) < 2:
                continue
            row_bounds = bounds if bounds is not None else HyperBounds.from_data(row.points)
            row.params = _fit_row_params(
                row.points,
                row.params,
                row_bounds,
                shared=self.shared_hyperparams,
                seed=seed + 1000 * i,
                n_starts=n_starts,
                max_iter=max_iter,
            )
            row.invalidate()
        self.refresh()

    # -- prediction -------------------------------------------------------

    def predict_entry(
        self, output_index: int, input_index: int, test_locations: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of one transfer-matrix entry at the given locations.

        Uses a unit test weight on input_index and zero on all others, which
        reduces the weighted kernel to the plain entry kernel against data.
        """
        Xs = np.atleast_2d(np.asarray(test_locations, dtype=float))
        if Xs.shape[1] != self.input_dim:
            raise ValueError("test location dimension mismatch")
        row = self.rows[output_index]
        params = row.params[input_index]
        prior_var = np.full(Xs.shape[0], params.signal_variance)
        if not row.points:
            return np.zeros(Xs.shape[0], dtype=complex), prior_var
        self._ensure_factorized(row)
        X = np.stack([p.input_location for p in row.points])
        W = np.stack([p.input_weights for p in row.points])
        # cross covariance of f' at (x*, e_j) against training outputs
        K_star = kernel_matrix(Xs, X, params) * np.conj(W[:, input_index])[None, :]
        mean = K_star @ row.alpha
        V = scipy.linalg.solve_triangular(
            row.L, K_star.conj().T, lower=True, check_finite=False
        )
        var = prior_var - np.real(np.sum(np.conj(V) * V, axis=0))
        return mean, np.maximum(var, 0.0)

    def predict_output(
        self,
        output_index: int,
        test_locations: np.ndarray,
        test_weights: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the weighted output sum_j f_ij(x) * U_j*."""
        Xs = np.atleast_2d(np.asarray(test_locations, dtype=float))
        Ws = np.atleast_2d(np.asarray(test_weights, dtype=complex))
        if Ws.shape != (Xs.shape[0], self.n_inputs):
            raise ValueError("test_weights must be (n_locations, n_inputs)")
        row = self.rows[output_index]
        prior = np.real(
            sum(
                np.abs(Ws[:, j]) ** 2 * row.params[j].signal_variance
                for j in range(self.n_inputs)
            )
        )
        if not row.points:
            return np.zeros(Xs.shape[0], dtype=complex), prior
        self._ensure_factorized(row)
        X = np.stack([p.input_location for p in row.points])
        W = np.stack([p.input_weights for p in row.points])
        K_star = np.zeros((Xs.shape[0], len(row.points)), dtype=complex)
        for j in range(self.n_inputs):
            K_star += (
                Ws[:, j][:, None]
                * kernel_matrix(Xs, X, row.params[j])
                * np.conj(W[:, j])[None, :]
            )
        mean = K_star @ row.alpha
        V = scipy.linalg.solve_triangular(
            row.L, K_star.conj().T, lower=True, check_finite=False
        )
        var = prior - np.real(np.sum(np.conj(V) * V, axis=0))
        return mean, np.maximum(var, 0.0)

    def predict(self, test_locations: np.ndarray) -> ModelEstimate:
        """Full transfer-matrix estimate at the given locations.

        Locations must share a frequency in column 0 ordering; the returned
        estimate's frequency axis follows the location order.
        """
        Xs = np.atleast_2d(np.asarray(test_locations, dtype=float))
        n_loc = Xs.shape[0]
        mean = np.zeros((self.n_outputs, self.n_inputs, n_loc), dtype=complex)
        var = np.zeros((self.n_outputs, self.n_inputs, n_loc))
        for i in range(self.n_outputs):
            for j in range(self.n_inputs):
                mean[i, j], var[i, j] = self.predict_entry(i, j, Xs)
        return ModelEstimate(frequencies=Xs[:, 0], mean=mean, variance=var)

    # -- persistence ------------------------------------------------------

    def to_snapshot(self) -> dict:
        """JSON-ready snapshot; factorizations are omitted and rebuilt on load."""
        def params_doc(p: KernelParams) -> dict:
            return {
                "signal_variance": p.signal_variance,
                "length_scales": p.length_scales.tolist(),
                "noise_variance": p.noise_variance,
            }

        return {
            "format": self.FORMAT_TAG,
            "n_outputs": self.n_outputs,
            "n_inputs": self.n_inputs,
            "input_dim": self.input_dim,
            "shared_hyperparams": self.shared_hyperparams,
            "rows": [
                {
                    "params": [params_doc(p) for p in row.params],
                    "points": [
                        {
                            "location": p.input_location.tolist(),
                            "weights_re": np.real(p.input_weights).tolist(),
                            "weights_im": np.imag(p.input_weights).tolist(),
                            "target_re": p.target.real,
                            "target_im": p.target.imag,
                        }
                        for p in row.points
                    ],
                }
                for row in self.rows
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_snapshot(), fh, indent=1)

    @classmethod
    def from_snapshot(cls, doc: dict) -> "TransferMatrixGP":
        if doc.get("format") != cls.FORMAT_TAG:
            raise ValueError(f"unsupported snapshot format {doc.get('format')!r}")
        model = cls(
            n_outputs=doc["n_outputs"],
            n_inputs=doc["n_inputs"],
            input_dim=doc["input_dim"],
            shared_hyperparams=doc["shared_hyperparams"],
        )
        for row, row_doc in zip(model.rows, doc["rows"]):
            row.params = [
                KernelParams(
                    p["signal_variance"],
                    np.asarray(p["length_scales"]),
                    p["noise_variance"],
                )
                for p in row_doc["params"]
            ]
            row.points = [
                TrainingPoint(
                    np.asarray(pt["location"]),
                    np.asarray(pt["weights_re"]) + 1j * np.asarray(pt["weights_im"]),
                    pt["target_re"] + 1j * pt["target_im"],
                )
                for pt in row_doc["points"]
            ]
            row.invalidate()
        model.refresh()
        return model

    @classmethod
    def load(cls, path) -> "TransferMatrixGP":
        with open(path) as fh:
            return cls.from_snapshot(json.load(fh))


# -- hyperparameter optimization ------------------------------------------


@dataclass(frozen=True)
class HyperBounds:
    """Positive box bounds for (signal_variance, each length scale, noise_variance)."""

    signal_variance: tuple[float, float]
    length_scales: list[tuple[float, float]]
    noise_variance: tuple[float, float] = (1e-8, 1e2)

    def __post_init__(self):
        for lo, hi in [self.signal_variance, self.noise_variance, *self.length_scales]:
            if not (0 < lo <= hi and np.isfinite(hi)):
                raise ValueError("bounds must be finite positive intervals")

    @classmethod
    def default(cls, n_dims: int) -> "HyperBounds":
        return cls(
            signal_variance=(1e-6, 1e4),
            length_scales=[(1e-3, 1e4)] * n_dims,
            noise_variance=(1e-8, 1e2),
        )

    @classmethod
    def from_data(cls, points: list[TrainingPoint]) -> "HyperBounds":
        """Bounds scaled to the training locations.

        Length scales may not shrink below the data's own resolution (the
        median gap between distinct coordinates), which blocks the degenerate
        maximum-likelihood solution that memorizes every point and reports
        prior variance everywhere else; structure finer than the sampling
        grid is unidentifiable and belongs in the noise term instead.
        """
        X = np.stack([p.input_location for p in points])
        ls_bounds = []
        for d in range(X.shape[1]):
            vals = np.unique(X[:, d])
            gaps = np.diff(vals)
            gaps = gaps[gaps > 1e-12]
            if gaps.size:
                lo = max(1e-6, float(np.median(gaps)))
                span = float(vals[-1] - vals[0])
                hi = max(100.0 * lo, 10.0 * span)
            else:
                lo, hi = 1e-3, 1e4
            ls_bounds.append((lo, hi))
        mags = []
        for p in points:
            w = np.max(np.abs(p.input_weights))
            if w > 1e-12:
                mags.append(abs(p.target) / w)
        scale = float(np.median(mags)) if mags else 1.0
        scale = min(max(scale, 1e-3), 1e3)
        return cls(
            signal_variance=(1e-6 * scale**2, 1e4 * max(1.0, scale**2)),
            length_scales=ls_bounds,
            noise_variance=(NOISE_FLOOR, 1e2 * max(1.0, scale**2)),
        )

    def init_params(self) -> KernelParams:
        """Geometric-midpoint-ish starting values inside the bounds."""
        ls = np.array([math.sqrt(lo * hi) for lo, hi in self.length_scales])
        sv = math.sqrt(self.signal_variance[0] * self.signal_variance[1])
        return KernelParams(
            signal_variance=sv,
            length_scales=ls,
            noise_variance=max(NOISE_FLOOR, 1e-5 * sv),
        )


NOISE_FLOOR = 1e-8


def _pack(params_list: list[KernelParams], shared: bool) -> np.ndarray:
    sets = params_list[:1] if shared else params_list
    vals = []
    for p in sets:
        vals.append(p.signal_variance)
        vals.extend(p.length_scales)
    vals.append(_row_noise_variance(params_list))
    return np.log(np.asarray(vals))


def _unpack(
    x: np.ndarray, template: list[KernelParams], shared: bool
) -> list[KernelParams]:
    d = template[0].n_dims
    p = len(template)
    noise = max(float(np.exp(x[-1])), NOISE_FLOOR)
    n_sets = 1 if shared else p
    sets = []
    for s in range(n_sets):
        off = s * (1 + d)
        sets.append(
            KernelParams(
                signal_variance=float(np.exp(x[off])),
                length_scales=np.exp(x[off + 1 : off + 1 + d]),
                noise_variance=noise,
            )
        )
    return sets * p if shared else sets


def _pack_bounds(bounds: HyperBounds, n_sets: int) -> list[tuple[float, float]]:
    per_set = [bounds.signal_variance] + list(bounds.length_scales)
    out = per_set * n_sets + [bounds.noise_variance]
    return [(np.log(lo), np.log(hi)) for lo, hi in out]


def _fit_row_params(
    points: list[TrainingPoint],
    init: list[KernelParams],
    bounds: HyperBounds,
    shared: bool,
    seed: int,
    n_starts: int = 4,
    max_iter: int = 150,
) -> list[KernelParams]:
    """Multi-start Nelder-Mead over log-hyperparameters of one output row."""
    targets = np.array([p.target for p in points])

    def neg_loglik(x: np.ndarray) -> float:
        try:
            plist = _unpack(x, init, shared)
            K_T = _row_covariance_with_noise(points, plist)
            return -marginal_log_likelihood(K_T, targets)
        except (NumericalError, FloatingPointError):
            return 1e12

    x0 = _pack(init, shared)
    log_bounds = _pack_bounds(bounds, 1 if shared else len(init))
    lo = np.array([b[0] for b in log_bounds])
    hi = np.array([b[1] for b in log_bounds])
    x0 = np.clip(x0, lo, hi)

    data_start = np.clip(
        _pack([bounds.init_params()] * len(init), shared), lo, hi
    )
    rng = np.random.default_rng(seed)
    starts = [x0, data_start] + [rng.uniform(lo, hi) for _ in range(max(0, n_starts - 2))]

    best_x, best_f = x0, neg_loglik(x0)
    init_f = best_f
    for start in starts:
        res = scipy.optimize.minimize(
            neg_loglik,
            start,
            method="Nelder-Mead",
            bounds=log_bounds,
            options={"maxiter": max_iter, "xatol": 1e-3, "fatol": 1e-4},
        )
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    if best_f > init_f:
        warnings.warn("hyperparameter search failed to improve; keeping initial values")
        return init
    return _unpack(best_x, init, shared)


def fit_hyperparameters(
    points: list[TrainingPoint],
    init: KernelParams,
    bounds: HyperBounds | None = None,
    seed: int = 0,
    n_starts: int = 4,
    max_iter: int = 150,
) -> KernelParams:
    """Maximize the marginal likelihood for a single shared kernel parameter set.

    Returns parameters whose likelihood is >= that of init; on optimizer
    failure the initial values are returned with a warning.
    """
    if len(points) < 2:
        raise ValueError("need at least 2 training points")
    bounds = bounds if bounds is not None else HyperBounds.default(init.n_dims)
    n_inputs = points[0].input_weights.size
    fitted = _fit_row_params(
        points,
        [init] * n_inputs,
        bounds,
        shared=True,
        seed=seed,
        n_starts=n_starts,
        max_iter=max_iter,
    )
    return fitted[0]


class FixedTransferModel:
    """Prediction-only stand-in backed by a known frequency response.

    response_fn(omega, params) must return an (n_outputs, n_inputs) complex
    matrix; variance_fn (same signature, real matrix) defaults to zero, which
    makes every gain computation treat the model as exact.
    """

    def __init__(self, response_fn, n_outputs: int, n_inputs: int, variance_fn=None):
        self.response_fn = response_fn
        self.variance_fn = variance_fn
        self.n_outputs = n_outputs
        self.n_inputs = n_inputs

    def predict(self, test_locations: np.ndarray) -> ModelEstimate:
        Xs = np.atleast_2d(np.asarray(test_locations, dtype=float))
        n_loc = Xs.shape[0]
        mean = np.zeros((self.n_outputs, self.n_inputs, n_loc), dtype=complex)
        var = np.zeros((self.n_outputs, self.n_inputs, n_loc))
        for t in range(n_loc):
            omega, params = Xs[t, 0], Xs[t, 1:]
            mean[:, :, t] = self.response_fn(omega, params)
            if self.variance_fn is not None:
                var[:, :, t] = self.variance_fn(omega, params)
        return ModelEstimate(frequencies=Xs[:, 0], mean=mean, variance=var)


def samples_from_spectra(
    input_spectra: list[Spectrum],
    output_spectrum: Spectrum,
    window: Window,
    kept_indices: np.ndarray,
) -> list[TrainingPoint]:
    """Training points for one output row from one window's spectra.

    Each kept frequency becomes a point located at [w, window params], carrying
    every input spectrum value as a weight and the output value as target.
    """
    points = []
    for k in np.asarray(kept_indices, dtype=int):
        omega = output_spectrum.frequencies[k]
        location = np.concatenate([[omega], window.representative_params])
        weights = np.array([s.values[k] for s in input_spectra], dtype=complex)
        points.append(
            TrainingPoint(location, weights, complex(output_spectrum.values[k]))
        )
    return points
