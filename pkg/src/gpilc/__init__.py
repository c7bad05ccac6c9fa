"""Frequency-domain iterative learning control with complex-valued GP models.

Layers, bottom up:

- signals: time/frequency containers, DFT transforms, windowing, thresholding
- cgpr: complex-valued Gaussian process regression with input-weighted kernels
- convergence: iteration-gain bounds and spectral-radius checks
- plant: simulated two-link series-elastic arm and exact LTI references
- ilc: the learning loop (training data, local models, input updates)
- harness: experiment orchestration, persistence, reporting
"""

from .cgpr import (
    FixedTransferModel,
    KernelParams,
    ModelEstimate,
    TrainingPoint,
    TransferMatrixGP,
    fit_hyperparameters,
)
from .convergence import (
    GainResult,
    ModelErrorBounds,
    bounded_uncertainty_gain,
    iteration_map_spectral_radius,
    mimo_gain_bound,
    scalar_gain_bound,
    variance_to_bounds,
)
from .harness import RunConfig, TrajectorySpec, generate_trajectory, run_experiment
from .ilc import IterationRecord, LearningConfig, run_learning, update_input
from .plant import ArmParams, LtiPlant, SeaArm, TransferFunction, lti_test_plant
from .signals import Spectrum, TimeSeries, Window, forward_transform, inverse_transform

__version__ = "0.1.0"

__all__ = [
    "ArmParams",
    "FixedTransferModel",
    "GainResult",
    "IterationRecord",
    "KernelParams",
    "LearningConfig",
    "LtiPlant",
    "ModelErrorBounds",
    "ModelEstimate",
    "RunConfig",
    "SeaArm",
    "Spectrum",
    "TimeSeries",
    "TrainingPoint",
    "TrajectorySpec",
    "TransferFunction",
    "TransferMatrixGP",
    "Window",
    "bounded_uncertainty_gain",
    "fit_hyperparameters",
    "forward_transform",
    "generate_trajectory",
    "inverse_transform",
    "iteration_map_spectral_radius",
    "lti_test_plant",
    "mimo_gain_bound",
    "run_experiment",
    "run_learning",
    "scalar_gain_bound",
    "update_input",
    "variance_to_bounds",
]
