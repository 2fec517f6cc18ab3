"""Shared back-constrained GP-LVM for human-to-robot motion retargeting.

Submodules
----------
kernels      RBF covariance and its analytic derivatives
motion       pose / sequence data model, normalisation, CSV I/O
gplvm        shared GP-LVM with RBF back constraints
trajectory   time-augmented GMM (EM) and GMR ideal trajectories
adaptation   patient-specific back-constraint re-weighting
evaluation   RMSE metrics and the sampled evaluation protocol
synth        forward-kinematics ground-truth generator
pipeline     whole-body orchestration used by the CLI
plotting     report figures
"""

from .errors import (
    CompatibilityError,
    ConvergenceError,
    InvalidInputError,
    LatentCoachError,
    NumericalError,
    ParseError,
    StateError,
)

__version__ = "0.1.0"

__all__ = [
    "CompatibilityError",
    "ConvergenceError",
    "InvalidInputError",
    "LatentCoachError",
    "NumericalError",
    "ParseError",
    "StateError",
    "__version__",
]
