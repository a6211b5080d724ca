"""Multivariate rank-and-trim sampling of sensor windows, with fidelity
metrics, a pseudo-real data generator and a multi-hop network simulator."""

from .components import (
    ComponentModel,
    CovarianceEstimate,
    Estimator,
    SensorWindow,
    Technique,
    classical_covariance,
    ica_transform,
    pca_transform,
    robust_covariance,
    robust_pca_transform,
    symmetric_eigendecomposition,
    transform,
)
from .datagen import (
    DistributionSpec,
    Family,
    Reference,
    generate_window,
    load_reference,
    synthetic_reference,
)
from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    DeploymentError,
    FactorizationError,
    MusaError,
    NumericError,
    ParseError,
    PreconditionError,
)
from .fidelity import anova_compare, relative_error
from .netsim import Axis, Reduction, SimConfig, deploy, experiment_sweep, run_simulation
from .sampler import Level, ReductionResult, musa_reduce, reduction_level

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
