"""Zeroth-order variance-reduced finite-sum optimization."""

from .errors import (
    ConfigurationError,
    DivergenceError,
    FitError,
    InfeasibleSettingsError,
    ReplayError,
    StaleSnapshotError,
    WorkerError,
    ZOVRError,
)
from .objectives import (
    CountingObjective,
    FiniteSumObjective,
    SyntheticDataset,
    make_blackbox,
    make_dataset,
    make_least_squares_svm,
    make_logistic,
    make_ridge,
    reference_instance,
)
from .optimizers import RunConfig, Trace, VREstimate, apply_update, run_asyszo_sequential, run_dszovr, vr_estimate
from .sampling import Sampler, sample_block, sample_minibatch
from .zo_estimator import (
    BlockGradient,
    SmoothingSchedule,
    SnapshotGradient,
    block_gradient,
    central_diff,
    full_smoothed_gradient,
    restrict_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "BlockGradient",
    "ConfigurationError",
    "CountingObjective",
    "DivergenceError",
    "FiniteSumObjective",
    "FitError",
    "InfeasibleSettingsError",
    "ReplayError",
    "RunConfig",
    "Sampler",
    "SmoothingSchedule",
    "SnapshotGradient",
    "StaleSnapshotError",
    "SyntheticDataset",
    "Trace",
    "VREstimate",
    "WorkerError",
    "ZOVRError",
    "apply_update",
    "block_gradient",
    "central_diff",
    "full_smoothed_gradient",
    "make_blackbox",
    "make_dataset",
    "make_least_squares_svm",
    "make_logistic",
    "make_ridge",
    "reference_instance",
    "restrict_snapshot",
    "run_asyszo_sequential",
    "run_dszovr",
    "sample_block",
    "sample_minibatch",
    "vr_estimate",
]
