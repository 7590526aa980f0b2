"""Geometry-decoupled 6D pose recovery for cone-beam X-ray systems.

Project a marked cube's control points under a run-time acquisition geometry,
recover its pose from 2D control-point predictions with PnP, and score the
result with 2D projection, 5cm/5deg and ADD metrics.
"""

__version__ = "0.1.0"

from .cube import ObjectModel, make_cube
from .dataset import (
    GenerationRanges,
    Sample,
    augment,
    generate_dataset,
    load_dataset,
    sample_geometry,
    sample_pose,
    save_dataset,
)
from .estimator import CubePoseEstimator, pack_features
from .exceptions import (
    BehindSourceError,
    CheiralityError,
    ConeBeamPoseError,
    DataFormatError,
    DegenerateConfigurationError,
    GenerationError,
    InvalidRotationError,
    MissingPredictionError,
    NumericalError,
    PreconditionError,
)
from .geometry import (
    AcquisitionGeometry,
    Pose,
    fov_to_pixel_density,
    intrinsics_matrix,
    project_control_points,
    project_point,
)
from .metrics import EvalConfig, MetricsReport, PoseError, evaluate
from .pnp import PnpConfig, PnpSolution, refine, solve, solve_dlt
from .predictor import Prediction, load_predictions, oracle_predict, save_predictions
