"""scikit-learn compatible front end to the PnP solver.

Each row of ``X`` packs one observation: the 9 control points as
``u0, v0, ..., u8, v8`` followed by the row-major 3x3 calibration matrix,
27 features in total.  Because the intrinsics travel with the row, a single
fitted estimator handles any mix of acquisition geometries, and ``X`` stays a
plain 2D array that works with pipelines and cross-validation utilities.
Targets and predictions are pose vectors ``[qw, qx, qy, qz, tx, ty, tz]``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import N_CONTROL_POINTS
from .cube import make_cube
from .exceptions import ConeBeamPoseError
from .geometry import Pose, geodesic_angle_deg, intrinsics_matrix
from .metrics import FIVE_CM_MM, FIVE_DEG
from .pnp import PnpConfig, solve

N_POINT_FEATURES = 2 * N_CONTROL_POINTS
N_FEATURES = N_POINT_FEATURES + 9


def pack_features(points2d, intrinsics):
    """Stack ``(n, 9, 2)`` points with ``(3, 3)`` or ``(n, 3, 3)`` intrinsics into ``(n, 27)``."""
    points2d = np.asarray(points2d, dtype=np.float64)
    if points2d.ndim == 2:
        points2d = points2d[None]
    n = len(points2d)
    k = np.asarray(intrinsics, dtype=np.float64)
    if k.ndim == 2:
        k = np.broadcast_to(k, (n, 3, 3))
    return np.hstack([points2d.reshape(n, -1), k.reshape(n, 9)])


def samples_to_xy(samples, predictions=None):
    """Build ``(X, y)`` from dataset samples; ``predictions`` replaces the labels in ``X``."""
    samples = list(samples)
    if predictions is None:
        pts = [s.gt_points2d for s in samples]
    else:
        by_id = {p.sample_id: p for p in predictions}
        pts = [by_id[s.id].points2d for s in samples]
    k = [intrinsics_matrix(s.geom) for s in samples]
    y = np.array([s.gt_pose.as_vector() for s in samples])
    return pack_features(pts, k), y


class CubePoseEstimator(BaseEstimator):
    """Recover object poses from packed 2D control points and intrinsics.

    Parameters
    ----------
    edge_mm : float, default=30.0
        Edge length of the cube whose control points are observed.
    max_iterations, convergence_tol_px, damping_init, damping_scale
        Levenberg-Marquardt settings, see :class:`~conebeam_pose.pnp.PnpConfig`.

    Rows whose solve fails are returned as NaN in :meth:`predict`.
    """

    def __init__(self, edge_mm=30.0, max_iterations=100, convergence_tol_px=1e-8,
                 damping_init=1e-3, damping_scale=10.0):
        self.edge_mm = edge_mm
        self.max_iterations = max_iterations
        self.convergence_tol_px = convergence_tol_px
        self.damping_init = damping_init
        self.damping_scale = damping_scale

    def fit(self, X=None, y=None):
        """Nothing is learned; builds the object model and solver settings."""
        if X is not None:
            self._check_X(X, reset=True)
        self.model_ = make_cube(self.edge_mm)
        self.pnp_config_ = PnpConfig(
            max_iterations=self.max_iterations,
            convergence_tol_px=self.convergence_tol_px,
            damping_init=self.damping_init,
            damping_scale=self.damping_scale,
        )
        return self

    def _check_X(self, X, reset=False):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"X must have {N_FEATURES} features (18 pixel coords + 9 K entries), "
                             f"got {X.shape[1]}")
        if reset:
            self.n_features_in_ = X.shape[1]
        return X

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._check_X(X)
        out = np.full((len(X), 7), np.nan)
        cps = self.model_.control_points
        for i, row in enumerate(X):
            pts = row[:N_POINT_FEATURES].reshape(N_CONTROL_POINTS, 2)
            k = row[N_POINT_FEATURES:].reshape(3, 3)
            try:
                out[i] = solve(cps, pts, k, self.pnp_config_).pose.as_vector()
            except ConeBeamPoseError:
                continue
        return out

    def transform(self, X):
        """Alias of :meth:`predict` so the estimator can sit inside a pipeline."""
        return self.predict(X)

    def score(self, X, y):
        """Fraction of rows whose pose is within 5 cm and 5 degrees of ``y``."""
        pred = self.predict(X)
        y = check_array(y, dtype=np.float64)
        hits = 0
        for p, t in zip(pred, y):
            if not np.all(np.isfinite(p)):
                continue
            pp, tt = Pose.from_vector(p), Pose.from_vector(t)
            if (geodesic_angle_deg(pp.matrix, tt.matrix) < FIVE_DEG
                    and np.linalg.norm(pp.translation_mm - tt.translation_mm) < FIVE_CM_MM):
                hits += 1
        return hits / len(y)
