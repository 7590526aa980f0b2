"""Perspective-n-Point: pose from 2D/3D correspondences and known intrinsics.

:func:`solve` runs a normalised DLT to get an initial pose and then polishes
it with Levenberg-Marquardt on the pixel reprojection error.  The calibration
matrix is only used to map pixels to normalised image coordinates (DLT) and
to project during refinement, so one solver serves every acquisition
geometry.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_intrinsics, check_points
from .exceptions import (
    CheiralityError,
    DegenerateConfigurationError,
    NumericalError,
    PreconditionError,
)
from .geometry import MIN_DEPTH_MM, Pose
from .rotation import axis_angle_to_quat, normalize_quat, quat_multiply, quat_to_matrix

MIN_CORRESPONDENCES = 6
RANK_TOL = 1e-12


@dataclass(frozen=True)
class PnpConfig:
    max_iterations: int = 100
    convergence_tol_px: float = 1e-8
    damping_init: float = 1e-3
    damping_scale: float = 10.0

    def __post_init__(self):
        for name in ("max_iterations", "convergence_tol_px", "damping_init", "damping_scale"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise PreconditionError(f"PnpConfig.{name} must be positive, got {value!r}")
        if int(self.max_iterations) != self.max_iterations:
            raise PreconditionError("PnpConfig.max_iterations must be an integer")


@dataclass(frozen=True)
class PnpSolution:
    pose: Pose
    rms_reprojection_px: float
    iterations: int
    converged: bool
    initial_rms_px: float = math.nan


def _check_inputs(points3d, points2d, k):
    x = check_points(points3d, 3, name="points3d", min_points=MIN_CORRESPONDENCES)
    q = check_points(points2d, 2, name="points2d", n=x.shape[0])
    return x, q, check_intrinsics(k)


def normalized_coordinates(points2d, k):
    """Map pixels through ``K^-1`` to normalised image coordinates ``(x/z, y/z)``."""
    h = np.column_stack([points2d, np.ones(len(points2d))]) @ np.linalg.inv(k).T
    return h[:, :2] / h[:, 2:3]


def _similarity_normalizer(points):
    """Centre + isotropic scale so the mean distance to the origin is sqrt(dim)."""
    dim = points.shape[1]
    centre = points.mean(axis=0)
    mean_dist = np.sqrt(((points - centre) ** 2).sum(axis=1)).mean()
    if mean_dist <= 0:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(dim) / mean_dist
    t = np.eye(dim + 1)
    t[:dim, :dim] *= s
    t[:dim, dim] = -s * centre
    return t


def solve_dlt(points3d, points2d, k):
    """Linear pose estimate from at least 6 non-coplanar correspondences.

    Builds the ``2n x 12`` DLT system on normalised (and Hartley-conditioned)
    coordinates, takes the smallest right singular vector, fixes its sign so
    most points lie in front of the source, and projects the left 3x3 block
    onto the nearest rotation.
    """
    x3, q2, k = _check_inputs(points3d, points2d, k)
    n = len(x3)
    xn = normalized_coordinates(q2, k)

    t2 = _similarity_normalizer(xn)
    t3 = _similarity_normalizer(x3)
    xh = np.column_stack([x3, np.ones(n)])
    xc = xh @ t3.T
    pc = np.column_stack([xn, np.ones(n)]) @ t2.T

    a = np.zeros((2 * n, 12))
    a[0::2, 0:4] = xc
    a[0::2, 8:12] = -pc[:, 0:1] * xc
    a[1::2, 4:8] = xc
    a[1::2, 8:12] = -pc[:, 1:2] * xc
    _, sv, vt = np.linalg.svd(a)
    if sv[0] <= 0 or sv[-2] / sv[0] < RANK_TOL:
        raise DegenerateConfigurationError(
            "DLT system is rank deficient (coplanar or repeated control points?)"
        )
    p = np.linalg.inv(t2) @ vt[-1].reshape(3, 4) @ t3

    depths = xh @ p[2]
    if np.count_nonzero(depths > 0) < np.count_nonzero(depths < 0):
        p = -p
    u, s, vt_m = np.linalg.svd(p[:, :3])
    r = u @ vt_m
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt_m
    t = p[:, 3] / s.mean()

    if np.all(x3 @ r[2] + t[2] <= MIN_DEPTH_MM):
        raise CheiralityError("DLT solution places every point behind the source")
    return Pose.from_matrix(r, t)


def reprojection_residuals(rotation_matrix, translation, points3d, points2d, k):
    """Stacked ``[du_0, dv_0, du_1, ...]`` pixel residuals (predicted - observed)."""
    pc = points3d @ rotation_matrix.T + translation
    uv = (pc @ k[:2].T) / pc[:, 2:3]
    return (uv - points2d).ravel()


def reprojection_jacobian(rotation_matrix, translation, points3d, k):
    """Jacobian of :func:`reprojection_residuals` w.r.t. ``(omega, dt)``.

    ``omega`` is a rotation vector applied on the left, ``R <- exp(omega) R``;
    ``dt`` is added to the translation.
    """
    w = points3d @ rotation_matrix.T
    return _jacobian(w, w + translation, k)


def _jacobian(w, pc, k):
    n = len(pc)
    z = pc[:, 2]
    u = (pc @ k[0]) / z
    v = (pc @ k[1]) / z
    # d(u, v)/d(camera point), shape (n, 2, 3)
    a = np.empty((n, 2, 3))
    a[:, 0, 0] = k[0, 0]
    a[:, 0, 1] = k[0, 1]
    a[:, 0, 2] = k[0, 2] - u
    a[:, 1, 0] = 0.0
    a[:, 1, 1] = k[1, 1]
    a[:, 1, 2] = k[1, 2] - v
    a /= z[:, None, None]
    wb = w[:, None, :]
    jac = np.empty((n, 2, 6))
    # d(camera point)/d(omega) = -[w]_x, so the row is w x a
    jac[:, :, 0] = wb[..., 1] * a[..., 2] - wb[..., 2] * a[..., 1]
    jac[:, :, 1] = wb[..., 2] * a[..., 0] - wb[..., 0] * a[..., 2]
    jac[:, :, 2] = wb[..., 0] * a[..., 1] - wb[..., 1] * a[..., 0]
    jac[:, :, 3:] = a
    return jac.reshape(2 * n, 6)


def _evaluate(q, t, x3, q2, k, with_jacobian):
    r = quat_to_matrix(q)
    w = x3 @ r.T
    pc = w + t
    if pc[:, 2].min() <= MIN_DEPTH_MM:
        return None, None
    res = ((pc @ k[:2].T) / pc[:, 2:3] - q2).ravel()
    jac = _jacobian(w, pc, k) if with_jacobian else None
    return res, jac


def refine(initial, points3d, points2d, k, cfg=None):
    """Levenberg-Marquardt refinement of ``initial`` on pixel reprojection error.

    Steps that do not lower the squared error are rejected, so the returned
    pose is never worse than ``initial``.  ``converged`` is set once a trial
    step changes the RMS error by less than ``cfg.convergence_tol_px``.
    """
    cfg = cfg or PnpConfig()
    x3, q2, k = _check_inputs(points3d, points2d, k)
    n = len(x3)
    q = np.array(initial.rotation)
    t = np.array(initial.translation_mm)

    res, jac = _evaluate(q, t, x3, q2, k, with_jacobian=True)
    if res is None:
        raise CheiralityError("initial pose places control points behind the source")
    if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
        raise NumericalError("non-finite residual or Jacobian at the initial pose")
    cost = float(res @ res)
    initial_rms = rms = math.sqrt(cost / n)

    mu = cfg.damping_init
    converged = False
    iterations = 0
    eye6 = np.eye(6)
    while iterations < cfg.max_iterations:
        iterations += 1
        jtj = jac.T @ jac
        grad = jac.T @ res
        try:
            delta = np.linalg.solve(jtj + mu * (np.diag(np.diag(jtj)) + 1e-12 * eye6), -grad)
        except np.linalg.LinAlgError:
            mu *= cfg.damping_scale
            continue
        q_new = quat_multiply(axis_angle_to_quat(delta[:3]), q)
        q_new = q_new / math.sqrt(float(q_new @ q_new))
        t_new = t + delta[3:]
        res_new, _ = _evaluate(q_new, t_new, x3, q2, k, with_jacobian=False)
        if res_new is None or not np.all(np.isfinite(res_new)):
            mu *= cfg.damping_scale
            continue
        cost_new = float(res_new @ res_new)
        rms_new = math.sqrt(cost_new / n)
        change = abs(rms - rms_new)
        if cost_new <= cost:
            q, t, cost, rms = q_new, t_new, cost_new, rms_new
            res, jac = _evaluate(q, t, x3, q2, k, with_jacobian=True)
            if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
                raise NumericalError("non-finite residual or Jacobian during refinement")
            mu /= cfg.damping_scale
        else:
            mu *= cfg.damping_scale
        if change < cfg.convergence_tol_px:
            converged = True
            break

    pose = Pose(normalize_quat(q), t)
    return PnpSolution(
        pose=pose,
        rms_reprojection_px=rms,
        iterations=iterations,
        converged=converged,
        initial_rms_px=initial_rms,
    )


def rms_reprojection_px(pose, points3d, points2d, k):
    res = reprojection_residuals(pose.matrix, pose.translation_mm, np.asarray(points3d),
                                 np.asarray(points2d), np.asarray(k))
    return math.sqrt(float(res @ res) / (len(res) // 2))


def solve(points3d, points2d, k, cfg=None):
    """Estimate the object pose: DLT initialisation followed by :func:`refine`."""
    x3, q2, k = _check_inputs(points3d, points2d, k)
    return refine(solve_dlt(x3, q2, k), x3, q2, k, cfg)
