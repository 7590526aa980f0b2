"""Cone-beam X-ray projection model.

The X-ray source plays the role of a pinhole camera centre and the
source-image distance (SID) is the focal length.  Pixel coordinates have
their origin at the top-left detector corner with ``v`` pointing down, which
is why the second diagonal entry of the calibration matrix is negative.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import check_intrinsics, check_points3d, check_positive, check_vector
from .exceptions import BehindSourceError, PreconditionError
from .rotation import (  # noqa: F401  re-exported for convenience
    euler_zyx_to_quat,
    geodesic_angle_deg,
    matrix_to_quat,
    normalize_quat,
    quat_to_matrix,
)

MIN_DEPTH_MM = 1e-9


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Run-time acquisition parameters of a cone-beam system.

    ``principal_offset_mm`` is the offset of the principal point from the
    detector centre; ``(0, 0)`` puts it at ``(width / 2, height / 2)``.
    """

    sid_mm: float
    fov_diag_mm: float
    image_width_px: int = 960
    image_height_px: int = 960
    principal_offset_mm: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "sid_mm", check_positive(self.sid_mm, "sid_mm"))
        object.__setattr__(self, "fov_diag_mm", check_positive(self.fov_diag_mm, "fov_diag_mm"))
        for name in ("image_width_px", "image_height_px"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise PreconditionError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        offset = check_vector(self.principal_offset_mm, 2, "principal_offset_mm")
        object.__setattr__(self, "principal_offset_mm", (float(offset[0]), float(offset[1])))

    @property
    def image_size(self):
        return self.image_width_px, self.image_height_px

    def pixel_density(self):
        return fov_to_pixel_density(self)

    def intrinsics(self):
        return intrinsics_matrix(self)


def fov_to_pixel_density(geom):
    """Pixel densities ``(k_u, k_v)`` in px/mm, assuming square pixels.

    The FOV is given as a diagonal, so both densities equal the pixel diagonal
    divided by the FOV diagonal.
    """
    diag_px = math.hypot(geom.image_width_px, geom.image_height_px)
    k = diag_px / geom.fov_diag_mm
    if not k > 0:
        raise PreconditionError(f"derived pixel density must be positive, got {k}")
    return k, k


def intrinsics_matrix(geom):
    """Build the 3x3 calibration matrix ``K`` for ``geom``.

    ``K = [[k_u f, 0, k_u x0'], [0, -k_v f, k_v y0'], [0, 0, 1]]`` where
    ``(x0', y0')`` is the principal point measured in mm from the top-left
    detector corner.
    """
    if not isinstance(geom, AcquisitionGeometry):
        raise PreconditionError(f"expected AcquisitionGeometry, got {type(geom).__name__}")
    k_u, k_v = fov_to_pixel_density(geom)
    x0 = geom.image_width_px / (2.0 * k_u) + geom.principal_offset_mm[0]
    y0 = geom.image_height_px / (2.0 * k_v) + geom.principal_offset_mm[1]
    k = np.array([
        [k_u * geom.sid_mm, 0.0, k_u * x0],
        [0.0, -k_v * geom.sid_mm, k_v * y0],
        [0.0, 0.0, 1.0],
    ])
    k.setflags(write=False)
    return k


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform of the object frame into the source frame.

    ``rotation`` is a unit quaternion ``(w, x, y, z)``; ``translation_mm`` is
    the object origin expressed in the source frame.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation_mm: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = normalize_quat(check_vector(self.rotation, 4, "rotation"))
        t = check_vector(self.translation_mm, 3, "translation_mm").copy()
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation_mm", t)

    @classmethod
    def from_matrix(cls, rotation_matrix, translation_mm):
        return cls(matrix_to_quat(rotation_matrix), translation_mm)

    @classmethod
    def from_euler(cls, rz_deg, ry_deg, rx_deg, translation_mm):
        return cls(euler_zyx_to_quat(rz_deg, ry_deg, rx_deg), translation_mm)

    @classmethod
    def from_vector(cls, vec):
        vec = check_vector(vec, 7, "pose vector")
        return cls(vec[:4], vec[4:])

    @cached_property
    def matrix(self):
        r = quat_to_matrix(self.rotation)
        r.setflags(write=False)
        return r

    def as_vector(self):
        """``[qw, qx, qy, qz, tx, ty, tz]``."""
        return np.concatenate([self.rotation, self.translation_mm])

    def transform(self, points):
        """Map object-frame points ``(n, 3)`` into the source frame."""
        return np.asarray(points, dtype=np.float64) @ self.matrix.T + self.translation_mm

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation_mm, other.translation_mm
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation_mm.tobytes()))

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation_mm)
        return f"Pose(rotation=[{q}], translation_mm=[{t}])"


def _project(k, camera_points):
    depth = camera_points[:, 2]
    uvw = camera_points @ k.T
    return uvw[:, :2] / depth[:, None], depth


def project_points(k, pose, points):
    """Project ``(n, 3)`` object points; returns ``(uv, depth)``.

    Raises :class:`BehindSourceError` naming the first point whose depth is
    not above 1e-9 mm.
    """
    k = check_intrinsics(k)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or not np.all(np.isfinite(points)):
        raise PreconditionError(f"points must be a finite (n, 3) array, got shape {points.shape}")
    camera_points = pose.transform(points)
    bad = np.flatnonzero(camera_points[:, 2] <= MIN_DEPTH_MM)
    if bad.size:
        i = int(bad[0])
        raise BehindSourceError(
            f"point {i} has depth {camera_points[i, 2]:.6g} mm (must be > {MIN_DEPTH_MM})",
            index=i,
        )
    return _project(k, camera_points)


def project_point(k, pose, point):
    """Project a single 3D point; returns ``((u, v), depth)``."""
    point = check_vector(point, 3, "point")
    uv, depth = project_points(k, pose, point[None, :])
    return uv[0], float(depth[0])


def project_control_points(k, pose, control_points):
    """Order-preserving projection of the 9 control points to pixels."""
    uv, _ = project_points(k, pose, check_points3d(control_points, name="control_points"))
    return uv


def inside_image(points2d, width, height):
    p = np.asarray(points2d)
    return bool(np.all((p[:, 0] >= 0) & (p[:, 0] <= width) & (p[:, 1] >= 0) & (p[:, 1] <= height)))
