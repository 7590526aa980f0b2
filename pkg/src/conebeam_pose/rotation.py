"""Rotation bookkeeping: unit quaternions (w, x, y, z) and 3x3 matrices.

Quaternions are returned in canonical form (``w >= 0``) so that two equal
rotations compare equal component-wise.
"""

import math

import numpy as np

from .exceptions import InvalidRotationError

ORTHONORMAL_TOL = 1e-6


def canonical(q):
    q = np.asarray(q, dtype=np.float64)
    return -q if q[0] < 0 else q


def normalize_quat(q):
    q = np.asarray(q, dtype=np.float64)
    norm = math.sqrt(float(q @ q))
    if not np.isfinite(norm) or norm < 1e-12:
        raise InvalidRotationError(f"quaternion {q} has no usable norm")
    if abs(norm - 1.0) <= 4 * np.finfo(float).eps:
        # already unit: keep the bits so serialisation round trips exactly
        return canonical(q.copy())
    return canonical(q / norm)


def quat_multiply(a, b):
    """Hamilton product ``a * b``; rotating by the result applies ``b`` first."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q):
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
        [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
        [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
    ])


def check_rotation_matrix(m, tol=ORTHONORMAL_TOL):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise InvalidRotationError(f"expected a finite 3x3 matrix, got shape {m.shape}")
    residual = np.abs(m.T @ m - np.eye(3)).max()
    if residual > tol:
        raise InvalidRotationError(f"matrix is not orthonormal (residual {residual:.3g})")
    if np.linalg.det(m) < 0:
        raise InvalidRotationError("matrix is a reflection (det = -1)")
    return m


def matrix_to_quat(m):
    """Convert a rotation matrix to a canonical unit quaternion (Shepperd's method)."""
    m = check_rotation_matrix(m)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return normalize_quat(q)


def axis_angle_to_quat(omega):
    """Exponential map from a rotation vector (radians) to a unit quaternion."""
    wx, wy, wz = omega
    theta = math.sqrt(wx * wx + wy * wy + wz * wz)
    half = 0.5 * theta
    if theta < 1e-8:
        # Taylor expansion of sin(theta/2)/theta
        k = 0.5 - theta * theta / 48.0
        return np.array([math.cos(half), k * wx, k * wy, k * wz])
    k = math.sin(half) / theta
    return np.array([math.cos(half), k * wx, k * wy, k * wz])


def axis_angle_to_matrix(omega):
    return quat_to_matrix(axis_angle_to_quat(omega))


def euler_zyx_to_quat(rz_deg, ry_deg, rx_deg):
    """Intrinsic Z-Y-X Euler angles in degrees, i.e. ``R = Rz(rz) @ Ry(ry) @ Rx(rx)``."""
    hz, hy, hx = (math.radians(a) / 2.0 for a in (rz_deg, ry_deg, rx_deg))
    qz = np.array([math.cos(hz), 0.0, 0.0, math.sin(hz)])
    qy = np.array([math.cos(hy), 0.0, math.sin(hy), 0.0])
    qx = np.array([math.cos(hx), math.sin(hx), 0.0, 0.0])
    return normalize_quat(quat_multiply(quat_multiply(qz, qy), qx))


def geodesic_angle_deg(r1, r2):
    """Smallest rotation angle between two rotation matrices, in degrees.

    Equal to ``arccos((trace(R1^T R2) - 1) / 2)`` but evaluated as an
    ``atan2`` of the sine and cosine parts so it stays accurate near 0 and 180.
    """
    d = np.asarray(r1).T @ np.asarray(r2)
    cos_part = (d[0, 0] + d[1, 1] + d[2, 2] - 1.0) / 2.0
    sx = d[2, 1] - d[1, 2]
    sy = d[0, 2] - d[2, 0]
    sz = d[1, 0] - d[0, 1]
    sin_part = 0.5 * math.sqrt(sx * sx + sy * sy + sz * sz)
    return math.degrees(math.atan2(sin_part, min(max(cos_part, -1.0), 1.0)))
