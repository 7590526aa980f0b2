"""Input validation helpers.

Each ``check_*`` function returns a float64 ndarray of the expected shape or
raises :class:`~conebeam_pose.exceptions.PreconditionError`.
"""

import numpy as np

from .exceptions import PreconditionError

N_CONTROL_POINTS = 9


def _as_finite(arr, name):
    try:
        out = np.asarray(arr, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise PreconditionError(f"{name} must be numeric: {exc}") from None
    if not np.all(np.isfinite(out)):
        raise PreconditionError(f"{name} contains non-finite values")
    return out


def check_points(arr, dim, name="points", n=None, min_points=None):
    """Validate an ``(n, dim)`` point array."""
    out = _as_finite(arr, name)
    if out.ndim != 2 or out.shape[1] != dim:
        raise PreconditionError(f"{name} must have shape (n, {dim}), got {out.shape}")
    if n is not None and out.shape[0] != n:
        raise PreconditionError(f"{name} must contain exactly {n} points, got {out.shape[0]}")
    if min_points is not None and out.shape[0] < min_points:
        raise PreconditionError(
            f"{name} needs at least {min_points} points, got {out.shape[0]}"
        )
    return out


def check_points2d(arr, n=N_CONTROL_POINTS, name="points2d"):
    return check_points(arr, 2, name=name, n=n)


def check_points3d(arr, n=N_CONTROL_POINTS, name="points3d"):
    return check_points(arr, 3, name=name, n=n)


def check_intrinsics(k):
    """Validate a 3x3 upper-triangular calibration matrix with ``k[2] == (0, 0, 1)``."""
    out = _as_finite(k, "intrinsics")
    if out.shape != (3, 3):
        raise PreconditionError(f"intrinsics must be 3x3, got {out.shape}")
    if out[1, 0] != 0.0 or out[2, 0] != 0.0 or out[2, 1] != 0.0 or out[2, 2] != 1.0:
        raise PreconditionError("intrinsics must be upper triangular with k[2][2] == 1")
    if out[0, 0] == 0.0 or out[1, 1] == 0.0:
        raise PreconditionError("intrinsics focal terms must be non-zero")
    return out


def check_vector(arr, size, name):
    out = _as_finite(arr, name)
    if out.shape != (size,):
        raise PreconditionError(f"{name} must have shape ({size},), got {out.shape}")
    return out


def check_positive(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise PreconditionError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise PreconditionError(f"{name} must be positive and finite, got {value!r}")
    return v


def check_random_state(rng):
    """Turn ``None``, an int seed or a Generator into a ``np.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer, list, tuple)):
        return np.random.default_rng(rng)
    raise PreconditionError(f"cannot build a random generator from {rng!r}")
