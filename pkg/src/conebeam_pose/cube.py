"""Marked-cube object model: control points, ADD point set and diameter."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_points, check_points3d, check_positive

DEFAULT_EDGE_MM = 30.0


def box_control_points(half_extents):
    """Centroid followed by the 8 box corners.

    Corner ``i`` (1..8) takes bit ``j`` of ``i - 1`` to choose the sign of
    axis ``j`` (bit 0 -> x, bit 1 -> y, bit 2 -> z; a set bit means ``+``).
    """
    hx, hy, hz = half_extents
    points = [(0.0, 0.0, 0.0)]
    for i in range(8):
        points.append((
            hx if i & 1 else -hx,
            hy if i & 2 else -hy,
            hz if i & 4 else -hz,
        ))
    return np.array(points)


def max_pairwise_distance(points):
    points = np.asarray(points, dtype=np.float64)
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Control points plus the point set and diameter used by the ADD metric.

    ``surface_points`` defaults to the control points; pass a denser model
    point set (e.g. sampled mesh vertices) to change what ADD averages over.
    """

    control_points: np.ndarray
    surface_points: np.ndarray = None
    diameter_mm: float = None

    def __post_init__(self):
        cps = check_points3d(self.control_points, name="control_points").copy()
        surface = cps if self.surface_points is None else check_points(
            self.surface_points, 3, name="surface_points", min_points=2
        ).copy()
        diameter = max_pairwise_distance(surface)
        if self.diameter_mm is not None and not np.isclose(self.diameter_mm, diameter, rtol=1e-9):
            raise ValueError(
                f"diameter_mm={self.diameter_mm} disagrees with surface points ({diameter})"
            )
        cps.setflags(write=False)
        surface.setflags(write=False)
        object.__setattr__(self, "control_points", cps)
        object.__setattr__(self, "surface_points", surface)
        object.__setattr__(self, "diameter_mm", check_positive(diameter, "diameter_mm"))

    def add_threshold_mm(self, fraction=0.1):
        return fraction * self.diameter_mm


def make_cube(edge_mm=DEFAULT_EDGE_MM):
    """Object model of a cube with edge ``edge_mm`` centred at the origin."""
    half = check_positive(edge_mm, "edge_mm") / 2.0
    return ObjectModel(box_control_points((half, half, half)))

