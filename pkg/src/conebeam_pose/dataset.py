"""Synthetic marked-cube dataset: seeded sampling, augmentation and file formats.

Every sample draws from its own random stream seeded by ``(seed, sample_id)``,
so the content of a sample does not depend on generation order or on how the
work is split across processes.
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, read_jsonl, write_jsonl
from ._parallel import parallel_map
from ._validation import check_points2d, check_random_state
from .cube import make_cube
from .exceptions import BehindSourceError, DataFormatError, GenerationError, PreconditionError
from .geometry import AcquisitionGeometry, Pose, inside_image, intrinsics_matrix, project_points

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8
IMAGE_SIZE_PX = 960
MAX_REJECTION_RATE = 0.99
_SAMPLE_STREAM = 0
_SPLIT_STREAM = 1


def _interval(value, name):
    lo, hi = (float(v) for v in value)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise PreconditionError(f"{name} must be a finite interval [lo, hi], got {value!r}")
    return (lo, hi)


@dataclass(frozen=True)
class GenerationRanges:
    """Sampling intervals for poses and acquisition geometry.

    Angles are in degrees, lengths in mm.  ``rx_deg`` is a union of
    intervals.  The defaults reproduce the marked-cube acquisition ranges.
    """

    rz_deg: tuple = (0.0, 360.0)
    ry_deg: tuple = (0.0, 360.0)
    rx_deg: tuple = ((-45.0, 45.0), (135.0, 225.0))
    tx_mm: tuple = (-40.0, 40.0)
    ty_mm: tuple = (-40.0, 40.0)
    tz_mm: tuple = (660.0, 740.0)
    sid_mm: tuple = (1100.0, 1230.0)
    fov_diag_mm: tuple = (156.0, 297.0)
    image_width_px: int = IMAGE_SIZE_PX
    image_height_px: int = IMAGE_SIZE_PX
    principal_offset_jitter_mm: float = 0.0

    def __post_init__(self):
        for name in ("rz_deg", "ry_deg", "tx_mm", "ty_mm", "tz_mm", "sid_mm", "fov_diag_mm"):
            object.__setattr__(self, name, _interval(getattr(self, name), name))
        rx = tuple(_interval(iv, "rx_deg") for iv in self.rx_deg)
        if not rx:
            raise PreconditionError("rx_deg needs at least one interval")
        object.__setattr__(self, "rx_deg", rx)
        if self.sid_mm[0] <= 0 or self.fov_diag_mm[0] <= 0:
            raise PreconditionError("sid_mm and fov_diag_mm must be positive")
        if self.principal_offset_jitter_mm < 0:
            raise PreconditionError("principal_offset_jitter_mm must be non-negative")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PreconditionError(f"unknown range keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = dataclasses.asdict(self)
        return {k: [list(iv) for iv in v] if k == "rx_deg" else (list(v) if isinstance(v, tuple) else v)
                for k, v in d.items()}


@dataclass(frozen=True, eq=False)
class Sample:
    id: int
    geom: AcquisitionGeometry
    gt_pose: Pose
    gt_points2d: np.ndarray
    split: str = "train"
    augmented: bool = False

    def __post_init__(self):
        pts = check_points2d(self.gt_points2d, name="gt_points2d").copy()
        pts.setflags(write=False)
        object.__setattr__(self, "gt_points2d", pts)
        if self.split not in ("train", "val"):
            raise PreconditionError(f"split must be 'train' or 'val', got {self.split!r}")

    def intrinsics(self):
        return intrinsics_matrix(self.geom)


def _draw_union(rng, intervals):
    """Uniform draw over a union of intervals, each weighted by its length."""
    lengths = np.array([hi - lo for lo, hi in intervals])
    total = lengths.sum()
    if total == 0:
        return intervals[int(rng.integers(len(intervals)))][0]
    x = rng.uniform(0.0, total)
    for (lo, hi), length in zip(intervals, lengths):
        if x < length:
            return lo + x
        x -= length
    return intervals[-1][1]


def sample_pose_parameters(rng, ranges=None):
    """Draw ``(rz, ry, rx)`` in degrees and ``(tx, ty, tz)`` in mm."""
    ranges = ranges or GenerationRanges()
    rng = check_random_state(rng)
    rz = rng.uniform(*ranges.rz_deg)
    ry = rng.uniform(*ranges.ry_deg)
    rx = _draw_union(rng, ranges.rx_deg)
    t = (rng.uniform(*ranges.tx_mm), rng.uniform(*ranges.ty_mm), rng.uniform(*ranges.tz_mm))
    return (rz, ry, rx), t


def sample_pose(rng, ranges=None):
    (rz, ry, rx), t = sample_pose_parameters(rng, ranges)
    return Pose.from_euler(rz, ry, rx, t)


def sample_geometry(rng, ranges=None):
    ranges = ranges or GenerationRanges()
    rng = check_random_state(rng)
    sid = rng.uniform(*ranges.sid_mm)
    fov = rng.uniform(*ranges.fov_diag_mm)
    offset = (0.0, 0.0)
    if ranges.principal_offset_jitter_mm > 0:
        j = ranges.principal_offset_jitter_mm
        offset = tuple(rng.uniform(-j, j, size=2))
    return AcquisitionGeometry(sid, fov, ranges.image_width_px, ranges.image_height_px, offset)


def sample_rng(seed, sample_id):
    return np.random.default_rng([int(seed), _SAMPLE_STREAM, int(sample_id)])


def _generate_one(sample_id, seed, ranges, control_points, max_attempts):
    rng = sample_rng(seed, sample_id)
    geom = sample_geometry(rng, ranges)
    k = intrinsics_matrix(geom)
    for attempt in range(1, max_attempts + 1):
        pose = sample_pose(rng, ranges)
        try:
            pts, _ = project_points(k, pose, control_points)
        except BehindSourceError:
            continue
        if inside_image(pts, geom.image_width_px, geom.image_height_px):
            return Sample(sample_id, geom, pose, pts), attempt
    return None, max_attempts


def split_counts(n):
    n_train = int(math.floor(TRAIN_FRACTION * n))
    return n_train, n - n_train


def generate_dataset(n, seed, ranges=None, model=None, max_attempts=10_000):
    """Generate ``n`` fully visible samples with an 80/20 train/val split.

    Poses whose control points leave the image are redrawn (geometry is kept).
    Raises :class:`GenerationError` if more than 99% of draws are rejected or a
    single sample exhausts ``max_attempts``.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise PreconditionError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    ranges = ranges or GenerationRanges()
    model = model or make_cube()
    work = partial(_generate_one, seed=seed, ranges=ranges,
                   control_points=np.array(model.control_points), max_attempts=max_attempts)
    results = parallel_map(work, range(n))

    attempts = sum(a for _, a in results)
    failed = [i for i, (s, _) in enumerate(results) if s is None]
    rejection_rate = 1.0 - (n - len(failed)) / attempts
    if failed or rejection_rate > MAX_REJECTION_RATE:
        raise GenerationError(
            f"rejection rate {rejection_rate:.2%} ({len(failed)} samples never fit the image); "
            "check the pose and FOV ranges"
        )
    logger.debug("generated %d samples, rejection rate %.2f%%", n, 100 * rejection_rate)

    n_train, _ = split_counts(n)
    order = np.random.default_rng([int(seed), _SPLIT_STREAM]).permutation(n)
    train_ids = set(order[:n_train].tolist())
    return [dataclasses.replace(s, split="train" if s.id in train_ids else "val")
            for s, _ in results]


def apply_similarity(points2d, scale, translation_px, centre):
    """Scale about ``centre`` and then translate, in pixel space."""
    pts = np.asarray(points2d, dtype=np.float64)
    centre = np.asarray(centre, dtype=np.float64)
    return (pts - centre) * scale + centre + np.asarray(translation_px, dtype=np.float64)


def augment(sample, rng, max_scale=0.4, max_translate=0.2):
    """Random 2D scale/translate of the labels; the result is flagged ``augmented``.

    Geometry and pose are untouched, so the augmented labels are deliberately
    no longer consistent with them.
    """
    rng = check_random_state(rng)
    w, h = sample.geom.image_size
    scale = rng.uniform(1.0 - max_scale, 1.0 + max_scale)
    shift = (rng.uniform(-max_translate, max_translate) * w,
             rng.uniform(-max_translate, max_translate) * h)
    pts = apply_similarity(sample.gt_points2d, scale, shift, (w / 2.0, h / 2.0))
    return dataclasses.replace(sample, gt_points2d=pts, augmented=True)


def is_consistent(sample, model=None, tol_px=1e-9):
    """True if the labels equal the projection of the model under the sample's pose."""
    model = model or make_cube()
    try:
        pts, _ = project_points(sample.intrinsics(), sample.gt_pose, model.control_points)
    except BehindSourceError:
        return False
    return bool(np.abs(pts - sample.gt_points2d).max() <= tol_px)


# --- JSON Lines format -----------------------------------------------------

def sample_to_record(sample):
    g = sample.geom
    q = sample.gt_pose.rotation
    t = sample.gt_pose.translation_mm
    return {
        "id": int(sample.id),
        "split": sample.split,
        "geom": {
            "sid_mm": g.sid_mm,
            "fov_diag_mm": g.fov_diag_mm,
            "image_w": g.image_width_px,
            "image_h": g.image_height_px,
            "x0_mm": g.principal_offset_mm[0],
            "y0_mm": g.principal_offset_mm[1],
        },
        "pose": {"qw": q[0], "qx": q[1], "qy": q[2], "qz": q[3],
                 "tx": t[0], "ty": t[1], "tz": t[2]},
        "points2d": sample.gt_points2d.tolist(),
        "augmented": bool(sample.augmented),
    }


def record_to_sample(rec):
    g, p = rec["geom"], rec["pose"]
    if not isinstance(rec["id"], int) or isinstance(rec["id"], bool):
        raise PreconditionError(f"id must be an integer, got {rec['id']!r}")
    if not isinstance(rec["augmented"], bool):
        raise PreconditionError("augmented must be a boolean")
    geom = AcquisitionGeometry(g["sid_mm"], g["fov_diag_mm"], g["image_w"], g["image_h"],
                               (g["x0_mm"], g["y0_mm"]))
    pose = Pose([p["qw"], p["qx"], p["qy"], p["qz"]], [p["tx"], p["ty"], p["tz"]])
    return Sample(rec["id"], geom, pose, np.array(rec["points2d"], dtype=np.float64),
                  rec["split"], rec["augmented"])


def save_dataset(samples, path):
    write_jsonl(path, (sample_to_record(s) for s in samples))


def load_dataset(path):
    samples, seen = [], set()
    for lineno, rec in read_jsonl(path, DataFormatError):
        try:
            sample = record_to_sample(rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad sample record: {exc!r}", line=lineno) from None
        if sample.id in seen:
            raise DataFormatError(f"duplicate sample id {sample.id}", line=lineno)
        seen.add(sample.id)
        samples.append(sample)
    return samples


def legacy_label_values(sample, class_id=0):
    """21 values: class id, 9 normalised (x, y) pairs, x-range, y-range."""
    w, h = sample.geom.image_size
    xy = sample.gt_points2d / np.array([w, h], dtype=np.float64)
    spans = xy.max(axis=0) - xy.min(axis=0)
    return [class_id, *xy.ravel().tolist(), float(spans[0]), float(spans[1])]


def export_legacy_labels(samples, out_dir, class_id=0):
    """Write one ``<id>.txt`` label file per sample; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in samples:
        values = legacy_label_values(s, class_id)
        text = " ".join([str(values[0])] + [f"{v:.6f}" for v in values[1:]]) + "\n"
        path = out_dir / f"{s.id:06d}.txt"
        atomic_write_text(path, text)
        paths.append(path)
    return paths
