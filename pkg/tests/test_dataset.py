import dataclasses
import hashlib
import json

import numpy as np
import pytest

from conebeam_pose.dataset import (
    GenerationRanges,
    Sample,
    apply_similarity,
    augment,
    export_legacy_labels,
    generate_dataset,
    is_consistent,
    legacy_label_values,
    load_dataset,
    sample_geometry,
    sample_pose,
    sample_pose_parameters,
    save_dataset,
    split_counts,
)
from conebeam_pose.exceptions import DataFormatError, GenerationError, PreconditionError
from conebeam_pose.geometry import intrinsics_matrix, project_control_points


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(50, seed=11)


def test_default_ranges():
    r = GenerationRanges()
    assert r.rz_deg == (0.0, 360.0) and r.ry_deg == (0.0, 360.0)
    assert r.rx_deg == ((-45.0, 45.0), (135.0, 225.0))
    assert r.tx_mm == (-40.0, 40.0) and r.ty_mm == (-40.0, 40.0)
    assert r.tz_mm == (660.0, 740.0)
    assert r.sid_mm == (1100.0, 1230.0)
    assert r.fov_diag_mm == (156.0, 297.0)


@pytest.mark.parametrize("override", [
    {"tz_mm": (740.0, 660.0)},
    {"rx_deg": ()},
    {"sid_mm": (-5.0, 10.0)},
])
def test_invalid_ranges(override):
    with pytest.raises(PreconditionError):
        GenerationRanges(**override)


def test_ranges_dict_round_trip():
    r = GenerationRanges(tx_mm=(-10, 10), principal_offset_jitter_mm=0.5)
    assert GenerationRanges.from_dict(json.loads(json.dumps(r.to_dict()))) == r
    with pytest.raises(PreconditionError):
        GenerationRanges.from_dict({"bogus": 1})


def test_pose_seed_determinism():
    a = sample_pose(np.random.default_rng(42))
    b = sample_pose(np.random.default_rng(42))
    assert a == b


def test_geometry_seed_determinism():
    assert sample_geometry(np.random.default_rng(5)) == sample_geometry(np.random.default_rng(5))


def test_pose_parameter_bounds():
    rng = np.random.default_rng(3)
    draws = np.array([np.r_[a, t] for a, t in (sample_pose_parameters(rng) for _ in range(20_000))])
    rz, ry, rx, tx, ty, tz = draws.T
    assert rz.min() >= 0 and rz.max() < 360
    assert ry.min() >= 0 and ry.max() < 360
    assert np.all(((rx >= -45) & (rx <= 45)) | ((rx >= 135) & (rx <= 225)))
    assert np.count_nonzero((rx > 45) & (rx < 135)) == 0
    assert abs(tx).max() <= 40 and abs(ty).max() <= 40
    assert tz.min() >= 660 and tz.max() <= 740
    # both rx intervals have equal length and so equal mass
    assert np.mean(rx < 90) == pytest.approx(0.5, abs=0.02)


def test_pose_matches_parameters():
    (rz, ry, rx), t = sample_pose_parameters(np.random.default_rng(9))
    p = sample_pose(np.random.default_rng(9))
    from conebeam_pose.geometry import Pose
    assert p == Pose.from_euler(rz, ry, rx, t)


def test_generate_sizes_and_split():
    samples = generate_dataset(100, seed=1)
    assert len(samples) == 100
    assert sum(s.split == "train" for s in samples) == 80
    assert [s.id for s in samples] == list(range(100))


def test_split_counts_2042():
    assert split_counts(2042) == (1633, 409)


def test_every_sample_consistent(small_dataset, cube):
    for s in small_dataset:
        assert is_consistent(s, cube)
        k = intrinsics_matrix(s.geom)
        np.testing.assert_allclose(project_control_points(k, s.gt_pose, cube.control_points),
                                   s.gt_points2d, atol=1e-9)
        assert np.all((s.gt_points2d >= 0) & (s.gt_points2d <= 960))


def test_sample_content_independent_of_n():
    a = generate_dataset(30, seed=4)
    b = generate_dataset(10, seed=4)
    for x, y in zip(a, b):
        assert x.gt_pose == y.gt_pose and x.geom == y.geom


def test_generation_error_for_impossible_ranges():
    ranges = GenerationRanges(tx_mm=(400.0, 400.0))
    with pytest.raises(GenerationError):
        generate_dataset(2, seed=0, ranges=ranges, max_attempts=50)


def test_bad_n():
    with pytest.raises(PreconditionError):
        generate_dataset(0, seed=0)


def test_save_load_round_trip(tmp_path, small_dataset):
    path = tmp_path / "d.jsonl"
    save_dataset(small_dataset, path)
    loaded = load_dataset(path)
    for a, b in zip(small_dataset, loaded):
        assert a.id == b.id and a.split == b.split and a.geom == b.geom
        assert a.gt_pose == b.gt_pose
        assert a.gt_points2d.tobytes() == b.gt_points2d.tobytes()
    again = tmp_path / "again.jsonl"
    save_dataset(loaded, again)
    assert path.read_bytes() == again.read_bytes()


def test_jsonl_fields(tmp_path, small_dataset):
    path = tmp_path / "d.jsonl"
    save_dataset(small_dataset[:1], path)
    rec = json.loads(path.read_text().splitlines()[0])
    assert list(rec) == ["id", "split", "geom", "pose", "points2d", "augmented"]
    assert list(rec["geom"]) == ["sid_mm", "fov_diag_mm", "image_w", "image_h", "x0_mm", "y0_mm"]
    assert list(rec["pose"]) == ["qw", "qx", "qy", "qz", "tx", "ty", "tz"]
    assert len(rec["points2d"]) == 9


def test_generation_bytes_deterministic(tmp_path):
    digests = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.jsonl"
        save_dataset(generate_dataset(40, seed=7), path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_parallel_generation_identical(monkeypatch):
    serial = generate_dataset(12, seed=5)
    monkeypatch.setenv("CONEBEAM_POSE_THREADS", "2")
    parallel = generate_dataset(12, seed=5)
    for a, b in zip(serial, parallel):
        assert a.gt_points2d.tobytes() == b.gt_points2d.tobytes() and a.split == b.split


def test_load_errors(tmp_path, small_dataset):
    path = tmp_path / "d.jsonl"
    save_dataset(small_dataset[:3], path)
    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines[:2] + ["{not json"]) + "\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_dataset(bad)
    dup = tmp_path / "dup.jsonl"
    dup.write_text("\n".join([lines[0], lines[0]]) + "\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        load_dataset(dup)
    missing = tmp_path / "missing.jsonl"
    rec = json.loads(lines[0])
    del rec["pose"]
    missing.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DataFormatError, match="line 1"):
        load_dataset(missing)


def test_similarity_identity(small_dataset):
    s = small_dataset[0]
    np.testing.assert_allclose(apply_similarity(s.gt_points2d, 1.0, (0, 0), (480, 480)),
                               s.gt_points2d, rtol=0, atol=1e-12)


def test_similarity_translation(small_dataset):
    s = small_dataset[0]
    moved = apply_similarity(s.gt_points2d, 1.0, (0.2 * 960, 0), (480, 480))
    np.testing.assert_allclose(moved[:, 0] - s.gt_points2d[:, 0], 192.0, atol=1e-12)
    np.testing.assert_allclose(moved[:, 1], s.gt_points2d[:, 1], rtol=0, atol=1e-12)


def test_similarity_scale_about_centre():
    pts = np.array([[480.0, 480.0], [580.0, 380.0]])
    out = apply_similarity(pts, 1.4, (0, 0), (480, 480))
    np.testing.assert_allclose(out, [[480, 480], [620, 340]])


def test_augment_flags_and_breaks_consistency(small_dataset, cube):
    s = small_dataset[0]
    a = augment(s, np.random.default_rng(0))
    assert a.augmented and not s.augmented
    assert a.gt_pose == s.gt_pose and a.geom == s.geom
    assert not is_consistent(a, cube)


def test_augment_bounds(small_dataset):
    s = small_dataset[0]
    rng = np.random.default_rng(1)
    c = np.array([480.0, 480.0])
    for _ in range(200):
        a = augment(s, rng)
        # recover scale from the spread of the points around their mean
        scale = np.linalg.norm(a.gt_points2d - a.gt_points2d.mean(0)) / np.linalg.norm(
            s.gt_points2d - s.gt_points2d.mean(0))
        assert 0.6 - 1e-12 <= scale <= 1.4 + 1e-12
        shift = a.gt_points2d[0] - ((s.gt_points2d[0] - c) * scale + c)
        assert np.all(np.abs(shift) <= 0.2 * 960 + 1e-9)


def test_legacy_labels(tmp_path, small_dataset):
    s = small_dataset[0]
    values = legacy_label_values(s)
    assert len(values) == 21
    assert values[0] == 0
    xy = np.array(values[1:19]).reshape(9, 2)
    np.testing.assert_allclose(xy * 960, s.gt_points2d)
    assert values[19] == pytest.approx(xy[:, 0].max() - xy[:, 0].min())
    assert values[20] == pytest.approx(xy[:, 1].max() - xy[:, 1].min())
    paths = export_legacy_labels(small_dataset[:3], tmp_path / "labels")
    assert [p.name for p in paths] == ["000000.txt", "000001.txt", "000002.txt"]
    assert len(paths[0].read_text().split()) == 21


def test_sample_validation(small_dataset):
    s = small_dataset[0]
    with pytest.raises(PreconditionError):
        dataclasses.replace(s, split="test")
    with pytest.raises(PreconditionError):
        Sample(0, s.geom, s.gt_pose, s.gt_points2d[:8])
