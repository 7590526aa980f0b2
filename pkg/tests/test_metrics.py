import json
import math

import jsonschema
import numpy as np
import pytest

from conebeam_pose.dataset import generate_dataset
from conebeam_pose.exceptions import MissingPredictionError
from conebeam_pose.geometry import Pose
from conebeam_pose.metrics import (
    REPORT_SCHEMA,
    EvalConfig,
    PoseError,
    add_correct,
    add_error_mm,
    calibrate_noise_sigma,
    evaluate,
    five_cm_five_deg,
    format_table,
    pose_error,
    reprojection_correct,
    reprojection_error_px,
)
from conebeam_pose.predictor import Prediction, oracle_predict_dataset

from oracles import naive_add, naive_angle_deg, naive_mean_pixel_error, scipy_matrix


@pytest.fixture(scope="module")
def samples():
    return generate_dataset(150, seed=21)


def test_reprojection_zero():
    pts = np.random.default_rng(0).uniform(0, 960, (9, 2))
    assert reprojection_error_px(pts, pts) == 0.0


def test_reprojection_345():
    pts = np.random.default_rng(0).uniform(0, 960, (9, 2))
    assert reprojection_error_px(pts + [3.0, 4.0], pts) == pytest.approx(5.0, abs=1e-12)


def test_reprojection_matches_loop(rng):
    for _ in range(100):
        a, b = rng.uniform(0, 960, (9, 2)), rng.uniform(0, 960, (9, 2))
        assert abs(reprojection_error_px(a, b) - naive_mean_pixel_error(a.tolist(), b.tolist())) \
            < 1e-12


@pytest.mark.parametrize("err,expected", [(4.99, True), (5.0, False), (0.0, True), (7, False)])
def test_reprojection_threshold_strict(err, expected):
    assert reprojection_correct(err) is expected


def test_pose_error_identity(rng):
    p = Pose(rng.standard_normal(4), [1, 2, 700])
    assert pose_error(p, p) == PoseError(0.0, 0.0)


def test_pose_error_z_shift():
    a = Pose.from_euler(10, 20, 30, [0, 0, 700])
    b = Pose.from_euler(10, 20, 30, [0, 0, 710])
    e = pose_error(a, b)
    assert e.angle_deg == pytest.approx(0.0, abs=1e-7)
    assert e.translation_mm == pytest.approx(10.0, abs=1e-12)


def test_pose_error_hand_computed_quaternions():
    # rotation by 30 deg about z composed onto an arbitrary base: relative angle must be 30
    half = math.radians(15)
    qz = np.array([math.cos(half), 0, 0, math.sin(half)])
    base = np.array([0.5, 0.5, 0.5, 0.5])
    w1, x1, y1, z1 = qz
    w2, x2, y2, z2 = base
    composed = [w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2, w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2, w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2]
    e = pose_error(Pose(composed, [0, 0, 0]), Pose(base, [0, 0, 0]))
    assert e.angle_deg == pytest.approx(30.0, abs=1e-9)


@pytest.mark.parametrize("err,expected", [
    (PoseError(2.2, 17.7), True),
    (PoseError(5.0, 10.0), False),
    (PoseError(4.9, 49.9), True),
    (PoseError(1.0, 50.0), False),
])
def test_five_cm_five_deg(err, expected):
    assert five_cm_five_deg(err) is expected


def test_add_identity(cube, rng):
    p = Pose(rng.standard_normal(4), [3, 4, 700])
    for frac in (1e-6, 0.1, 0.5, 1.0):
        assert add_correct(p, p, cube, frac)


def test_add_translation_at_threshold_is_strict(cube):
    gt = Pose.from_euler(0, 0, 0, [0, 0, 700])
    d = 0.5 * cube.diameter_mm
    assert not add_correct(Pose.from_euler(0, 0, 0, [d, 0, 700]), gt, cube, 0.5)
    assert add_correct(Pose.from_euler(0, 0, 0, [d * (1 - 1e-9), 0, 700]), gt, cube, 0.5)


def test_add_matches_loop(cube, rng):
    pts = cube.surface_points.tolist()
    for _ in range(200):
        a = Pose(rng.standard_normal(4), rng.normal(0, 20, 3) + [0, 0, 700])
        b = Pose(rng.standard_normal(4), rng.normal(0, 20, 3) + [0, 0, 700])
        ref = naive_add(scipy_matrix(a.rotation), a.translation_mm, scipy_matrix(b.rotation),
                        b.translation_mm, pts)
        assert abs(add_error_mm(a, b, cube) - ref) < 1e-10


def test_sigma_zero_is_perfect(samples):
    report = evaluate(samples, oracle_predict_dataset(samples, 0.0, seed=1))
    assert report.n_failed == 0
    assert all(v == 1.0 for v in report.reproject_acc.values())
    assert all(v == 1.0 for v in report.add_acc.values())
    assert report.five_cm_five_deg_acc == 1.0
    assert max(r.angle_deg for r in report.results) <= 1e-5


def test_threshold_nesting_and_recount(samples):
    cfg = EvalConfig(thresholds_px=(5, 10, 15), add_fractions=(0.1, 0.5, 1.0))
    report = evaluate(samples, oracle_predict_dataset(samples, 8.0, seed=3), cfg)
    acc = report.reproject_acc
    assert acc["15"] >= acc["10"] >= acc["5"]
    assert report.add_acc["1"] >= report.add_acc["0.5"] >= report.add_acc["0.1"]
    n = len(samples)
    for i, t in enumerate(cfg.thresholds_px):
        count = 0
        for r in report.results:
            if r.px_error < t:
                count += 1
        assert acc[format(t, "g")] == count / n
    count = 0
    for r in report.results:
        if r.angle_deg < 5 and r.translation_mm < 50:
            count += 1
    assert report.five_cm_five_deg_acc == count / n


def test_reprojection_uses_solved_pose(samples, cube):
    preds = oracle_predict_dataset(samples[:10], 4.0, seed=2)
    report = evaluate(samples[:10], preds)
    from conebeam_pose.geometry import project_control_points
    for s, r in zip(samples[:10], report.results):
        reproj = project_control_points(s.intrinsics(), r.pose, cube.control_points)
        assert r.px_error == pytest.approx(reprojection_error_px(reproj, s.gt_points2d))


def test_sigma_sweep_monotone(samples):
    accs, angles = [], []
    for sigma in (0.0, 2.0, 5.0, 10.0, 20.0):
        r = evaluate(samples, oracle_predict_dataset(samples, sigma, seed=5))
        accs.append(r.five_cm_five_deg_acc)
        angles.append(r.mean_angle_deg[0])
    assert all(a >= b for a, b in zip(accs, accs[1:]))
    assert all(a <= b for a, b in zip(angles, angles[1:]))


def test_missing_predictions(samples):
    preds = oracle_predict_dataset(samples[:5], 0.0, seed=1)
    with pytest.raises(MissingPredictionError) as info:
        evaluate(samples[:7], preds)
    assert info.value.missing_ids == [5, 6]


def test_pnp_failure_counts_as_incorrect(samples):
    s = samples[0]
    collapsed = Prediction(s.id, np.full((9, 2), 480.0))
    report = evaluate([s], [collapsed])
    assert report.n_failed == 1
    assert report.five_cm_five_deg_acc == 0.0
    assert all(v == 0.0 for v in report.reproject_acc.values())
    assert report.mean_angle_deg is None


def test_deterministic_apart_from_throughput(samples):
    preds = oracle_predict_dataset(samples, 6.0, seed=8)
    a = evaluate(samples, preds).to_dict()
    b = evaluate(samples, preds).to_dict()
    a.pop("throughput_poses_per_sec")
    b.pop("throughput_poses_per_sec")
    assert json.dumps(a) == json.dumps(b)


def test_parallel_evaluate_matches_serial(samples, monkeypatch):
    preds = oracle_predict_dataset(samples[:20], 6.0, seed=8)
    serial = evaluate(samples[:20], preds).to_dict()
    monkeypatch.setenv("CONEBEAM_POSE_THREADS", "2")
    parallel = evaluate(samples[:20], preds).to_dict()
    for d in (serial, parallel):
        d.pop("throughput_poses_per_sec")
    assert serial == parallel


def test_report_schema_and_table(samples):
    report = evaluate(samples, oracle_predict_dataset(samples, 6.0, seed=8))
    jsonschema.validate(json.loads(report.to_json()), REPORT_SCHEMA)
    table = format_table(report)
    for label in ("2D Acc", "3D Acc", "Error", "5 pixels", "ADD (10%)", "3D Angle (deg.)",
                  "solver throughput", "5cm/5deg"):
        assert label in table


def test_calibrate_sigma(samples):
    sigma, report = calibrate_noise_sigma(samples[:60], 9.2, seed=4, tol_px=0.05)
    assert abs(report.mean_px_error[0] - 9.2) <= 0.05
    assert sigma > 0
