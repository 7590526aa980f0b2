import numpy as np
import pytest

from conebeam_pose.cube import make_cube
from conebeam_pose.geometry import AcquisitionGeometry, Pose, intrinsics_matrix


@pytest.fixture
def cube():
    return make_cube(30.0)


@pytest.fixture
def geom():
    return AcquisitionGeometry(sid_mm=1100.0, fov_diag_mm=297.0)


@pytest.fixture
def k(geom):
    return intrinsics_matrix(geom)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def axis_pose():
    return Pose([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 700.0])


_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    passed = call.excinfo is None
    _ACCEPTANCE.append((marker.args[0], marker.args[1], "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, text, status in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{status}  AC{cid}: {text}")
