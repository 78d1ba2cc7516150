import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from mview.geometry import CameraCalibration, GroundGrid
from mview.synth import WILDTRACK_GRID, ring_rig

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for marker_args in getattr(report, "acceptance", []):
        _acceptance_results.append((marker_args, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    rep.acceptance = [marker.args] if marker else []


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_acceptance_results):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


def random_camera(rng, camera_id=0, image_size=(1920, 1080), min_height=3.0):
    """Random pinhole camera whose center lies well above every plane in [0, 2] m."""
    w, h = image_size
    f = rng.uniform(500, 2000)
    K = np.array(
        [
            [f, rng.uniform(-2, 2), w / 2 + rng.uniform(-40, 40)],
            [0, f * rng.uniform(0.95, 1.05), h / 2 + rng.uniform(-40, 40)],
            [0, 0, 1],
        ]
    )
    R = Rotation.random(random_state=rng).as_matrix()
    center = np.array([rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(min_height, 12.0)])
    return CameraCalibration(camera_id, K, R, -R @ center, image_size)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def wildtrack_grid():
    return GroundGrid(**WILDTRACK_GRID)


@pytest.fixture(scope="session")
def wildtrack_rig(wildtrack_grid):
    """Seven cameras around the 12 x 36 m AOI at 1920 x 1080."""
    return ring_rig(wildtrack_grid, 7)


@pytest.fixture
def side_camera():
    """Horizontal camera 1.5 m above the ground looking along +Y."""
    f = 200.0
    K = np.array([[f, 0, 320.0], [0, f, 240.0], [0, 0, 1]])
    R = np.array([[1.0, 0, 0], [0, 0, -1.0], [0, 1.0, 0]])
    center = np.array([0.0, 0.0, 1.5])
    return CameraCalibration(0, K, R, -R @ center, (640, 480))
