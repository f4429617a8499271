import sys

import numpy as np
import pytest

from asyncvo.geometry import CameraIntrinsics, Pose, exp_so3


@pytest.fixture
def intr():
    return CameraIntrinsics(200.0, 200.0, 120.0, 90.0, 240, 180)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, pos_scale=1.0, rot_scale=0.5) -> Pose:
    return Pose(rng.normal(0, pos_scale, 3), exp_so3(rng.normal(0, rot_scale, 3)))


def point_in_front(rng, pose: Pose, depth=(1.0, 5.0), spread=0.4) -> np.ndarray:
    z = rng.uniform(*depth)
    xc = np.array([rng.uniform(-spread, spread) * z, rng.uniform(-spread, spread) * z, z])
    return pose.p + pose.R @ xc


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
