import math

import pytest

from diffrecon.geometry import DetectorSpec, Geometry2DFan, Geometry2DParallel, Geometry3DCone, VolumeSpec


@pytest.fixture
def parallel_small():
    return Geometry2DParallel(VolumeSpec((16, 16), (1.0, 1.0)), DetectorSpec((24,), (1.0,)), 12, math.pi)


@pytest.fixture
def fan_small():
    return Geometry2DFan(
        VolumeSpec((16, 16), (1.0, 1.0)), DetectorSpec((32,), (1.0,)), 10, 2 * math.pi, sid=60.0, sdd=100.0
    )


@pytest.fixture
def cone_small():
    return Geometry3DCone(
        VolumeSpec((8, 12, 12), (1.0, 1.0, 1.0)), DetectorSpec((12, 20), (1.5, 1.5)), 6, 2 * math.pi, 60.0, 100.0
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
