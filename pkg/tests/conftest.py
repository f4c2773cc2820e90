import pytest

from posefuse.skeleton import MISSING, NUM_JOINTS, Keypoint

ACCEPTANCE_LINES: list[str] = []


def make_pose(points, n=NUM_JOINTS):
    """Build a joint tuple from (x, y) pairs; None marks an invalid joint."""
    joints = [MISSING if p is None else Keypoint(float(p[0]), float(p[1]), 1.0, True) for p in points]
    joints += [MISSING] * (n - len(joints))
    return tuple(joints)


# A front-facing standing figure: head 30 px above the shoulder midpoint.
STANDING = [
    (100, 40), (120, 70), (80, 70), (125, 100), (75, 100), (128, 130), (72, 130),
    (112, 140), (88, 140), (113, 185), (87, 185), (114, 230), (86, 230),
]


@pytest.fixture
def standing():
    return make_pose(STANDING)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
