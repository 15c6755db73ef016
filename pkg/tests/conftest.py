import numpy as np
import pytest

from keyposes.cluster import ClusterModel, LabeledKeypose
from keyposes.core import MotionSequence
from keyposes.extract import Keypose


def make_seq(x, J=1):
    """Sequence whose joints all move along x with the given values."""
    x = np.asarray(x, dtype=np.float64)
    frames = np.zeros((len(x), J, 3))
    frames[:, :, 0] = x[:, None]
    return MotionSequence(frames)


def labeled(labels, durations, model):
    """Labeled track whose keypose values sit exactly on their centers."""
    out = []
    frame = 1
    for i, (l, d) in enumerate(zip(labels, durations)):
        if i:
            frame += d
        out.append(LabeledKeypose(Keypose(frame, model.centers[l].copy()), int(l), 0 if i == 0 else int(d)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line_model():
    """Six single-joint centers spread along x with small y offsets."""
    centers = np.zeros((6, 1, 3))
    centers[:, 0, 0] = np.arange(6) * 100.0
    centers[:, 0, 1] = [0, 30, -20, 10, -40, 25]
    return ClusterModel(centers)


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _criteria.get(n, (title, True))
    _criteria[n] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
