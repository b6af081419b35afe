import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gcnforecast import PoseSequence, SkeletonSpec
from gcnforecast.core import MotionSample

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_sequence(rng, n=30, j=5, d=3, vis_rate=None, **kw):
    coords = rng.normal(size=(n, j, d))
    vis = np.ones((n, j), dtype=np.int8)
    if vis_rate is not None:
        vis = (rng.random((n, j)) < vis_rate).astype(np.int8)
    return PoseSequence(coords, vis, **kw)


def random_sample(rng, t=16, tau=14, j=5, d=3, scale=1.0):
    full = rng.normal(size=(t + tau, j, d)) * scale
    return MotionSample(PoseSequence.from_coords(full[:t]), PoseSequence.from_coords(full[t:]))


def chain_skeleton(j, swap=None, bounds=None):
    return SkeletonSpec(tuple(f"j{i}" for i in range(j)), 0, swap, bounds)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """``criterion(n, name, ok, detail)`` logs one PASS/FAIL line, then asserts ``ok``."""

    def record(n, name, ok, detail=""):
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
