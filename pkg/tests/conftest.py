import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from invbal.instances import gen_matching_instance

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_matching():
    p = np.array([[0.6, 0.3], [0.2, 0.9], [0.5, 0.5]])
    contexts = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]] * 5, dtype=float)
    return gen_matching_instance(3, 2, [2, 3, 1], 20, p, contexts, rewards=[1.0, 2.0, 3.0])



_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
