import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from featbench.synthetic import SyntheticShapeSpec, generate_synthetic_pair

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_pair():
    return generate_synthetic_pair(SyntheticShapeSpec(n_points=1500, seed=3, pose_seed=4))


@pytest.fixture(scope="session")
def default_pair():
    return generate_synthetic_pair(SyntheticShapeSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
