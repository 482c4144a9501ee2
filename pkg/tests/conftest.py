import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from taep.synth import SynthConfig, generate

settings.register_profile(
    "taep",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("taep")


@pytest.fixture(scope="session")
def small_task():
    return generate(SynthConfig(seed=3, n_train=30, n_test=40, L_seen=4, L_unseen=3, m=6, d=8))


@pytest.fixture(scope="session")
def monotone_task():
    # the n=50, d=20, L^s=6, L^u=4, m=12 fixture used by the dual checks
    return generate(SynthConfig(seed=0, n_train=50, n_test=10, L_seen=6, L_unseen=4, m=12, d=20))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
