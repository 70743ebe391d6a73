import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from needlet_ustat import density as dn
from needlet_ustat import frame as fr
from needlet_ustat import manifold as mf

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("repo")

# lines recorded by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def circle():
    return mf.make_circle()


@pytest.fixture(scope="session")
def frame8(circle):
    return fr.build_frame(circle, 2.0, 8)


@pytest.fixture(scope="session")
def tiny_frame(circle):
    return fr.build_frame(circle, 2.0, 3)


@pytest.fixture(scope="session")
def uniform8(frame8):
    return dn.uniform_density(frame8)


@pytest.fixture(scope="session")
def besov8(frame8):
    # planted levels 1..6, two levels of headroom in the frame
    return dn.build_besov_density(frame8, s=1.0, r=2.0, amplitude=0.3, seed=11)


def fit(js, values):
    return float(np.polyfit(np.asarray(js, dtype=float), np.log(np.asarray(values, dtype=float)), 1)[0])


LOG2 = math.log(2.0)
