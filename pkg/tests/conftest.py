import numpy as np
import pytest
from hypothesis import settings

from hitchin import reps

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_sl2(rng, hyperbolic=True):
    while True:
        M = rng.normal(size=(2, 2))
        det = np.linalg.det(M)
        if det <= 0:
            M[:, 0] *= -1
            det = -det
        M = M / np.sqrt(det)
        if not hyperbolic or abs(np.trace(M)) > 2.1:
            return M


def random_real_split(rng, d, spread=3.0):
    V = rng.normal(size=(d, d))
    # moduli spaced evenly in log scale, random signs
    vals = rng.choice([-1.0, 1.0], size=d) * np.exp(np.linspace(np.log(spread), -np.log(spread), d) + rng.uniform(-0.1, 0.1, d))
    return V @ np.diag(vals) @ np.linalg.inv(V)


@pytest.fixture
def torus3():
    return reps.lift_rep(reps.punctured_torus_preset(), 3)


@pytest.fixture
def schottky3():
    return reps.lift_rep(reps.schottky_preset(), 3)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
