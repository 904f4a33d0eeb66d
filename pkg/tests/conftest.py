import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from quadro.model import TwoClassModel, make_class_model

settings.register_profile(
    "quadro", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("quadro")


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + 0.3 * np.eye(d))


def random_model(rng, d, kappa=(0.0, 0.0), pi=None, equal_cov=False):
    s0 = random_spd(rng, d)
    s1 = s0 if equal_cov else random_spd(rng, d)
    pi = rng.uniform(0.3, 0.7) if pi is None else pi
    return TwoClassModel(
        pi,
        make_class_model(rng.standard_normal(d), s0, kappa[0]),
        make_class_model(rng.standard_normal(d), s1, kappa[1]),
    )


def one_d_model(pi=0.5, mu0=0.0, mu1=-1.0, var0=1.0, var1=1.0, kappa=0.0):
    return TwoClassModel(
        pi,
        make_class_model([mu0], [[var0]], kappa),
        make_class_model([mu1], [[var1]], kappa),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
