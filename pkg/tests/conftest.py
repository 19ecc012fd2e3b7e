import numpy as np
import pytest

from mnse.dataset import SynthConfig, generate_synthetic
from mnse.optimizer import HyperParams, train

SEED7 = SynthConfig(num_classes=3, num_modalities=2, per_class=20, seed=7)
TIGHT = SynthConfig(num_classes=3, num_modalities=2, per_class=20, noise=0.01, seed=7)


@pytest.fixture(scope="session")
def seed7():
    return generate_synthetic(SEED7)


@pytest.fixture(scope="session")
def seed7_model(seed7):
    return train(seed7, HyperParams())


@pytest.fixture(scope="session")
def tight():
    return generate_synthetic(TIGHT)


@pytest.fixture(scope="session")
def tight_model(tight):
    return train(tight, HyperParams(mu2=1.0, mu3=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
