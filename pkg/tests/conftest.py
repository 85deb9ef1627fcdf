import os

os.environ.setdefault('RISK_ENV', 'testing')

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from cli import configure_logging  # noqa: E402
from models import Dataset, PenalizedModel  # noqa: E402
from services.datagen import SyntheticSpec, generate  # noqa: E402
from services.families import FamilyKind, ScalarFamily  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the acceptance-scale tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: acceptance-scale test, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_logging():
    configure_logging(level='WARNING', json_logs=False)


@pytest.fixture
def squared():
    return ScalarFamily(FamilyKind.SQUARED)


@pytest.fixture
def ridge():
    return ScalarFamily(FamilyKind.RIDGE)


@pytest.fixture
def pseudo_huber():
    return ScalarFamily(FamilyKind.PSEUDO_HUBER, mu=1.0)


@pytest.fixture
def ridge_model(squared, ridge):
    return PenalizedModel(squared, ridge, 1.0)


@pytest.fixture
def huber_model(pseudo_huber, ridge):
    return PenalizedModel(pseudo_huber, ridge, 1.0)


@pytest.fixture
def small_data():
    """n=60, p=30 Gaussian design"""
    data, _, _ = generate(SyntheticSpec(n=60, p=30, seed=3))
    return data


@pytest.fixture
def tiny_data():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((12, 5)) / np.sqrt(12)
    y = X @ np.arange(1.0, 6.0) + 0.5 * rng.standard_normal(12)
    return Dataset(X, y)
