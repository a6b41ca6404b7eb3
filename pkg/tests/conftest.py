import numpy as np
import pytest

from pylayersep.classes.lightfield import LightField


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the long end-to-end tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long end-to-end run, skipped unless --runslow is given')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_lightfield(rng):
    """3×3 grid of independent random 16×16 gray views"""
    return LightField(rng.uniform(0.0, 1.0, size=(9, 16, 16, 1)), 3)
