import os
import sys

import pytest

# Ensure project root is on sys.path so tests can import the bpve package
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

os.environ.setdefault('BPVE_ENV', 'testing')

from bpve.core.environment import EnvironmentSpec, ImmigrationAtom, ImmigrationFamily, OffspringFamily  # noqa: E402
from bpve.schemas import ScenarioConfig  # noqa: E402
from bpve.sim.limit import LimitSpec  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size scenario tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo runs at full scenario size")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def lf_spec():
    """Linear-fractional environment with nu = 2 and no immigration."""
    return EnvironmentSpec(offspring_family=OffspringFamily.LINEAR_FRACTIONAL, alpha=1.0, nu=2.0)


@pytest.fixture
def bernoulli_spec():
    """Bernoulli environment (nu = 0)."""
    return EnvironmentSpec(offspring_family=OffspringFamily.BERNOULLI, alpha=1.0, nu=0.0)


@pytest.fixture
def immigration_spec():
    """nu = 2 with one-at-a-time immigration, c_1 = 1."""
    return EnvironmentSpec(
        offspring_family=OffspringFamily.LINEAR_FRACTIONAL,
        alpha=1.0,
        nu=2.0,
        immigration_family=ImmigrationFamily.CATEGORICAL_SCALED,
        immigration_support=(ImmigrationAtom(value=1, weight=1.0),),
    )


@pytest.fixture
def limit_spec():
    """Limit processes for nu = 2 without immigration."""
    return LimitSpec(nu=2.0)


@pytest.fixture
def fast_scenario_data():
    """Scenario dict sized for unit tests: small n, few replicates, loose MC budgets."""
    return {
        'name': 'fast',
        'environment': {'family': 'linear_fractional', 'alpha': 1.0, 'nu': 2.0, 'immigration': {1: 1.0}},
        'limit': {'eps': 0.5, 'z_replicates': 4000, 'w_times': [0.5, 1.0], 'kernel_cap': 40},
        'grid': {'times': [0.5, 1.0, 2.0], 'n_values': [50, 200, 1000], 'n_mc': 100, 'truncation': 64,
                 'diagnostics_horizon': 10000},
        'mc': {'replicates': 2000, 'seed': 7, 'workers': 1},
        'tolerances': {'mc': 0.5, 'immigration': 0.5, 'yaglom': 0.1, 'survival': 0.2, 'mean': 0.2,
                       'simulator': 0.5},
    }


@pytest.fixture
def fast_config(fast_scenario_data):
    return ScenarioConfig(**fast_scenario_data)
