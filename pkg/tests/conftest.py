import pytest

from schoolri.equilibrium import solve
from schoolri.model import Capacities, MarketParams, Mechanism


@pytest.fixture(scope="session")
def caps():
    return Capacities.equal()


@pytest.fixture(scope="session")
def base_params(caps):
    return MarketParams(0.6, 0.05, caps)


@pytest.fixture(scope="session")
def eq_pair(base_params):
    """Boston and DA equilibria at v = 0.6, mu = 0.05, equal capacities."""
    return solve(Mechanism.BOSTON, base_params), solve(Mechanism.DA, base_params)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
