import os

import pytest
from hypothesis import HealthCheck, settings

import netbuild
from compoundrisk.config import DATA_DIR

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = DATA_DIR / "fixtures"


@pytest.fixture
def seven():
    return netbuild.seven_node()


@pytest.fixture
def ten():
    return netbuild.ten_node()


@pytest.fixture(scope="session")
def fixture_network():
    from compoundrisk.grid import load_network
    return load_network(FIXTURES / "network.json")


@pytest.fixture(scope="session")
def historical_catalog():
    from compoundrisk.catalog import load_catalog
    return load_catalog(FIXTURES / "catalog_historical.jsonl")


@pytest.fixture(scope="session")
def study_grid():
    from compoundrisk.windfield import load_study_grid
    return load_study_grid(FIXTURES / "study_grid.csv")


@pytest.fixture(scope="session")
def small_model(fixture_network, historical_catalog, study_grid):
    """Calibrated historical model on the bundled fixtures."""
    from compoundrisk.damage import load_fragility
    from compoundrisk.heat import load_climatology
    from compoundrisk.recovery import load_resources
    from compoundrisk.risk import RiskModel
    return RiskModel(fixture_network, historical_catalog, load_climatology(FIXTURES / "climatology_historical.json"),
                     load_fragility(DATA_DIR / "fragility.json"), load_resources(DATA_DIR / "resources.json"),
                     study_grid[1])


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
