import numpy as np
import pytest

from plrsoh.featurize import compute_bounds, featurize_many
from plrsoh.synthetic import SyntheticSpec, generate_synthetic

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = _ACCEPTANCE.get(report.nodeid)
        if marker is not None:
            outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
            marker["outcome"] = outcome


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _ACCEPTANCE[item.nodeid] = {"number": m.args[0], "title": m.args[1], "outcome": "NOT RUN"}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for rec in sorted(_ACCEPTANCE.values(), key=lambda r: r["number"]):
        terminalreporter.write_line(f"criterion {rec['number']:>2}: {rec['outcome']:<7} {rec['title']}")


@pytest.fixture(scope="session")
def small_fleet():
    cells, truth = generate_synthetic(SyntheticSpec(n_cells=30, rng_seed=11))
    return cells, truth


@pytest.fixture(scope="session")
def small_table(small_fleet):
    cells, _ = small_fleet
    bounds = compute_bounds(cells)
    return featurize_many(cells, bounds), bounds


@pytest.fixture(scope="session")
def noiseless_fleet():
    return generate_synthetic(SyntheticSpec(n_cells=30, rng_seed=5, noise_std=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
