import numpy as np
import pytest

from sigtree.emd import cost_matrix
from sigtree.palette import default_palette
from sigtree.signature import encode

ACCEPTANCE_RESULTS = []
ACCEPTANCE_NOTES = {}


def note(number, text):
    """Attach measured values to an acceptance criterion's summary line."""
    ACCEPTANCE_NOTES[number] = text


@pytest.fixture(scope="session")
def palette():
    return default_palette()


@pytest.fixture(scope="session")
def cost(palette):
    return cost_matrix(palette)


def random_histogram(rng, n=16, max_colors=4):
    k = int(rng.integers(1, max_colors + 1))
    h = np.zeros(n)
    h[rng.choice(n, size=k, replace=False)] = rng.dirichlet(np.ones(k))
    return h


def random_signatures(count, seed, m=8, n=16):
    rng = np.random.default_rng(seed)
    return [encode(random_histogram(rng, n), m) for _ in range(count)]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        ACCEPTANCE_RESULTS.append((marker.args[0], marker.args[1], report.outcome))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if outcome == "passed" else "FAIL"
        detail = ACCEPTANCE_NOTES.get(number)
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f": {detail}" if detail else ""))
