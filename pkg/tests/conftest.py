import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bayeslingam.datagen import SyntheticConfig, generate_synthetic
from bayeslingam.graph import Dag

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def edge_case():
    """Strongly non-Gaussian x1 -> x2 data."""
    return generate_synthetic(SyntheticConfig(n=2, q=2.5, N=500, seed=3, dag=Dag.from_text("2;1->2")))


@pytest.fixture(scope="session")
def chain3_case():
    return generate_synthetic(SyntheticConfig(n=3, q=2.0, N=300, seed=11, dag=Dag.from_text("3;1->2;2->3"),
                                              min_abs_coef=0.5))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(pytestconfig):
    """Record one pass/fail line per acceptance criterion."""
    lines = pytestconfig.stash.setdefault(_ACCEPTANCE, [])

    def report(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
