import pytest
import sympy as sp

from magweyl.symcore import phase_space


@pytest.fixture(scope="session")
def S2():
    return phase_space(2)


@pytest.fixture(scope="session")
def S3():
    return phase_space(3)


@pytest.fixture(scope="session")
def b():
    return sp.Symbol("b", real=True)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
