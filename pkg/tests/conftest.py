import pytest

from rdpattern.kinetics import FullParams, ReducedParams

FIG = dict(m1=1.44, m2=2.0, k=0.01, mu3=4.1, D=1.0)
COEX = dict(m1=1.2, m2=2.0, k=0.01, mu3=4.1, D=1.0)
# full parameters whose reduction is COEX (beta_eff = 1, scaling c = 1)
FULL = dict(nu1=1.0, nu2=1.0, nu3=4.1, alpha=1.0, beta=2.0, gamma=1.0, theta1=1.2, theta2=2.0, kappa=0.01)


@pytest.fixture
def fig_params():
    return ReducedParams(**FIG)


@pytest.fixture
def coex():
    return ReducedParams(**COEX)


@pytest.fixture
def full_params():
    return FullParams(**FULL, delta=1.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        terminalreporter.write_line(lines[num])
