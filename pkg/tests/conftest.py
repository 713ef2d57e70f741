import numpy as np
import pytest

from singular_limits import systems


@pytest.fixture(scope="session")
def linear2():
    return systems.linear_system()


@pytest.fixture(scope="session")
def linear_wide():
    """Separation 0.2 and speed cap 0.7, the constants used for weight checks."""
    return systems.linear_system(eigenvalues=(0.5, 0.7))


@pytest.fixture(scope="session")
def scalar_linear():
    return systems.linear_system(eigenvalues=(0.5,), box=((-1.0,), (1.0,)))


@pytest.fixture(scope="session")
def burgers():
    return systems.shifted_burgers()


@pytest.fixture(scope="session")
def chrom():
    return systems.chromatography()


@pytest.fixture(scope="session")
def builtins(linear2, burgers, chrom):
    return {"linear": linear2, "burgers-shifted": burgers, "chromatography": chrom}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
