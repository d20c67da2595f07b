import numpy as np
import pytest

from cohprop.state import CoherentSuperposition


def random_state(rng, m, N, amax=2.0):
    """Random coherent superposition with |alpha| <= amax per mode."""
    r = amax * np.sqrt(rng.random((N, m)))
    amps = r * np.exp(2j * np.pi * rng.random((N, m)))
    coeffs = rng.normal(size=N) + 1j * rng.normal(size=N)
    return CoherentSuperposition(coeffs, amps)


def random_hermitian(rng, m, scale=1.0):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return scale * 0.5 * (X + X.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
