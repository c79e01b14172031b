import numpy as np
import pytest
from hypothesis import strategies as st

from hyperpol.channel import channel_from_kraus
from hyperpol.pulsepol import SystemParams

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_density_matrix(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, dim, scale=1.0):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (g + g.conj().T) / 2


def random_channel(rng, n_kraus=3):
    """Random CPTP qubit channel from a Stinespring isometry."""
    g = rng.normal(size=(2 * n_kraus, 2)) + 1j * rng.normal(size=(2 * n_kraus, 2))
    q, _ = np.linalg.qr(g)
    return channel_from_kraus([q[2 * i:2 * i + 2, :] for i in range(n_kraus)])


# couplings in kHz over realistic ranges; Larmor kept well above the hyperfine terms
params_khz = st.tuples(
    st.floats(200.0, 1500.0),
    st.floats(-100.0, 100.0),
    st.floats(0.0, 80.0),
)


def params_from(t):
    return SystemParams.from_khz(*t)
