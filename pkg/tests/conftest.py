import numpy as np
import pytest
from hypothesis import settings

from lattice_qe.bath import LatticeSpec

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def spec():
    """Unit-hopping lattice; N matters only for finite-lattice checks."""
    return LatticeSpec(64, 1.0)


def brute_force_green(z, n=(0, 0), N=2048, J=1.0):
    """Finite-lattice ``G_n(z)`` by explicit momentum sum (independent oracle)."""
    k = 2 * np.pi * np.arange(N) / N
    cx = np.cos(k)
    w = -2 * J * (cx[:, None] + cx[None, :])
    phase = np.exp(1j * (k[:, None] * n[0] + k[None, :] * n[1]))
    return complex(np.mean(phase / (z - w)))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
