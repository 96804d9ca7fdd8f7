import numpy as np
import pytest

from ionmagic.constants import TWO_PI
from ionmagic.crystal import TrapSpec

_ACCEPTANCE_LINES = []


def rel(a, b):
    """Relative deviation of ``a`` from ``b`` (vector norm for arrays)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.fixture
def acceptance():
    """Collects one PASS/FAIL line per acceptance criterion."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def chain(n, omega_z_hz=310e3, alpha=0.0097819, **kw):
    return TrapSpec(omega_z=TWO_PI * omega_z_hz, alpha_x=alpha, ions_per_chain=n, **kw)


def two_chains(n, d, omega_z_hz=310e3, alpha_x=0.009782, alpha_y=None, shift=0.0):
    return TrapSpec(
        omega_z=TWO_PI * omega_z_hz,
        alpha_x=alpha_x,
        alpha_y=alpha_y,
        chains=2,
        ions_per_chain=n,
        chain_separation=d,
        axial_shift=shift,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
