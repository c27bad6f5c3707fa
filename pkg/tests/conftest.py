import numpy as np
import pytest

from bomeasure.spectral import Field, Grid


def random_field(grid, rng, decay=1.0, scale=1.0):
    """Random band-limited field with algebraically decaying coefficients."""
    K = grid.max_wavenumber
    k = np.arange(K + 1)
    h = np.zeros(K + 1, dtype=complex)
    h[1:] = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / k[1:] ** (1.0 + decay)
    return Field.from_half(grid, scale * h)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid32():
    return Grid(32)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance summary and assert on it."""
    def report(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        request.config.__dict__.setdefault("_acceptance_lines", []).append(line)
        print(line)
        assert passed, line
    return report
