import numpy as np
import pytest

from sqgsim.spectral import SpectralField, sobolev_norm


def random_field(N, rng, normalize=True):
    f = SpectralField(rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
    if normalize:
        f = f * (1.0 / sobolev_norm(f, 0.0))
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# (number, title, passed, detail) for each acceptance criterion that ran
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
