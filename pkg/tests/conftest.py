"""Shared fixtures and the acceptance-criteria reporting hook."""

import numpy as np
import pytest

from dlglab.diffusion import NoiseGrid, VESchedule
from dlglab.mixture import GaussianMixture, make_benchmark_mixture

# Populated by tests/test_acceptance.py; printed after the run so every
# criterion gets one PASS/FAIL line regardless of where pytest stopped.
_ACCEPTANCE_LOG: list[tuple[str, bool, str]] = []


class AcceptanceRecorder:
    def record(self, name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE_LOG.append((name, bool(passed), detail))
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_LOG:
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"[acceptance] {name}: {status}{suffix}")


@pytest.fixture(scope="session")
def benchmark_mixture() -> GaussianMixture:
    """The 50-mode point-mass cloud in R^16 used by the mixing studies."""
    return make_benchmark_mixture()


@pytest.fixture(scope="session")
def chain_grid() -> NoiseGrid:
    """Narrow 32-level grid matched to the benchmark cloud's diameter."""
    return NoiseGrid(0.01, 2.0, 32)


@pytest.fixture(scope="session")
def chain_schedule(chain_grid) -> VESchedule:
    return VESchedule(chain_grid)


@pytest.fixture(scope="session")
def wide_grid() -> NoiseGrid:
    return NoiseGrid()


@pytest.fixture(scope="session")
def wide_schedule(wide_grid) -> VESchedule:
    return VESchedule(wide_grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def two_mode_line(sep=3.0, dim=2, weights=(0.5, 0.5), base_variance=0.0):
    """Two modes at (±sep, 0, ...) — the workhorse toy target."""
    means = np.zeros((2, dim))
    means[0, 0] = sep
    means[1, 0] = -sep
    return GaussianMixture(
        means=means,
        base_variances=np.full(2, float(base_variance)),
        weights=np.asarray(weights, dtype=float),
    )
