import numpy as np
import pytest

from spectral_perturb.geometry import DomainSpec, build_base, build_dumbbell, build_rectangle
from spectral_perturb.study import StudyConfig, run_sweep

SCHEDULE = (0.25, 0.125, 0.0625)


@pytest.fixture(scope="session")
def spec():
    return DomainSpec.symmetric()


@pytest.fixture(scope="session")
def unit_square_half():
    return build_rectangle((0.0, 0.0, 1.0, 1.0), 0.5)


@pytest.fixture(scope="session")
def small_dumbbell(spec):
    return build_dumbbell(spec, 0.25, 1 / 16)


@pytest.fixture(scope="session")
def small_base(spec):
    return build_base(spec, 1 / 16)


@pytest.fixture(scope="session")
def laplacian_sweep(spec):
    return run_sweep(StudyConfig(spec, {"preset": "laplacian"}, 1 / 64, SCHEDULE))


@pytest.fixture(scope="session")
def lame_sweep(spec):
    return run_sweep(StudyConfig(spec, {"preset": "lame_const", "upsilon": 1.0, "mu": 1.0}, 1 / 64, SCHEDULE))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance report -----------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
