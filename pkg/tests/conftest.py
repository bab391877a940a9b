import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from mpmath import mpf

from comjac.kinematics import precision, unit

settings.register_profile(
    "comjac", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("comjac")

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def prec200():
    with precision(200) as bits:
        yield bits


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def mpvec(*xs):
    return tuple(mpf(x) for x in xs)


def mpunit(*xs):
    with precision(200):
        return unit(mpvec(*xs))
