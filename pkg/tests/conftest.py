import numpy as np
import pytest

from dyrc.dynamics import DUFFING_SETS, SimConfig, integrate, split


@pytest.fixture(scope="session")
def set1_split():
    return split(integrate(DUFFING_SETS[1], SimConfig()), 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def report():
    """Record one acceptance line: ``report("3", "name", passed, detail)``."""

    def _record(number: str, name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = (bool(passed), f"{name}: {detail}" if detail else name)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=lambda s: (int(s.rstrip("ab")), s)):
        passed, text = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number} {text}")
