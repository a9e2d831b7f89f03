import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("okl", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("okl")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    """Record and print one acceptance line; returns a callable(n, passed, detail)."""

    def record(n: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}"
        ACCEPTANCE[n] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
