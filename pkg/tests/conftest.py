import numpy as np
import pytest

from rftensor.tensor import DCT, FFT


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[FFT, DCT])
def kind(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Call as ``criterion(label, ok, detail)``; the line is printed immediately
    and repeated in the terminal summary.
    """

    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
