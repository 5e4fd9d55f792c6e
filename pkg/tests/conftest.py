import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240607))


@pytest.fixture
def record():
    """Collect one summary line per acceptance criterion."""
    def _record(number, name, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
