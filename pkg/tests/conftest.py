from __future__ import annotations

import numpy as np
import pytest

# acceptance outcomes, printed once in the terminal summary
CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    def report(cid: str, passed: bool, detail: str = "") -> bool:
        CRITERIA[cid] = (bool(passed), detail)
        print(f"{cid} {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA, key=lambda c: int(c[1:])):
        ok, detail = CRITERIA[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'} {detail}")
