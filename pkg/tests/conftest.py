import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def surrogate_dir(tmp_path_factory):
    pytest.importorskip("sklearn")
    from causalaug.datasets import write_digits_surrogate

    out = tmp_path_factory.mktemp("digits")
    write_digits_surrogate(out)
    return out


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in LINES:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
    terminalreporter.write_line(f"{sum(p for _, p, _ in LINES)}/{len(LINES)} criteria lines passed")
