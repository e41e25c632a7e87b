import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", module="numba")


def random_spd(rng, n=4, scale=1.0, floor=1e-2):
    a = rng.standard_normal((n, n)) * scale
    return a @ a.T + floor * np.eye(n)


def random_psd_rank(rng, n=4, rank=2, scale=1.0):
    a = rng.standard_normal((n, rank)) * scale
    return a @ a.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# (criterion number, line) pairs recorded by the acceptance suite.
ACCEPTANCE = []


def record(number, name, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
