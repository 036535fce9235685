import numpy as np
import pytest

from gbfselect.design import RawDataset, standardize

# acceptance tests append (criterion number, passed, detail) here
ACCEPTANCE_LINES = []


def make_raw(rng, n, p, signal=(1.0,), noise=1.0, corr=0.3):
    mix = np.eye(p) + corr * rng.standard_normal((p, p)) / np.sqrt(p)
    X = rng.standard_normal((n, p)) @ mix
    beta = np.zeros(p)
    beta[: len(signal)] = signal[:p]
    y = 1.0 + X @ beta + noise * rng.standard_normal(n)
    return RawDataset(X, y)


def make_design(rng, n, p, **kw):
    return standardize(make_raw(rng, n, p, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
