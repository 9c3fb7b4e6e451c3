import itertools
import math

import numpy as np
import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def report():
    """Record one acceptance line; returns the pass flag for asserting."""

    def _report(criterion: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_diff(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up = x.copy()
        up[idx] += step
        dn = x.copy()
        dn[idx] -= step
        g[idx] = (f(up) - f(dn)) / (2.0 * step)
    return g


def brute_log_partition(w, fields, beta):
    """Pure-Python sum over visible states; independent of the library path."""
    w = np.atleast_2d(w)
    m, n = w.shape
    total = 0.0
    for v in itertools.product((-1.0, 1.0), repeat=n):
        prod = 1.0
        for mu in range(m):
            x = sum(w[mu][i] * v[i] for i in range(n)) / math.sqrt(n)
            prod *= math.cosh(beta * (x + fields[mu]))
        total += prod
    return math.log(total)


def brute_log_likelihood(w, data, beta):
    w = np.atleast_2d(w)
    m, n = w.shape
    logz = brute_log_partition(w, [0.0] * m, beta)
    fit = 0.0
    for v in data:
        for mu in range(m):
            x = sum(w[mu][i] * v[i] for i in range(n)) / math.sqrt(n)
            fit += math.log(math.cosh(beta * x))
    return fit - len(data) * logz


def brute_weight_matrices(m, n):
    for bits in itertools.product((-1.0, 1.0), repeat=m * n):
        yield np.array(bits).reshape(m, n)
