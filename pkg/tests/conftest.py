import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def cofactor_det(a):
    """Laplace expansion; independent of LAPACK."""
    a = [list(map(float, row)) for row in a]
    n = len(a)
    if n == 1:
        return a[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in a[1:]]
        total += (-1) ** j * a[0][j] * cofactor_det(minor)
    return total


def make_proper(rng, rows, cols):
    """Gaussian matrix scaled so det(H H^T) = 1.

    Uses the cofactor determinant up to 5x5 (factorial cost beyond that).
    """
    h = rng.standard_normal((rows, cols))
    if rows <= 5:
        logdet = np.log(abs(cofactor_det(h @ h.T)))
    else:
        logdet = np.linalg.slogdet(h @ h.T)[1]
    return h / np.exp(logdet / (2 * rows))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
