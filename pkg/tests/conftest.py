import numpy as np
import pytest

from tvpshrink.rngdist import RngStream


@pytest.fixture
def rng():
    return RngStream(20240601, 0).generator()


def mc_z(x, m1, m2=None):
    """z-scores of the sample mean (and of the sample second moment) of ``x``.

    ``m1``/``m2`` are the exact first and second moments; the second-moment
    z needs the fourth moment, so callers pass it as ``m2=(E[x^2], E[x^4])``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    z1 = (x.mean() - m1) / np.sqrt((m2[0] - m1 * m1) / n) if m2 is not None else \
        (x.mean() - m1) / (x.std() / np.sqrt(n))
    if m2 is None:
        return z1
    e2, e4 = m2
    z2 = (np.mean(x * x) - e2) / np.sqrt((e4 - e2 * e2) / n)
    return z1, z2


CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)
