import numpy as np
import pytest

from robustfit.kernels import RobustKernel
from robustfit.problem import LinearResiduals, ParameterBlock, Problem


def linear_problem(A, b, kernel=None):
    """Single-block problem with 1-D residuals a_i^T x - b_i."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = A.shape
    return Problem([ParameterBlock(0, d, np.zeros(d))],
                   [LinearResiduals(A[:, None, :], b[:, None], np.zeros(n, dtype=np.int64))],
                   kernel or RobustKernel(1e6))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def regression():
    """Outlier-free linear regression with its least-squares optimum."""
    r = np.random.default_rng(7)
    A = np.column_stack([np.ones(30), r.uniform(-1, 1, 30)])
    b = A @ np.array([0.5, -1.5]) + 0.01 * r.standard_normal(30)
    return A, b, np.linalg.lstsq(A, b, rcond=None)[0]


# acceptance verdicts, printed once at the end of the session
VERDICTS: dict[int, tuple[str, str]] = {}


def verdict(criterion: int, ok: bool | None, detail: str) -> bool | None:
    """Record a criterion outcome; ``None`` marks a skipped criterion."""
    word = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    VERDICTS[criterion] = (word, detail)
    print(f"criterion {criterion:2d}: {word}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        word, detail = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {word}  {detail}")
