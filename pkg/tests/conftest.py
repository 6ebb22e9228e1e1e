import numpy as np
import pytest

from fockbt import BilinearSystem, ControlSignal, balance, truncate

ACCEPTANCE_LINES = []


def record(label, ok, detail=''):
    """Print and keep one acceptance line; the summary hook repeats them at the end."""
    line = f'{"PASS" if ok else "FAIL"}  {label}' + (f'  ({detail})' if detail else '')
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section('acceptance criteria')
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_scalar(N=0.5):
    return BilinearSystem([[-1.0]], [[[N]]], [[1.0]], [[1.0]], label='scalar')


def make_2d():
    return BilinearSystem(np.diag([-1.0, -2.0]), [[[0.0, 0.3], [0.3, 0.0]]],
                          [[1.0], [0.5]], [[1.0, 0.0]], label='2d')


def make_diagonal():
    """Decoupled states; the second one is invisible at the output."""
    return BilinearSystem(np.diag([-1.0, -2.0]), [np.diag([0.3, 0.4])],
                          [[1.0], [1.0]], [[1.0, 0.0]], label='diagonal')


def make_blockdiag():
    """Two decoupled scalar subsystems, both reachable and observable."""
    return BilinearSystem(np.diag([-1.0, -2.0]), [np.diag([0.5, 0.3])],
                          [[1.0], [1.0]], [[1.0, 1.0]], label='blockdiag')


def random_stable(rng, k, n=1, m=1, nscale=0.3):
    """Random system with a negative log-norm drift and small bilinear terms."""
    A = rng.standard_normal((k, k)) / np.sqrt(k)
    A = A - (np.linalg.eigvalsh((A + A.T) / 2).max() + 1.0) * np.eye(k)
    N = [nscale * rng.standard_normal((k, k)) / np.sqrt(k) for _ in range(n)]
    return BilinearSystem(A, N, rng.standard_normal((k, n)), rng.standard_normal((m, k)))


@pytest.fixture
def scalar():
    return make_scalar()


@pytest.fixture
def sys2d():
    return make_2d()


@pytest.fixture
def reduced2d():
    return truncate(balance(make_2d()), 1).reduced


@pytest.fixture
def diagonal():
    return make_diagonal()


@pytest.fixture
def blockdiag():
    return make_blockdiag()


@pytest.fixture
def exp_control():
    return ControlSignal.exponential(1.0, 1.0)
