import numpy as np
import pytest

from socialsense.belief import ModelParams

# two-state change model used throughout the detection examples
P_CHANGE = np.array([[1.0, 0.0], [0.05, 0.95]])
B_SYM = np.array([[0.9, 0.1], [0.1, 0.9]])
C_DET = np.array([[4.57, 5.57], [2.57, 0.0]])
DELAY, FALSE_ALARM = 1.05, 3.0


@pytest.fixture
def change_model():
    return ModelParams(P_CHANGE, B_SYM, C_DET, np.array([0.5, 0.5]))


@pytest.fixture
def static_model():
    return ModelParams(np.eye(2), B_SYM, C_DET, np.array([0.5, 0.5]))


def random_model(rng, X=None, Y=None, A=None, identity=False, positive=False):
    X = X or int(rng.integers(2, 5))
    Y = Y or int(rng.integers(2, 5))
    A = A or int(rng.integers(2, 5))
    P = np.eye(X) if identity else rng.dirichlet(np.ones(X), size=X)
    B = rng.dirichlet(np.ones(Y), size=X)
    if positive:
        B = 0.05 / Y + 0.95 * B
        B /= B.sum(axis=1, keepdims=True)
    C = rng.normal(size=(X, A))
    prior = rng.dirichlet(np.ones(X))
    return ModelParams(P, B, C, prior)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
