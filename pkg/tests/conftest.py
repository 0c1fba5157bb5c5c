import numpy as np
import pytest

from latentgeo.models import DecoderEnsemble, Encoder, Mlp, RbfNet
from latentgeo.rng import derive_rng

# toy scale used throughout: latent d=2, data D=9, ensemble S=3
D_LATENT, D_DATA, S_TOY = 2, 9, 3


def toy_member(seed, hidden=(6,), output="sigmoid"):
    return Mlp.init([D_LATENT, *hidden, D_DATA], output, derive_rng(seed, "toy-member"))


@pytest.fixture
def toy_ensemble():
    return DecoderEnsemble([toy_member(s) for s in range(S_TOY)])


@pytest.fixture
def toy_encoder():
    return Encoder.init(D_DATA, [5], D_LATENT, derive_rng(0, "toy-encoder"))


@pytest.fixture
def toy_rbf():
    rng = derive_rng(0, "toy-rbf")
    return RbfNet(rng.normal(size=(4, D_LATENT)), rng.uniform(0.5, 2.0, size=4), rng.uniform(0.1, 1.0, size=(4, D_DATA)))


def identity_map(d=2):
    return Mlp([d, d], [np.eye(d)], [np.zeros((1, d))], "identity")


def linear_map(A):
    A = np.asarray(A, dtype=np.float64)
    return Mlp([A.shape[1], A.shape[0]], [A.T.copy()], [np.zeros((1, A.shape[0]))], "identity")


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
