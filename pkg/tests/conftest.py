import numpy as np
import pytest

from genomask import ExplicitJointModel, HmmModel, MarkovChainModel


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_explicit(rng, n, alphabet=2, sparse=False):
    probs = rng.dirichlet(np.full(alphabet ** n, 0.6))
    if sparse:
        kill = rng.random(probs.size) < 0.3
        if kill.all():
            kill[0] = False
        probs = np.where(kill, 0.0, probs)
        probs = probs / probs.sum()
    return ExplicitJointModel(probs, n=n, alphabet=alphabet)


def random_markov(rng, n, alphabet=2):
    init = rng.dirichlet(np.ones(alphabet))
    rows = rng.dirichlet(np.ones(alphabet), size=alphabet)
    return MarkovChainModel(init, rows, n)


def random_hmm(rng, n, m, alphabet=2, eps=None, theta=None):
    panel = rng.integers(alphabet, size=(m, n))
    eps = float(rng.uniform(0.02, 0.5)) if eps is None else eps
    theta = float(rng.uniform(0.02, 0.4)) if theta is None else theta
    return HmmModel(panel, eps, theta, alphabet)


def parity_n3():
    """X2 = X0 xor X1 with X0, X1 independent uniform bits."""
    probs = np.zeros(8)
    for a in (0, 1):
        for b in (0, 1):
            probs[a * 4 + b * 2 + (a ^ b)] = 0.25
    return ExplicitJointModel(probs, n=3, alphabet=2)
