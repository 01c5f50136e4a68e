import numpy as np
import pytest
import scipy.sparse as sparse

from lrkrylov import LowRankMatrix, MultitermOperator


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_lowrank(rng, n_a, n_b, k):
    return LowRankMatrix(rng.standard_normal((n_a, k)), rng.standard_normal((n_b, k)))


def random_operator(rng, n, p, shift=1.5, density=0.3):
    """Random sparse multiterm operator, diagonally shifted so the assembled
    matrix stays well conditioned."""
    terms = []
    for _ in range(p):
        a = sparse.random(n, n, density, random_state=rng) + shift * sparse.identity(n)
        b = sparse.random(n, n, density, random_state=rng) + shift * sparse.identity(n)
        terms.append((a.tocsr(), b.tocsr()))
    return MultitermOperator(tuple(terms))


def spd_operator(rng, n, p):
    """Operator with symmetric positive definite term factors."""
    terms = []
    for _ in range(p):
        qa = rng.standard_normal((n, n)) / np.sqrt(n)
        qb = rng.standard_normal((n, n)) / np.sqrt(n)
        a = qa @ qa.T + 1.2 * np.eye(n)
        b = qb @ qb.T + 1.2 * np.eye(n)
        terms.append((a, b))
    return MultitermOperator(tuple(terms))
