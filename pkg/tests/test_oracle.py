import numpy as np

from lrkrylov import MultitermOperator, materialize_kron, vec
from lrkrylov.oracle import dense_cg, dense_fom, dense_gmres, dense_solve, dense_trunc_oracle

from conftest import random_operator, spd_operator


def test_dense_solve_scalar():
    n = 4
    op = MultitermOperator(((2 * np.eye(n), np.eye(n)),))
    ones = np.ones((n, 1))
    x = dense_solve(op, ones, ones)
    assert np.allclose(x, -0.5 * np.ones((n, n)))


def test_dense_solve_lyapunov_closed_form():
    lam = np.array([1.0, 2.0, 3.0])
    a = np.diag(lam)
    op = MultitermOperator(((a, np.eye(3)), (np.eye(3), a)))
    c1 = np.array([[1.0], [2.0], [-1.0]])
    c2 = np.array([[0.5], [1.0], [2.0]])
    x = dense_solve(op, c1, c2)
    c = c1 @ c2.T
    expect = -c / (lam[:, None] + lam[None, :])
    assert np.allclose(x, expect, atol=1e-13)
    assert np.allclose(a @ x + x @ a.T + c, 0.0, atol=1e-13)


def test_dense_solve_residual(rng):
    op = random_operator(rng, 8, 3)
    c1 = rng.standard_normal((8, 2))
    c2 = rng.standard_normal((8, 2))
    x = dense_solve(op, c1, c2)
    k = materialize_kron(op)
    r = k @ vec(x) + vec(c1 @ c2.T)
    assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(vec(c1 @ c2.T))


def test_dense_gmres_finite_termination():
    # operator with 3 distinct eigenvalues: residual vanishes by step 3
    d = np.diag([1.0, 1.0, 2.0, 3.0])
    op = MultitermOperator(((d, np.eye(4)),))
    rng = np.random.default_rng(0)
    c1 = rng.standard_normal((4, 1))
    c2 = rng.standard_normal((4, 1))
    # B = I makes the assembled operator diag(d,...,d): 3 distinct eigenvalues
    _, residuals, _ = dense_gmres(op, c1, c2, 6)
    assert residuals[min(2, len(residuals) - 1)] <= 1e-12 * residuals[0] + 1e-12


def test_dense_gmres_residual_formula(rng):
    op = random_operator(rng, 6, 2)
    c1 = rng.standard_normal((6, 1))
    c2 = rng.standard_normal((6, 1))
    h, residuals, solutions = dense_gmres(op, c1, c2, 8)
    k = materialize_kron(op).toarray()
    b = -vec(c1 @ c2.T)
    for res, x in zip(residuals, solutions):
        direct = np.linalg.norm(b - k @ vec(x))
        assert abs(res - direct) <= 1e-12 * np.linalg.norm(b)


def test_dense_fom_residual_formula(rng):
    op = random_operator(rng, 6, 2)
    c1 = rng.standard_normal((6, 1))
    c2 = rng.standard_normal((6, 1))
    h, residuals, formula, solutions = dense_fom(op, c1, c2, 8)
    for direct, cheap in zip(residuals, formula):
        if np.isfinite(direct):
            assert abs(direct - cheap) <= 1e-12 * residuals[0] + 1e-12


def test_dense_cg_spd(rng):
    op = spd_operator(rng, 6, 2)
    c1 = rng.standard_normal((6, 1))
    c2 = rng.standard_normal((6, 1))
    residuals, x = dense_cg(op, c1, c2, 80, tol=1e-10)
    k = materialize_kron(op).toarray()
    b = -vec(c1 @ c2.T)
    assert np.linalg.norm(b - k @ vec(x)) <= 1e-9 * np.linalg.norm(b)
    assert residuals[-1] <= 1e-10


def test_dense_solve_singular_operator():
    from lrkrylov import FactorizationError

    op = MultitermOperator(((np.zeros((3, 3)), np.eye(3)),))
    with np.errstate(all="ignore"):
        try:
            dense_solve(op, np.ones((3, 1)), np.ones((3, 1)))
        except FactorizationError:
            pass
        else:
            raise AssertionError("singular operator not detected")


def test_dense_trunc_oracle_trivial():
    e1 = np.zeros((10, 1))
    e1[0, 0] = 1.0
    t, k, disc = dense_trunc_oracle(e1, np.ones((1, 1)), e1, 0.1)
    assert k == 1 and disc == 0.0
    t, k, disc = dense_trunc_oracle(np.ones((5, 2)), np.zeros((2, 2)), np.ones((5, 2)), 0.5)
    assert k == 0 and disc == 0.0
