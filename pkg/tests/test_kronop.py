import numpy as np
import pytest

from lrkrylov import (
    ContractViolationError,
    LowRankMatrix,
    MultitermOperator,
    ResourceLimitError,
    SpectralEstimates,
    estimate_extremes,
    inner,
    materialize,
    materialize_kron,
    unvec,
    vec,
)

from conftest import random_lowrank, random_operator, spd_operator


def test_apply_identity_term(rng):
    n = 7
    op = MultitermOperator(((np.eye(n), np.eye(n)),))
    x = random_lowrank(rng, n, n, 2)
    y = op.apply(x)
    assert np.array_equal(y.left, x.left)
    assert np.array_equal(y.right, x.right)


def test_apply_zero_input():
    op = MultitermOperator(((np.eye(4), np.eye(4)),))
    y = op.apply(LowRankMatrix.zeros(4, 4))
    assert y.rank == 0
    assert op.apply_adjoint(LowRankMatrix.zeros(4, 4)).rank == 0


def test_apply_matches_dense(rng):
    op = random_operator(rng, 12, 3)
    x = random_lowrank(rng, 12, 12, 2)
    xd = materialize(x)
    ref = sum(np.asarray((a @ xd) @ b.T.toarray()) for a, b in op.terms)
    got = materialize(op.apply(x))
    assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)
    assert op.apply(x).rank == op.p * x.rank


def test_apply_adjoint_symmetric_term(rng):
    a = np.diag([1.0, 2.0, 3.0])
    op = MultitermOperator(((a, a),))
    x = random_lowrank(rng, 3, 3, 2)
    assert np.allclose(materialize(op.apply(x)), materialize(op.apply_adjoint(x)))


def test_adjoint_identity(rng):
    op = random_operator(rng, 15, 2)
    for _ in range(5):
        x = random_lowrank(rng, 15, 15, 2)
        y = random_lowrank(rng, 15, 15, 3)
        lhs = inner(op.apply(x), y)
        rhs = inner(x, op.apply_adjoint(y))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_dimension_mismatch(rng):
    op = random_operator(rng, 10, 2)
    with pytest.raises(ContractViolationError):
        op.apply(random_lowrank(rng, 10, 11, 2))
    with pytest.raises(ContractViolationError):
        MultitermOperator(((np.eye(3), np.eye(3)), (np.eye(4), np.eye(3))))
    with pytest.raises(ContractViolationError):
        MultitermOperator(())


def test_materialize_kron_identity():
    op = MultitermOperator(((np.eye(2), np.eye(2)),))
    assert np.array_equal(materialize_kron(op).toarray(), np.eye(4))


def test_materialize_kron_ordering():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    op = MultitermOperator(((a, np.eye(2)),))
    k = materialize_kron(op).toarray()
    expect = np.zeros((4, 4))
    expect[:2, :2] = a
    expect[2:, 2:] = a
    assert np.array_equal(k, expect)
    # vec(A X) = (I (x) A) vec(X)
    x = np.arange(4.0).reshape(2, 2)
    assert np.allclose(k @ vec(x), vec(a @ x))


def test_materialize_kron_consistency(rng):
    op = random_operator(rng, 6, 3)
    x = random_lowrank(rng, 6, 6, 2)
    k = materialize_kron(op)
    lhs = k @ vec(materialize(x))
    rhs = vec(materialize(op.apply(x)))
    assert np.linalg.norm(lhs - rhs) <= 1e-13 * np.linalg.norm(rhs)


def test_materialize_kron_guard(rng):
    op = random_operator(rng, 10, 1)
    with pytest.raises(ResourceLimitError):
        materialize_kron(op, max_size=50)


def test_vec_unvec_roundtrip(rng):
    x = rng.standard_normal((3, 5))
    assert np.array_equal(unvec(vec(x), (3, 5)), x)
    # column stacking: first column first
    assert np.array_equal(vec(x)[:3], x[:, 0])


def test_spd_terms_give_spd_operator(rng):
    op = spd_operator(rng, 6, 2)
    k = materialize_kron(op).toarray()
    evals = np.linalg.eigvalsh((k + k.T) / 2)
    assert evals[0] > 0


def test_estimates_validation():
    with pytest.raises(ContractViolationError):
        SpectralEstimates(1.0, 2.0)
    with pytest.raises(ContractViolationError):
        SpectralEstimates(1.0, 0.5, source="guessed")
    est = SpectralEstimates(4.0, 2.0, source="user_supplied")
    assert est.kappa == pytest.approx(2.0)


def test_estimate_extremes_diagonal_exact():
    op = MultitermOperator(((np.diag([1.0, 2.0]), np.diag([3.0, 4.0])),))
    est = estimate_extremes(op, steps=6)
    assert est.sigma_max == pytest.approx(8.0, abs=1e-6)
    assert est.sigma_min == pytest.approx(3.0, abs=1e-6)


def test_estimate_extremes_identity():
    op = MultitermOperator(((np.eye(5), np.eye(5)),))
    est = estimate_extremes(op, steps=4)
    assert est.sigma_max == pytest.approx(1.0, abs=1e-10)
    assert est.sigma_min == pytest.approx(1.0, abs=1e-10)


def test_estimate_extremes_against_dense_svd(rng):
    op = random_operator(rng, 10, 2, shift=2.0)
    k = materialize_kron(op).toarray()
    svals = np.linalg.svd(k, compute_uv=False)
    est = estimate_extremes(op, steps=30, seed=3)
    assert abs(est.sigma_max - svals[0]) <= 0.05 * svals[0]
    # short runs overestimate the smallest singular value
    assert svals[-1] <= est.sigma_min * (1 + 1e-8)
    assert est.sigma_min <= 10 * svals[-1]


def test_estimate_extremes_steps_guard():
    op = MultitermOperator(((np.eye(3), np.eye(3)),))
    with pytest.raises(ContractViolationError):
        estimate_extremes(op, steps=1)


def test_rank_bound_of_products(rng):
    # without compression the factor column count multiplies by p per apply
    op = random_operator(rng, 8, 3)
    x = random_lowrank(rng, 8, 8, 1)
    y = op.apply(op.apply(x))
    assert y.rank == op.p**2
