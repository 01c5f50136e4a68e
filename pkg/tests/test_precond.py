import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sparse

from lrkrylov import (
    ContractViolationError,
    FactorizationError,
    InnerKrylovSpec,
    LowRankMatrix,
    MeanBasedSpec,
    MultitermOperator,
    OneTermSpec,
    ResourceLimitError,
    SolverConfig,
    SylvesterSingularityError,
    SylvesterSpec,
    UllmannSpec,
    build,
    compress,
    convdiff_mean_precond,
    fro_norm,
    gen_convdiff,
    materialize,
    solve,
    ullmann_gbar,
)

from conftest import random_lowrank


def test_build_identity_one_term(rng):
    prec = build(OneTermSpec(np.eye(6), np.eye(6)))
    v = random_lowrank(rng, 6, 6, 2)
    got = prec.apply_inverse(v, exact=True)
    assert np.allclose(materialize(got), materialize(v))
    # non-exact mode first compresses the input at eps_precond
    pre = compress(v, prec.spec.eps_precond).kept
    got2 = prec.apply_inverse(v)
    assert np.allclose(materialize(got2), materialize(pre))


def test_one_term_scaled_identity(rng):
    prec = build(OneTermSpec(2 * np.eye(5), np.eye(5)))
    u = rng.standard_normal((5, 1))
    v = rng.standard_normal((5, 1))
    got = prec.apply_inverse(LowRankMatrix(u, v), exact=True)
    assert np.allclose(materialize(got), (u / 2) @ v.T)


def test_mean_based_sparse_lu():
    k0 = sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(8, 8)).tocsr()
    prec = build(MeanBasedSpec(k0))
    rng = np.random.default_rng(0)
    v = random_lowrank(rng, 8, 5, 2)
    got = prec.apply_inverse(v, exact=True)
    assert np.allclose(k0.toarray() @ materialize(got), materialize(v))


def test_build_singular_factor_names_matrix():
    with pytest.raises(FactorizationError, match="k0"):
        build(MeanBasedSpec(sparse.csr_matrix((3, 3))))
    with pytest.raises(FactorizationError, match="t1"):
        build(OneTermSpec(np.zeros((3, 3)), np.eye(3)))


def test_ullmann_gbar_single_term():
    k0 = np.diag([1.0, 2.0])
    assert np.allclose(ullmann_gbar([k0], [np.eye(3)]), np.eye(3))


def test_ullmann_gbar_orthogonal_terms():
    k0 = np.array([[1.0, 0.0], [0.0, 1.0]])
    k1 = np.array([[0.0, 1.0], [-1.0, 0.0]])  # trace(K1^T K0) = 0
    g0 = np.eye(2)
    g1 = np.full((2, 2), 7.0)
    assert np.allclose(ullmann_gbar([k0, k1], [g0, g1]), g0)


def test_ullmann_gbar_matches_dense_trace(rng):
    ks = [rng.standard_normal((10, 10)) for _ in range(3)]
    gs = [rng.standard_normal((4, 4)) for _ in range(3)]
    got = ullmann_gbar(ks, gs)
    denom = np.trace(ks[0].T @ ks[0])
    expect = sum((np.trace(k.T @ ks[0]) / denom) * g for k, g in zip(ks, gs))
    assert np.allclose(got, expect, atol=1e-13)
    with pytest.raises(ContractViolationError):
        ullmann_gbar([np.zeros((3, 3))], [np.eye(2)])


def test_sylvester_direct_residual(rng):
    n = 50
    a = rng.standard_normal((n, n)) + 5 * np.eye(n)
    b = rng.standard_normal((n, n)) + 5 * np.eye(n)
    prec = build(SylvesterSpec(a, b))
    v = random_lowrank(rng, n, n, 3)
    y = materialize(prec.apply_inverse(v, exact=True))
    vd = materialize(v)
    assert np.linalg.norm(a @ y + y @ b.T - vd) <= 1e-10 * np.linalg.norm(vd)
    # agrees with an independent dense route
    ref = sla.solve_sylvester(a, b.T, vd)
    assert np.linalg.norm(y - ref) <= 1e-10 * np.linalg.norm(ref)


def test_sylvester_singular_spectra_detected():
    a = np.diag([1.0, 2.0])
    b = np.diag([3.0, -1.0])  # lambda_a + lambda_b hits zero
    with pytest.raises(SylvesterSingularityError):
        build(SylvesterSpec(a, b))


def test_sylvester_dense_guard():
    a = np.eye(10)
    with pytest.raises(ResourceLimitError, match="inner_krylov"):
        build(SylvesterSpec(a, a, dense_guard=5))


def test_exact_kinds_inverse_then_forward(rng):
    n = 12
    k0 = sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()
    gs = [np.eye(4), rng.standard_normal((4, 4))]
    gs[1] = (gs[1] + gs[1].T) / 2
    ks = [k0, (k0 * 0.1).tocsr()]
    for prec in (
        build(OneTermSpec(k0, np.eye(4))),
        build(MeanBasedSpec(k0)),
        build(UllmannSpec(tuple(ks), tuple(gs))),
    ):
        v = random_lowrank(rng, n, 4, 2)
        pre = compress(v, prec.spec.eps_precond).kept
        back = prec.apply(prec.apply_inverse(v))
        assert np.linalg.norm(materialize(back) - materialize(pre)) <= 1e-10 * fro_norm(pre)
        # rank never grows for the factored kinds
        assert prec.apply_inverse(v).rank <= pre.rank


def test_exact_preconditioner_converges_in_one_iteration(rng):
    n = 10
    a = rng.standard_normal((n, n)) + 4 * np.eye(n)
    b = rng.standard_normal((n, n)) + 4 * np.eye(n)
    op = MultitermOperator(((a, b),))
    prec = build(OneTermSpec(a, b))
    c1 = rng.standard_normal((n, 1))
    c2 = rng.standard_normal((n, 1))
    _, rep = solve(op, c1, c2, SolverConfig(eps=1e-8, m_max=10, flexible=True), precond=prec)
    assert rep.iterations == 1
    assert rep.termination == "converged"
    assert rep.true_residual_final <= 1e-8


def test_convdiff_mean_values_and_spec():
    p = gen_convdiff(12, 0.7)
    spec = convdiff_mean_precond(p)
    # interval means of the separable convection coefficients
    a_expect = 0.7 * p.t_mat.toarray() + 0.5 * (p.phi1 @ p.b_mat).toarray()
    b_expect = 0.7 * p.t_mat.toarray() + (-4.0) * (p.psi2 @ p.b_mat).toarray()
    assert np.allclose(spec.a_s.toarray(), a_expect)
    assert np.allclose(spec.b_s.toarray(), b_expect)
    alt = convdiff_mean_precond(p, x_side="psi1")
    a_alt = 0.7 * p.t_mat.toarray() + 0.5 * (p.psi1 @ p.b_mat).toarray()
    assert np.allclose(alt.a_s.toarray(), a_alt)


def test_convdiff_preconditioner_reduces_iterations(rng):
    p = gen_convdiff(200, 0.5)
    cfg = SolverConfig(eps=1e-6, m_max=60, schedule="relaxed_sigma", est_steps=8)
    _, plain = solve(p.op, p.c1, p.c2, cfg)
    prec = build(convdiff_mean_precond(p))
    cfg_p = SolverConfig(eps=1e-6, m_max=60, schedule="relaxed_sigma",
                         est_steps=8, flexible=True)
    _, with_prec = solve(p.op, p.c1, p.c2, cfg_p, precond=prec)
    assert with_prec.termination == "converged"
    assert with_prec.true_residual_final <= 1e-6
    if plain.termination == "converged":
        assert with_prec.iterations < plain.iterations
    else:
        assert plain.termination == "max_iters"


def test_inner_krylov_preconditioner_flexible(rng):
    n = 16
    a = rng.standard_normal((n, n)) / 4 + 2 * np.eye(n)
    b = rng.standard_normal((n, n)) / 4 + 2 * np.eye(n)
    op = MultitermOperator(((a, np.eye(n)), (np.eye(n), b)))
    prec = build(InnerKrylovSpec(op, iters=8))
    c1 = rng.standard_normal((n, 1))
    c2 = rng.standard_normal((n, 1))
    cfg = SolverConfig(eps=1e-8, m_max=25, schedule="relaxed_sigma", flexible=True, est_steps=6)
    _, rep = solve(op, c1, c2, cfg, precond=prec)
    assert rep.termination == "converged"
    assert rep.true_residual_final <= 1e-8
    # inner-Krylov preconditioning falls back to unpreconditioned estimates
    assert rep.estimates is not None


def test_non_flexible_right_preconditioning(rng):
    # with a tight pre-truncation the preconditioner is effectively exact, so
    # the single-basis variant is sound and recovers through P^-1
    n = 12
    a = rng.standard_normal((n, n)) / 3 + 3 * np.eye(n)
    b = rng.standard_normal((n, n)) / 3 + 3 * np.eye(n)
    op = MultitermOperator(((a, np.eye(n)), (np.eye(n), b)))
    prec = build(OneTermSpec(a, np.eye(n), eps_precond=1e-12))
    c1 = rng.standard_normal((n, 1))
    c2 = rng.standard_normal((n, 1))
    cfg = SolverConfig(eps=1e-8, m_max=40, schedule="relaxed_sigma",
                       flexible=False, est_steps=8)
    x, rep = solve(op, c1, c2, cfg, precond=prec)
    assert rep.termination == "converged"
    assert rep.true_residual_final <= rep.rel_bound_final
    assert rep.true_residual_final <= 1e-8
    assert rep.columns_z == 0  # no preconditioned basis stored


def test_transposed_solves_give_adjoint(rng):
    # <P^-1 x, y> == <x, P^-T y> for every kind with a transposed solve
    n = 10
    k0 = sparse.diags([-1.0, 2.4, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()
    gs = [np.eye(4), np.diag([0.1, 0.2, -0.1, 0.3])]
    ks = [k0, (0.2 * k0).tocsr()]
    a = rng.standard_normal((n, n)) + 4 * np.eye(n)
    b = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    for prec in (
        build(OneTermSpec(a, b)),
        build(MeanBasedSpec(k0)),
        build(UllmannSpec(tuple(ks), tuple(gs))),
        build(SylvesterSpec(a[:4, :4] + 4 * np.eye(4), b)),
    ):
        x = random_lowrank(rng, *_shape_for(prec, n), 2)
        y = random_lowrank(rng, *_shape_for(prec, n), 2)
        lhs = np.trace(materialize(prec.apply_inverse(x, exact=True)).T @ materialize(y))
        rhs = np.trace(
            materialize(x).T @ materialize(prec.apply_inverse_transpose(y, exact=True))
        )
        assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), 1.0)


def _shape_for(prec, n):
    if prec.kind == "sylvester":
        return 4, 4
    if prec.kind in ("mean_based",):
        return n, 4
    if prec.kind == "ullmann":
        return n, 4
    return n, 4


def test_sylvester_inner_strategy(rng):
    n = 20
    a = rng.standard_normal((n, n)) / 4 + 3 * np.eye(n)
    b = rng.standard_normal((n, n)) / 4 + 3 * np.eye(n)
    prec = build(SylvesterSpec(a, b, strategy="inner_krylov", inner_iters=12))
    v = random_lowrank(rng, n, n, 2)
    y = materialize(prec.apply_inverse(v, exact=True))
    pre = materialize(v)
    rel = np.linalg.norm(a @ y + y @ b.T - pre) / np.linalg.norm(pre)
    assert rel <= 1e-4  # fixed-iteration inner solve is only approximate
