"""Low-rank conjugate gradients for positive definite multiterm operators.

Preconditioned CG in factored arithmetic with a compression of every iterate.
The solution iterate is compressed at a fixed tight tolerance (1e-12); the
residual, direction, operator image, and preconditioned residual are
compressed at the residual-scaled tolerance ``min(eps / min(||r||, 1), 1)``,
which loosens as the residual falls.  The residual matrix is recomputed
explicitly from the current solution every iteration and its norm is taken
before any compression, so the reported history tracks the true residual of
the returned iterate.

Update order per iteration: solution step, explicit residual, convergence
check, residual compression, preconditioned residual, direction coefficient
(in the robust form -<Z_{k+1}, Q_k> / <P_k, Q_k>), direction, operator image.
"""

import time

import numpy as np

from .errors import ContractViolationError, SpdViolationError
from .krylov import SolveReport, SolverConfig, _as_rhs_factor
from .lowrank import LowRankMatrix, concat_scaled, fro_norm, inner, trunc

_X_TOL = 1e-12


def cg_threshold(residual_norm, eps):
    """Residual-scaled compression tolerance min(eps / min(||r||, 1), 1)."""
    return float(min(eps / min(residual_norm, 1.0), 1.0))


def _combine(terms, tol, truncator):
    return truncator(*concat_scaled(terms), tol)


def cg_solve(op, c1, c2, config=None, precond=None, truncator=trunc):
    """Run low-rank CG on ``sum_i A_i X B_i^T + C1 C2^T = 0``.

    The operator must be positive definite in the vectorized sense (holds
    e.g. when all A_i and B_i are symmetric positive definite); a
    non-positive direction curvature raises :class:`SpdViolationError`.
    Returns ``(solution, report)``; the report's ``cg_rank_sums`` holds the
    per-iteration sum of the ranks of all five iterates.
    """
    cfg = config if config is not None else SolverConfig(variant="cg")
    t0 = time.perf_counter()
    c1 = _as_rhs_factor(c1, op.n_a, "c1")
    c2 = _as_rhs_factor(c2, op.n_b, "c2")
    if c1.shape[1] != c2.shape[1]:
        raise ContractViolationError("c1 and c2 must have the same number of columns")

    def _report(iters, term, res_hist, thr_hist, rank_sums, x_ranks, sol, wall):
        rel_final = res_hist[-1] / beta if res_hist else 0.0
        return SolveReport(
            variant="cg",
            schedule="cg_residual_scaled",
            iterations=iters,
            termination=term,
            beta=beta,
            computed_residuals=res_hist,
            bounds=list(res_hist),
            eps_a_used=thr_hist,
            eps_orth_used=[],
            ranks_per_iter=x_ranks,
            z_ranks=[],
            columns_s=max(rank_sums) if rank_sums else 0,
            columns_z=0,
            solution_rank=sol.rank,
            true_residual_final=rel_final,
            rel_bound_final=rel_final,
            max_offdiag_inner=None,
            max_norm_drift=None,
            wall_time=wall,
            cg_rank_sums=rank_sums,
        )

    # rhs of the vectorized system: b = -C1 C2^T
    b = LowRankMatrix(-c1, c2)
    beta = fro_norm(b)
    if beta == 0.0:
        zero = LowRankMatrix.zeros(op.n_a, op.n_b)
        return zero, _report(0, "converged", [], [], [], [], zero, time.perf_counter() - t0)

    pinned = cfg.pinned_trunc_tol
    x_tol = _X_TOL if pinned is None else pinned

    def threshold(res_rel):
        return cg_threshold(res_rel, cfg.eps) if pinned is None else pinned

    x = LowRankMatrix.zeros(op.n_a, op.n_b)
    r = b
    z = precond.apply_inverse(r) if precond is not None else r
    p = z
    q = truncator(*concat_scaled([(1.0, op.apply(p))]), threshold(1.0)).kept
    xi = inner(p, q)
    if xi <= 0.0:
        raise SpdViolationError("direction curvature <P, A P> is not positive")

    residuals, thresholds, rank_sums, x_ranks = [], [], [], []
    termination = "max_iters"
    iters = 0
    x_prev = x

    for k in range(1, cfg.m_max + 1):
        omega = inner(r, p) / xi
        x = _combine([(1.0, x), (omega, p)], x_tol, truncator).kept
        # explicit residual from the current solution; norm before compression
        resid_terms = concat_scaled([(1.0, b), (-1.0, op.apply(x))])
        tr = truncator(*resid_terms, 0.0)
        res = tr.input_norm
        residuals.append(res)
        x_ranks.append(x.rank)
        iters = k
        if res <= cfg.eps * beta:
            termination = "converged"
            rank_sums.append(x.rank + tr.kept_rank)
            break
        # the threshold runs on the normalized residual: the stopping target
        # is relative, so the allowed discards scale with beta
        thr = threshold(res / beta)
        thresholds.append(thr)
        r = truncator(*resid_terms, thr).kept
        z = precond.apply_inverse(r) if precond is not None else r
        z = truncator(*concat_scaled([(1.0, z)]), thr).kept
        beta_cg = -inner(z, q) / xi
        p = _combine([(1.0, z), (beta_cg, p)], thr, truncator).kept
        q = truncator(*concat_scaled([(1.0, op.apply(p))]), thr).kept
        xi = inner(p, q)
        if xi <= 0.0:
            raise SpdViolationError("direction curvature <P, A P> is not positive")
        rank_sums.append(x.rank + r.rank + p.rank + q.rank + z.rank)
        if cfg.stagnation_stop:
            step = fro_norm(LowRankMatrix(
                np.hstack([x.left, x_prev.left]),
                np.hstack([x.right, -x_prev.right]),
            ))
            if step <= cfg.eps:
                termination = "stagnation"
                break
        x_prev = x

    return x, _report(
        iters, termination, residuals, thresholds, rank_sums, x_ranks, x, time.perf_counter() - t0
    )
