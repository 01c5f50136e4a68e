"""Dense reference implementations for small instances.

Everything here works on the assembled Kronecker system and serves as ground
truth for the low-rank routines: a direct solve, textbook GMRES/FOM/CG without
any truncation, and an SVD-based compression reference.  The compression
reference deliberately re-implements the tail rule with its own loop so the
two routes stay independent.
"""

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ContractViolationError, FactorizationError, ResourceLimitError
from .kronop import materialize_kron, unvec, vec

_EPS = float(np.finfo(float).eps)


def _rhs_vector(op, c1, c2):
    c1 = np.atleast_2d(np.asarray(c1, dtype=float))
    c2 = np.atleast_2d(np.asarray(c2, dtype=float))
    if c1.shape[0] == 1 and op.n_a > 1:
        c1 = c1.T
    if c2.shape[0] == 1 and op.n_b > 1:
        c2 = c2.T
    return -vec(c1 @ c2.T)


def dense_solve(op, c1, c2, max_size=40_000):
    """Direct solve of the assembled system; returns the un-vec'd matrix."""
    a = materialize_kron(op, max_size=max_size)
    b = _rhs_vector(op, c1, c2)
    try:
        x = spla.splu(a.tocsc()).solve(b)
    except RuntimeError as exc:
        raise FactorizationError(f"assembled operator is singular: {exc}") from exc
    if not np.isfinite(x).all():
        raise FactorizationError("assembled operator is singular (non-finite solution)")
    return unvec(x, (op.n_a, op.n_b))


def _arnoldi(a, b, m):
    # Classical Gram-Schmidt with one reorthogonalization pass (coefficients
    # accumulated over both passes), matching the low-rank engine.
    beta = np.linalg.norm(b)
    q = [b / beta]
    h = np.zeros((m + 1, m))
    for j in range(m):
        w = a @ q[j]
        for _ in range(2):
            coeffs = np.array([qi @ w for qi in q])
            w = w - np.column_stack(q) @ coeffs
            h[: j + 1, j] += coeffs
        h[j + 1, j] = np.linalg.norm(w)
        if h[j + 1, j] < 1e-14 * beta:
            return beta, q, h[: j + 2, : j + 1], True
        q.append(w / h[j + 1, j])
    return beta, q, h, False


def dense_gmres(op, c1, c2, m, max_size=40_000):
    """Textbook GMRES on the assembled system, no truncation.

    Returns ``(hessenberg, residuals, solutions)``; residuals are the
    least-squares values per iteration, solutions the un-vec'd iterates.
    """
    a = materialize_kron(op, max_size=max_size)
    b = _rhs_vector(op, c1, c2)
    beta, q, h, _ = _arnoldi(a, b, m)
    residuals, solutions = [], []
    m_done = h.shape[1]
    for j in range(1, m_done + 1):
        hj = h[: j + 1, :j]
        e1 = np.zeros(j + 1)
        e1[0] = beta
        y, *_ = np.linalg.lstsq(hj, e1, rcond=None)
        residuals.append(float(np.linalg.norm(e1 - hj @ y)))
        xj = np.column_stack(q[:j]) @ y
        solutions.append(unvec(xj, (op.n_a, op.n_b)))
    return h, residuals, solutions


def dense_fom(op, c1, c2, m, max_size=40_000):
    """Textbook FOM on the assembled system, no truncation.

    Returns ``(hessenberg, residuals, formula_residuals, solutions)`` where
    ``residuals`` are directly computed ||b - A x_j|| and
    ``formula_residuals`` the cheap values h_{j+1,j} |e_j^T y_j|.  Entries are
    inf/None for steps where the projected matrix is singular.
    """
    a = materialize_kron(op, max_size=max_size)
    b = _rhs_vector(op, c1, c2)
    beta, q, h, _ = _arnoldi(a, b, m)
    residuals, formula, solutions = [], [], []
    m_done = h.shape[1]
    for j in range(1, m_done + 1):
        hsq = h[:j, :j]
        e1 = np.zeros(j)
        e1[0] = beta
        try:
            y = np.linalg.solve(hsq, e1)
        except np.linalg.LinAlgError:
            residuals.append(np.inf)
            formula.append(np.inf)
            solutions.append(None)
            continue
        xj = np.column_stack(q[:j]) @ y
        residuals.append(float(np.linalg.norm(b - a @ xj)))
        formula.append(float(h[j, j - 1] * abs(y[-1])))
        solutions.append(unvec(xj, (op.n_a, op.n_b)))
    return h, residuals, formula, solutions


def dense_cg(op, c1, c2, m, tol=0.0, max_size=40_000):
    """Textbook CG on the assembled system; returns (residuals, x)."""
    a = materialize_kron(op, max_size=max_size)
    b = _rhs_vector(op, c1, c2)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rho = float(r @ r)
    residuals = []
    for _ in range(m):
        q = a @ p
        alpha = rho / float(p @ q)
        x += alpha * p
        r -= alpha * q
        res = float(np.linalg.norm(r))
        residuals.append(res)
        if res <= tol:
            break
        rho_new = float(r @ r)
        p = r + (rho_new / rho) * p
        rho = rho_new
    return residuals, unvec(x, (op.n_a, op.n_b))


def dense_trunc_oracle(l, m, n, eps_rel, max_entries=1_000_000):
    """SVD compression reference on the materialized product ``L M N^T``.

    Returns ``(truncated, kept_rank, discarded_norm)``.  The kept count walks
    singular values from the smallest upward, dropping while the accumulated
    tail stays within ``eps_rel`` times the total energy; a zero threshold
    keeps the numerical rank.
    """
    l = np.asarray(l, dtype=float)
    n = np.asarray(n, dtype=float)
    if eps_rel < 0:
        raise ContractViolationError(f"eps_rel must be >= 0, got {eps_rel}")
    prod = l @ n.T if m is None else l @ np.asarray(m, dtype=float) @ n.T
    if prod.size > max_entries:
        raise ResourceLimitError(f"product with {prod.size} entries exceeds the guard")
    u, sig, wt = np.linalg.svd(prod, full_matrices=False)
    total_sq = float(np.sum(sig * sig))
    thr_sq = (eps_rel**2) * total_sq
    keep = len(sig)
    tail_sq = 0.0
    if total_sq == 0.0:
        keep = 0
    elif eps_rel > 0:
        while keep > 0 and tail_sq + sig[keep - 1] ** 2 <= thr_sq:
            tail_sq += sig[keep - 1] ** 2
            keep -= 1
    else:
        cutoff = max(prod.shape) * _EPS * sig[0]
        while keep > 0 and sig[keep - 1] <= cutoff:
            tail_sq += sig[keep - 1] ** 2
            keep -= 1
    truncated = (u[:, :keep] * sig[:keep]) @ wt[:keep]
    return truncated, keep, float(np.sqrt(tail_sq))
