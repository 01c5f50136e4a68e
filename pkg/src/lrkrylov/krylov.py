"""Low-rank GMRES and FOM for multiterm linear matrix equations.

The engine solves ``sum_i A_i X B_i^T + C1 C2^T = 0`` entirely in factored
arithmetic.  Each iteration applies the operator to the newest basis matrix,
compresses the result under a per-iteration discard budget, orthogonalizes
with two classical Gram-Schmidt passes (coefficients accumulated over both
passes, compression after each pass), and updates a Givens-rotation
factorization of the small Hessenberg matrix so residual estimates cost O(m).

Two sources of inexactness are tracked explicitly: the discarded norms of the
post-product compressions and of the orthogonalization compressions.  The
reported stopping bound is the computed residual plus the recorded discarded
norms weighted by the current small-system solution coefficients, so the true
residual never exceeds it.  The discard budgets may grow as the computed
residual falls (relaxation); the growth rate is steered by estimates of the
extreme singular values of the (preconditioned) operator.

Right preconditioning only.  With ``flexible=True`` the preconditioned basis
is stored and the solution is recovered from it, which keeps the method sound
when the preconditioner application is inexact (pre-truncated factors, inner
Krylov solves).
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolationError, NumericError
from .kronop import SpectralEstimates, estimate_extremes
from .lowrank import LowRankMatrix, concat_scaled, fro_norm, inner, trunc

_EPS = float(np.finfo(float).eps)
_VARIANTS = ("gmres", "fom")
_SCHEDULES = ("relaxed_sigma", "relaxed_kappa", "fixed")


def _clamp(tol):
    return float(min(max(tol, _EPS), 0.5))


@dataclass
class SolverConfig:
    """Configuration of a low-rank Krylov solve.

    ``schedule`` picks how the per-iteration discard budget for the operator
    product grows as the computed residual falls: ``relaxed_sigma`` divides by
    the smallest singular value estimate, ``relaxed_kappa`` by the condition
    number estimate, ``fixed`` keeps ``eps / m_max`` throughout.  ``c1``
    (smallest singular value) and ``c2`` (condition number) override the
    estimates.  ``pinned_trunc_tol`` short-circuits every truncation tolerance
    to one fixed relative value (used for exact-regime equivalence checks).
    """

    variant: str = "gmres"
    m_max: int = 50
    eps: float = 1e-6
    schedule: str = "relaxed_sigma"
    c1: float | None = None
    c2: float | None = None
    eps_orth_cap: float | None = None  # defaults to eps / m_max
    flexible: bool = False
    eps_precond: float = 1e-3
    pinned_trunc_tol: float | None = None
    est_steps: int = 20
    est_tol: float = 1e-8
    seed: int = 0
    check_orthonormality: bool = True
    stagnation_stop: bool = False
    keep_state: bool = False  # attach the Arnoldi state to the report (diagnostics)

    def __post_init__(self):
        if self.variant not in _VARIANTS + ("cg",):
            raise ContractViolationError(f"unknown variant {self.variant!r}")
        if self.schedule not in _SCHEDULES:
            raise ContractViolationError(f"unknown schedule {self.schedule!r}")
        if not (0.0 < self.eps < 1.0):
            raise ContractViolationError(f"eps must be in (0, 1), got {self.eps}")
        if self.m_max < 1:
            raise ContractViolationError(f"m_max must be >= 1, got {self.m_max}")

    @property
    def orth_cap(self):
        return self.eps / self.m_max if self.eps_orth_cap is None else self.eps_orth_cap


@dataclass
class ArnoldiState:
    """Mutable per-solve state of the low-rank Arnoldi process.

    ``basis`` holds the unit-norm low-rank basis matrices, ``z_basis`` the
    preconditioned companions in flexible mode.  ``u_cols``/``g`` carry the
    Givens-triangularized small least-squares problem; ``fom_diags``/``g_pre``
    record the pre-rotation diagonal and rhs entry needed for the Galerkin
    (FOM) residual estimate and reduced solve.  ``e_norms``/``f_norms`` are
    the recorded discarded norms of the two compression stages.
    """

    beta: float
    basis: list = field(default_factory=list)
    z_basis: list | None = None
    hess_cols: list = field(default_factory=list)
    givens: list = field(default_factory=list)
    u_cols: list = field(default_factory=list)
    g: np.ndarray = None
    fom_diags: list = field(default_factory=list)
    g_pre: list = field(default_factory=list)
    e_norms: list = field(default_factory=list)
    f_norms: list = field(default_factory=list)
    eps_a_used: list = field(default_factory=list)
    eps_orth_used: list = field(default_factory=list)

    def __post_init__(self):
        if self.g is None:
            self.g = np.array([self.beta])

    @property
    def iterations(self):
        return len(self.hess_cols)

    def hessenberg(self):
        """Assemble the (m+1) x m Hessenberg matrix from the stored columns."""
        m = self.iterations
        h = np.zeros((m + 1, m))
        for j, col in enumerate(self.hess_cols):
            h[: j + 2, j] = col
        return h


@dataclass
class SolveReport:
    """Per-solve diagnostics.

    Residual and bound histories are absolute; divide by ``beta`` for the
    normalized values (``rel_residuals``/``rel_bounds``).  ``columns_s`` is
    the total number of stored basis factor columns, ``columns_z`` the same
    for the preconditioned basis in flexible mode.  ``true_residual_final``
    is the relative residual of the returned solution recomputed through the
    operator.  For the conjugate-gradient solver, ``cg_rank_sums`` holds the
    per-iteration sum of iterate ranks and ``columns_s`` its maximum.
    """

    variant: str
    schedule: str
    iterations: int
    termination: str
    beta: float
    computed_residuals: list
    bounds: list
    eps_a_used: list
    eps_orth_used: list
    ranks_per_iter: list
    z_ranks: list
    columns_s: int
    columns_z: int
    solution_rank: int
    true_residual_final: float
    rel_bound_final: float
    max_offdiag_inner: float | None
    max_norm_drift: float | None
    wall_time: float
    estimates: SpectralEstimates | None = None
    hessenberg: np.ndarray | None = None
    cg_rank_sums: list | None = None
    state: "ArnoldiState | None" = None

    @property
    def rel_residuals(self):
        return [r / self.beta for r in self.computed_residuals]

    @property
    def rel_bounds(self):
        return [b / self.beta for b in self.bounds]


# ---------------------------------------------------------------------------
# schedules

def eps_a_schedule(k, prev_computed_residual, config, estimates=None):
    """Discard budget for the operator-product compression at iteration k.

    ``relaxed_sigma``: (c1 / m_max) * eps / ||r_{k-1}||, c1 the smallest
    singular value estimate; ``relaxed_kappa``: eps / (m_max * c2 * ||r_{k-1}||)
    with c2 the condition estimate; ``fixed``: eps / m_max.  The result is a
    Frobenius discard budget, nonincreasing in the previous residual and
    clamped to [machine eps, 0.5].

    The caller fixes the residual normalization; :func:`solve` passes the
    computed residual normalized by beta (1 at k == 1), which calibrates the
    budgets to the absolute gap target ``eps * beta`` implied by the relative
    stopping rule.
    """
    if prev_computed_residual <= 0:
        raise ContractViolationError("previous computed residual must be positive")
    if config.schedule == "fixed":
        val = config.eps / config.m_max
    elif config.schedule == "relaxed_sigma":
        c1 = config.c1
        if c1 is None:
            if estimates is None:
                raise ContractViolationError("relaxed_sigma needs estimates or a c1 override")
            c1 = estimates.sigma_min
        val = (c1 / config.m_max) * config.eps / prev_computed_residual
    else:  # relaxed_kappa
        c2 = config.c2
        if c2 is None:
            if estimates is None:
                raise ContractViolationError("relaxed_kappa needs estimates or a c2 override")
            c2 = estimates.kappa
        val = config.eps / (config.m_max * c2 * prev_computed_residual)
    return _clamp(val)


def eps_orth_value(eps_a_k, config):
    """Relative tolerance for the Gram-Schmidt compressions.

    The orthogonalization discard is kept at least as small as the current
    operator-product budget and never above ``eps / m_max``.
    """
    return float(min(eps_a_k, config.orth_cap))


# ---------------------------------------------------------------------------
# small dense recurrences

def _rotation(a, b):
    r = float(np.hypot(a, b))
    if r == 0.0 or b == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def givens_update(state, column):
    """Absorb a new Hessenberg column into the rotation factorization.

    Applies the stored rotations, records the Galerkin (FOM) residual
    estimate ``|h_{m+1,m} (e_m^T g) / (e_m^T U e_m)|`` from the pre-rotation
    quantities (infinite when that diagonal vanishes: the Galerkin iterate
    does not exist at this step), then forms the new rotation, the
    triangular column, and the transformed rhs.  Returns the pair
    ``(gmres_residual, fom_residual)`` of computed residual norms.
    """
    col = np.asarray(column, dtype=float)
    m = len(state.givens) + 1
    if col.shape != (m + 1,):
        raise ContractViolationError(
            f"expected a column of length {m + 1} at iteration {m}, got {col.shape}"
        )
    h = col.copy()
    for i, (c, s) in enumerate(state.givens):
        h[i], h[i + 1] = c * h[i] + s * h[i + 1], -s * h[i] + c * h[i + 1]
    fom_diag = h[m - 1]
    g_last = float(state.g[m - 1])
    h_next = col[m]
    fom_res = np.inf if fom_diag == 0.0 else abs(h_next * g_last / fom_diag)
    state.fom_diags.append(fom_diag)
    state.g_pre.append(g_last)

    c, s = _rotation(h[m - 1], h[m])
    h[m - 1] = c * h[m - 1] + s * h[m]
    state.givens.append((c, s))
    state.u_cols.append(h[:m].copy())
    g = np.append(state.g, 0.0)
    g[m - 1], g[m] = c * g[m - 1], -s * g[m - 1]
    state.g = g
    return float(abs(g[m])), float(fom_res)


def _solve_reduced(state, m, variant):
    """Coefficients of the current iterate in the basis; None when singular.

    The reduced system is the triangularized least-squares problem for the
    residual-minimizing variant, or the Galerkin system (pre-rotation last
    diagonal and rhs entry) for the FOM variant.  The returned vector already
    carries the sign that makes ``sum_j y_j v_j`` the approximate solution of
    ``sum_i A_i X B_i^T = -C1 C2^T``.
    """
    u = np.zeros((m, m))
    for j in range(m):
        u[: j + 1, j] = state.u_cols[j]
    g = state.g[:m].copy()
    if variant == "fom":
        u = u.copy()
        u[m - 1, m - 1] = state.fom_diags[m - 1]
        g[m - 1] = state.g_pre[m - 1]
    if np.min(np.abs(np.diag(u))) == 0.0:
        return None
    y = sla.solve_triangular(u, g, check_finite=False)
    return -y


def residual_bound(state, y, computed_residual):
    """Upper bound on the true residual from the recorded discarded norms.

    computed residual + sum_j (||E_j|| + ||F_j||) |y_j|; every run records the
    actual discarded norms, so this is tighter than the threshold-based form
    while still an upper bound.
    """
    m = len(y)
    acc = float(computed_residual)
    for j in range(m):
        acc += (state.e_norms[j] + state.f_norms[j]) * abs(float(y[j]))
    return acc


def recover_solution(state, y, eps, use_z=False, truncator=trunc):
    """Combine the stored basis with coefficients y and compress at ``eps``.

    In flexible mode the preconditioned basis is the one that spans the
    solution space, so ``use_z`` selects it.
    """
    basis = state.z_basis if use_z else state.basis
    m = len(y)
    if m == 0:
        raise ContractViolationError("empty coefficient vector")
    terms = [(float(y[j]), basis[j]) for j in range(m)]
    return truncator(*concat_scaled(terms), eps).kept


# ---------------------------------------------------------------------------
# spectral estimates for the schedules

class _RightPreconditioned:
    """Composite operator A P^-1 for spectral estimation (exact applications)."""

    def __init__(self, op, prec):
        self._op = op
        self._prec = prec
        self.n_a = op.n_a
        self.n_b = op.n_b

    def apply(self, x):
        return self._op.apply(self._prec.apply_inverse(x, exact=True))

    def apply_adjoint(self, x):
        return self._prec.apply_inverse_transpose(self._op.apply_adjoint(x), exact=True)


def _resolve_estimates(op, precond, config):
    if config.schedule == "fixed" or config.pinned_trunc_tol is not None:
        return None
    if config.schedule == "relaxed_sigma" and config.c1 is not None:
        return None
    if config.schedule == "relaxed_kappa" and config.c2 is not None:
        return None
    target = op
    if precond is not None and getattr(precond, "supports_transpose", False):
        target = _RightPreconditioned(op, precond)
    return estimate_extremes(target, steps=config.est_steps, tol=config.est_tol, seed=config.seed)


# ---------------------------------------------------------------------------
# the solver

def _as_rhs_factor(c, n, name):
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[0] != n:
        raise ContractViolationError(f"{name} must be {n} x q, got shape {c.shape}")
    if c.size and not np.isfinite(c).all():
        raise NumericError(f"{name} contains non-finite entries")
    return c


def true_relative_residual(op, c1, c2, x):
    """|| sum_i A_i X B_i^T + C1 C2^T || / ||C1 C2^T|| in factored arithmetic."""
    rhs = LowRankMatrix(c1, c2)
    beta = fro_norm(rhs)
    if x.rank == 0:
        return 1.0 if beta > 0 else 0.0
    ax = op.apply(x)
    stacked = LowRankMatrix(np.hstack([c1, ax.left]), np.hstack([c2, ax.right]))
    # the QR+SVD route reads the norm off the core singular values, which is
    # safe under the heavy cancellation of a converged residual
    norm = trunc(stacked.left, None, stacked.right, 0.0).input_norm
    return norm / beta


def _orthonormality_stats(basis):
    max_off = 0.0
    max_drift = 0.0
    for i, vi in enumerate(basis):
        max_drift = max(max_drift, abs(fro_norm(vi) - 1.0))
        for vj in basis[:i]:
            max_off = max(max_off, abs(inner(vi, vj)))
    return max_off, max_drift


def _zero_report(config, beta, wall):
    return SolveReport(
        variant=config.variant,
        schedule=config.schedule,
        iterations=0,
        termination="converged",
        beta=beta,
        computed_residuals=[],
        bounds=[],
        eps_a_used=[],
        eps_orth_used=[],
        ranks_per_iter=[],
        z_ranks=[],
        columns_s=0,
        columns_z=0,
        solution_rank=0,
        true_residual_final=0.0,
        rel_bound_final=0.0,
        max_offdiag_inner=0.0,
        max_norm_drift=0.0,
        wall_time=wall,
    )


def solve(op, c1, c2, config=None, precond=None, truncator=trunc):
    """Run low-rank GMRES or FOM on ``sum_i A_i X B_i^T + C1 C2^T = 0``.

    The initial guess is zero.  Returns ``(solution, report)`` where the
    solution is a :class:`LowRankMatrix`.  ``truncator`` is the pluggable
    compression routine; it must follow the :func:`~lrkrylov.lowrank.trunc`
    contract (only the QR+SVD routine ships with the package).

    Stops when the normalized residual bound falls below ``config.eps``, on a
    rank-deficient final column (invariant subspace reached: the reduced
    problem is then solved exactly), or at ``m_max`` iterations.
    """
    cfg = config if config is not None else SolverConfig()
    if cfg.variant not in _VARIANTS:
        raise ContractViolationError(f"solve handles variants {_VARIANTS}, got {cfg.variant!r}")
    t0 = time.perf_counter()
    c1 = _as_rhs_factor(c1, op.n_a, "c1")
    c2 = _as_rhs_factor(c2, op.n_b, "c2")
    if c1.shape[1] != c2.shape[1]:
        raise ContractViolationError("c1 and c2 must have the same number of columns")

    beta = fro_norm(LowRankMatrix(c1, c2))
    if beta == 0.0:
        return LowRankMatrix.zeros(op.n_a, op.n_b), _zero_report(
            cfg, 0.0, time.perf_counter() - t0
        )

    flexible = cfg.flexible and precond is not None
    estimates = _resolve_estimates(op, precond, cfg)
    sb = np.sqrt(beta)
    state = ArnoldiState(beta=beta, basis=[LowRankMatrix(c1 / sb, c2 / sb)])
    if flexible:
        state.z_basis = []

    computed, bounds = [], []
    # the schedule runs on the normalized residual: the stopping target is
    # relative, so the discard budgets must be calibrated to the absolute
    # target eps * beta, which cancels the beta in the residual
    prev_res = 1.0
    termination = "max_iters"
    n_iters = 0

    for m in range(1, cfg.m_max + 1):
        v = state.basis[m - 1]
        if flexible:
            z = precond.apply_inverse(v)
            state.z_basis.append(z)
            src = z
        elif precond is not None:
            src = precond.apply_inverse(v)
        else:
            src = v
        w = op.apply(src)

        if cfg.pinned_trunc_tol is not None:
            eps_a = cfg.pinned_trunc_tol
            rel_a = cfg.pinned_trunc_tol
        else:
            eps_a = eps_a_schedule(m, prev_res, cfg, estimates)
            wnorm = fro_norm(w)
            rel_a = _clamp(eps_a / wnorm) if wnorm > 0 else 0.0
        tr = truncator(w.left, None, w.right, rel_a)
        vbar = tr.kept
        state.e_norms.append(tr.discarded_norm)
        state.eps_a_used.append(eps_a)

        e_orth = eps_orth_value(eps_a, cfg)
        if cfg.pinned_trunc_tol is not None:
            e_orth = cfg.pinned_trunc_tol
        state.eps_orth_used.append(e_orth)

        h_col = np.zeros(m + 1)
        f_norm = 0.0
        for _ in range(2):
            coeffs = np.array([inner(state.basis[j], vbar) for j in range(m)])
            h_col[:m] += coeffs
            terms = [(1.0, vbar)] + [(-coeffs[j], state.basis[j]) for j in range(m)]
            tr2 = truncator(*concat_scaled(terms), e_orth)
            vbar = tr2.kept
            f_norm += tr2.discarded_norm
        state.f_norms.append(f_norm)

        h_next = fro_norm(vbar)
        h_col[m] = h_next
        state.hess_cols.append(h_col)
        gm_res, fom_res = givens_update(state, h_col)
        r_tilde = fom_res if cfg.variant == "fom" else gm_res
        computed.append(r_tilde)

        y = _solve_reduced(state, m, cfg.variant) if np.isfinite(r_tilde) else None
        bounds.append(residual_bound(state, y, r_tilde) if y is not None else np.inf)
        n_iters = m

        happy = h_next < 1e-14 * beta
        if np.isfinite(bounds[-1]) and bounds[-1] < cfg.eps * beta:
            termination = "converged"
            break
        if happy:
            # invariant subspace: the reduced problem solves the projected
            # equation exactly, so return what it gives
            termination = "converged"
            break
        if m < cfg.m_max:
            rt = np.sqrt(h_next)
            state.basis.append(LowRankMatrix(vbar.left / rt, vbar.right / rt))
        prev_res = max(gm_res / beta, _EPS)

    wall = time.perf_counter() - t0
    y = _solve_reduced(state, n_iters, cfg.variant)
    ranks = [v.rank for v in state.basis]
    z_ranks = [z.rank for z in (state.z_basis or [])]
    if y is None:
        report = SolveReport(
            variant=cfg.variant,
            schedule=cfg.schedule,
            iterations=n_iters,
            termination="breakdown",
            beta=beta,
            computed_residuals=computed,
            bounds=bounds,
            eps_a_used=state.eps_a_used,
            eps_orth_used=state.eps_orth_used,
            ranks_per_iter=ranks,
            z_ranks=z_ranks,
            columns_s=sum(ranks),
            columns_z=sum(z_ranks),
            solution_rank=0,
            true_residual_final=1.0,
            rel_bound_final=np.inf,
            max_offdiag_inner=None,
            max_norm_drift=None,
            wall_time=wall,
            estimates=estimates,
            hessenberg=state.hessenberg(),
        )
        return LowRankMatrix.zeros(op.n_a, op.n_b), report

    # Recover the solution at the target accuracy, then tighten the recovery
    # tolerance if the operator amplifies the discarded part beyond the
    # reported bound (stiff problems magnify high-frequency discards by up to
    # sigma_max).  The untruncated combination always satisfies the bound, so
    # this terminates.  The reported bound carries a round-off allowance for
    # the Givens recurrences and factored norm evaluations; the stopping-rule
    # values in ``bounds`` stay exact-arithmetic quantities.
    allowance = 64.0 * _EPS * max(n_iters, 1)
    tol_rec = cfg.eps if cfg.pinned_trunc_tol is None else cfg.pinned_trunc_tol
    target = bounds[-1] / beta + allowance if bounds else np.inf
    if termination == "converged":
        target = min(target, cfg.eps)
    sol = None
    true_rel = np.inf
    for _ in range(8):
        sol = recover_solution(state, y, tol_rec, use_z=flexible, truncator=truncator)
        if precond is not None and not flexible:
            sol = precond.apply_inverse(sol, exact=True)
        true_rel = true_relative_residual(op, c1, c2, sol)
        if not np.isfinite(target) or true_rel <= target or tol_rec <= 1e-15:
            break
        tol_rec = max(tol_rec * min(0.25 * target / true_rel, 0.25), 1e-15)
    max_off = max_drift = None
    if cfg.check_orthonormality:
        max_off, max_drift = _orthonormality_stats(state.basis)

    report = SolveReport(
        variant=cfg.variant,
        schedule=cfg.schedule,
        iterations=n_iters,
        termination=termination,
        beta=beta,
        computed_residuals=computed,
        bounds=bounds,
        eps_a_used=state.eps_a_used,
        eps_orth_used=state.eps_orth_used,
        ranks_per_iter=ranks,
        z_ranks=z_ranks,
        columns_s=sum(ranks),
        columns_z=sum(z_ranks),
        solution_rank=sol.rank,
        true_residual_final=true_rel,
        rel_bound_final=bounds[-1] / beta + allowance if bounds else 0.0,
        max_offdiag_inner=max_off,
        max_norm_drift=max_drift,
        wall_time=time.perf_counter() - t0,
        estimates=estimates,
        hessenberg=state.hessenberg(),
        state=state if cfg.keep_state else None,
    )
    return sol, report
