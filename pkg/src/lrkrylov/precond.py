"""Right preconditioners with Kronecker-sum structure.

Supported kinds:

* ``one_term``: P = P_1 (x) T_1, applied exactly as (T_1^-1 V_l)(P_1^-1 V_r)^T.
* ``mean_based``: X -> K_0 X, the one-term special case with identity right
  factor.
* ``ullmann``: X -> K_0 X Gbar^T with the trace-weighted mean matrix Gbar.
* ``sylvester``: X -> A_s X + X B_s^T, applied either by a dense
  Bartels-Stewart solve with cached real Schur forms (desk scale) or by a
  fixed number of inner low-rank GMRES iterations (inexact; requires the
  flexible outer variant).
* ``inner_krylov``: P = the operator itself, applied by a fixed number of
  inner low-rank GMRES iterations.

Every ``apply_inverse`` first compresses the incoming factors at the spec's
``eps_precond`` (this is what keeps the preconditioned-basis storage bounded);
the internal ``exact=True`` mode skips that pre-truncation and tightens the
recompression, which is needed for final solution recovery and for spectral
estimation of the preconditioned operator, where the pre-truncation would act
as an uncontrolled nonlinear perturbation.

Factorizations are computed once in :func:`build`; application is pure and
safe to run concurrently afterwards.
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from scipy.linalg import get_lapack_funcs

from .errors import (
    ContractViolationError,
    FactorizationError,
    ResourceLimitError,
    SylvesterSingularityError,
)
from .kronop import MultitermOperator
from .lowrank import LowRankMatrix, compress, truncate_dense

_EXACT_RECOMPRESS = 1e-12


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class OneTermSpec:
    """P = p1 (x) t1; ``None`` stands for the identity."""

    t1: object
    p1: object = None
    eps_precond: float = 1e-3


@dataclass(frozen=True)
class MeanBasedSpec:
    """X -> K_0 X."""

    k0: object
    eps_precond: float = 1e-3


@dataclass(frozen=True)
class UllmannSpec:
    """X -> K_0 X Gbar^T with Gbar the trace-weighted combination of the G_i."""

    k_list: tuple
    g_list: tuple
    eps_precond: float = 1e-3


@dataclass(frozen=True)
class SylvesterSpec:
    """X -> A_s X + X B_s^T."""

    a_s: object
    b_s: object
    strategy: str = "direct_dense"  # or "inner_krylov"
    inner_iters: int = 10
    dense_guard: int = 6000
    eps_precond: float = 1e-3

    def __post_init__(self):
        if self.strategy not in ("direct_dense", "inner_krylov"):
            raise ContractViolationError(f"unknown sylvester strategy {self.strategy!r}")


@dataclass(frozen=True)
class InnerKrylovSpec:
    """P equals the operator itself, inverted by a fixed inner Krylov run."""

    op: MultitermOperator
    iters: int = 10
    eps_precond: float = 1e-3


# ---------------------------------------------------------------------------
# helpers

class _Factor:
    """One-time LU of a square matrix with (transposed) solves; None = identity."""

    def __init__(self, mat, name):
        self.name = name
        self.mat = mat
        if mat is None:
            self._solve = None
            return
        if sparse.issparse(mat):
            try:
                lu = spla.splu(mat.tocsc())
            except RuntimeError as exc:
                raise FactorizationError(f"factor {name} is singular: {exc}") from exc
            self._solve = lambda b, trans: lu.solve(b, trans="T" if trans else "N")
        else:
            dense = np.asarray(mat, dtype=float)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(dense, check_finite=False)
            if np.min(np.abs(np.diag(lu))) == 0.0:
                raise FactorizationError(f"factor {name} is singular")
            self._solve = lambda b, trans: sla.lu_solve((lu, piv), b, trans=1 if trans else 0)

    def solve(self, b, trans=False):
        if self._solve is None:
            return b
        return self._solve(b, trans)

    def matmul(self, b):
        if self.mat is None:
            return b
        return self.mat @ b


def _trace_inner(a, b):
    # trace(A^T B) as a sum of entrywise products, no matrix products formed
    if sparse.issparse(a) or sparse.issparse(b):
        asp = a if sparse.issparse(a) else sparse.csr_matrix(a)
        bsp = b if sparse.issparse(b) else sparse.csr_matrix(b)
        return float(asp.multiply(bsp).sum())
    return float(np.sum(np.asarray(a) * np.asarray(b)))


def ullmann_gbar(k_list, g_list):
    """Trace-weighted mean matrix sum_i trace(K_i^T K_0)/trace(K_0^T K_0) G_i."""
    if len(k_list) == 0 or len(k_list) != len(g_list):
        raise ContractViolationError("k_list and g_list must be nonempty and equally long")
    k0 = k_list[0]
    denom = _trace_inner(k0, k0)
    if denom <= 0.0:
        raise ContractViolationError("trace(K_0^T K_0) must be positive")
    gbar = None
    for ki, gi in zip(k_list, g_list):
        gi = gi.toarray() if sparse.issparse(gi) else np.asarray(gi, dtype=float)
        contrib = (_trace_inner(ki, k0) / denom) * gi
        gbar = contrib if gbar is None else gbar + contrib
    return gbar


def _quasi_tri_eigvals(t):
    # Eigenvalues read off the 1x1 / 2x2 diagonal blocks of a real Schur form.
    n = t.shape[0]
    vals = []
    i = 0
    while i < n:
        if i == n - 1 or t[i + 1, i] == 0.0:
            vals.append(complex(t[i, i]))
            i += 1
        else:
            a, b = t[i, i], t[i, i + 1]
            c, d = t[i + 1, i], t[i + 1, i + 1]
            tr = a + d
            disc = tr * tr - 4.0 * (a * d - b * c)
            root = np.sqrt(complex(disc))
            vals.append((tr + root) / 2.0)
            vals.append((tr - root) / 2.0)
            i += 2
    return np.asarray(vals)


# ---------------------------------------------------------------------------
# preconditioners

class Preconditioner:
    """Base class; concrete kinds implement ``_solve``/``_solve_transpose``."""

    kind = "?"
    supports_transpose = True

    def __init__(self, spec):
        self.spec = spec
        self.build_time = 0.0

    def apply_inverse(self, v, exact=False):
        """Apply P^-1 to a low-rank matrix.

        The input factors are first compressed at ``spec.eps_precond`` unless
        ``exact`` is set (see the module docstring).
        """
        if not exact:
            v = compress(v, self.spec.eps_precond).kept
        if v.rank == 0:
            return v
        return self._solve(v, exact)

    def apply_inverse_transpose(self, v, exact=False):
        if not self.supports_transpose:
            raise ContractViolationError(f"{self.kind} preconditioner has no transposed solve")
        if not exact:
            v = compress(v, self.spec.eps_precond).kept
        if v.rank == 0:
            return v
        return self._solve_transpose(v, exact)

    def apply(self, v):
        """Apply the forward operator P (exact kinds only; used by tests)."""
        raise NotImplementedError


class _OneTermBase(Preconditioner):
    def __init__(self, spec, t1, p1, names=("t1", "p1")):
        super().__init__(spec)
        self._t = _Factor(t1, names[0])
        self._p = _Factor(p1, names[1])

    def _solve(self, v, exact):
        return LowRankMatrix(self._t.solve(v.left), self._p.solve(v.right))

    def _solve_transpose(self, v, exact):
        return LowRankMatrix(self._t.solve(v.left, trans=True), self._p.solve(v.right, trans=True))

    def apply(self, v):
        return LowRankMatrix(self._t.matmul(v.left), self._p.matmul(v.right))


class OneTermPreconditioner(_OneTermBase):
    kind = "one_term"

    def __init__(self, spec):
        super().__init__(spec, spec.t1, spec.p1)


class MeanBasedPreconditioner(_OneTermBase):
    kind = "mean_based"

    def __init__(self, spec):
        super().__init__(spec, spec.k0, None, names=("k0", "identity"))


class UllmannPreconditioner(_OneTermBase):
    kind = "ullmann"

    def __init__(self, spec):
        gbar = ullmann_gbar(spec.k_list, spec.g_list)
        super().__init__(spec, spec.k_list[0], gbar, names=("k0", "gbar"))
        self.gbar = gbar


class SylvesterDirectPreconditioner(Preconditioner):
    """Dense Bartels-Stewart application with cached real Schur forms."""

    kind = "sylvester"

    def __init__(self, spec):
        super().__init__(spec)
        a = spec.a_s.toarray() if sparse.issparse(spec.a_s) else np.asarray(spec.a_s, dtype=float)
        b = spec.b_s.toarray() if sparse.issparse(spec.b_s) else np.asarray(spec.b_s, dtype=float)
        if max(a.shape[0], b.shape[0]) > spec.dense_guard:
            raise ResourceLimitError(
                f"dense Sylvester solve guarded at n <= {spec.dense_guard}; "
                "use strategy='inner_krylov' for larger problems"
            )
        self._ta, self._ua = sla.schur(a, output="real")
        self._tb, self._ub = sla.schur(b, output="real")
        la = _quasi_tri_eigvals(self._ta)
        lb = _quasi_tri_eigvals(self._tb)
        scale_ref = max(np.max(np.abs(la)), np.max(np.abs(lb)), 1.0)
        sep = min(np.min(np.abs(la_i + lb)) for la_i in la)
        if sep <= 1e-12 * scale_ref:
            raise SylvesterSingularityError(
                "spectra of A and -B^T overlap; the Sylvester operator is singular"
            )
        (self._trsyl,) = get_lapack_funcs(("trsyl",), (self._ta, self._tb))

    def _bartels_stewart(self, rhs, transposed):
        f = self._ua.T @ rhs @ self._ub
        trana, tranb = ("T", "N") if transposed else ("N", "T")
        y, scale_, info = self._trsyl(self._ta, self._tb, f, isgn=1, trana=trana, tranb=tranb)
        if info < 0:
            raise FactorizationError(f"trsyl failed with illegal argument {-info}")
        if info == 1:
            raise SylvesterSingularityError("Sylvester equation is numerically singular")
        return self._ua @ (y / scale_) @ self._ub.T

    def _solve(self, v, exact):
        y = self._bartels_stewart(v.left @ v.right.T, transposed=False)
        tol = _EXACT_RECOMPRESS if exact else self.spec.eps_precond
        return truncate_dense(y, tol).kept

    def _solve_transpose(self, v, exact):
        y = self._bartels_stewart(v.left @ v.right.T, transposed=True)
        tol = _EXACT_RECOMPRESS if exact else self.spec.eps_precond
        return truncate_dense(y, tol).kept

    def apply(self, v):
        a, b = self.spec.a_s, self.spec.b_s
        return LowRankMatrix(np.hstack([a @ v.left, v.left]), np.hstack([v.right, b @ v.right]))


class InnerKrylovPreconditioner(Preconditioner):
    """Fixed-iteration inner low-rank GMRES application (inexact).

    Being inexact, this preconditioner varies from call to call, so the outer
    solver must run its flexible variant.
    """

    kind = "inner_krylov"
    supports_transpose = False

    def __init__(self, spec, op, iters):
        super().__init__(spec)
        self._op = op
        self._iters = iters

    def _solve(self, v, exact):
        from .krylov import SolverConfig, solve  # local import avoids a cycle

        cfg = SolverConfig(
            variant="gmres",
            m_max=self._iters,
            eps=1e-8,
            schedule="fixed",
            check_orthonormality=False,
        )
        # the engine solves sum A X B^T = -C1 C2^T, so negate to invert P y = v
        y, _ = solve(self._op, -v.left, v.right, cfg)
        return y

    def apply(self, v):
        return self._op.apply(v)


class SylvesterInnerPreconditioner(InnerKrylovPreconditioner):
    kind = "sylvester"

    def __init__(self, spec):
        n_a = spec.a_s.shape[0]
        n_b = spec.b_s.shape[0]
        op = MultitermOperator(
            ((spec.a_s, sparse.identity(n_b, format="csr")),
             (sparse.identity(n_a, format="csr"), spec.b_s))
        )
        super().__init__(spec, op, spec.inner_iters)


def build(spec):
    """Build a preconditioner from its spec, computing factorizations once."""
    t0 = time.perf_counter()
    if isinstance(spec, OneTermSpec):
        prec = OneTermPreconditioner(spec)
    elif isinstance(spec, MeanBasedSpec):
        prec = MeanBasedPreconditioner(spec)
    elif isinstance(spec, UllmannSpec):
        prec = UllmannPreconditioner(spec)
    elif isinstance(spec, SylvesterSpec):
        if spec.strategy == "direct_dense":
            prec = SylvesterDirectPreconditioner(spec)
        else:
            prec = SylvesterInnerPreconditioner(spec)
    elif isinstance(spec, InnerKrylovSpec):
        prec = InnerKrylovPreconditioner(spec, spec.op, spec.iters)
    else:
        raise ContractViolationError(f"unknown preconditioner spec {type(spec).__name__}")
    prec.build_time = time.perf_counter() - t0
    return prec


def convdiff_mean_precond(problem, x_side="phi1"):
    """Sylvester spec for the convection-diffusion problem.

    Freezes the separable convection coefficients at their interval means:
    the y-average of psi_1(y) = y on (0, 1) is 1/2 and the x-average of
    phi_2(x) = -2(2x+1) is -4 (both analytic).  ``x_side`` selects which
    diagonal multiplies the x-derivative in the left coefficient: ``"phi1"``
    (default, matches the equation structure) or ``"psi1"``.
    """
    if x_side not in ("phi1", "psi1"):
        raise ContractViolationError(f"x_side must be 'phi1' or 'psi1', got {x_side!r}")
    psi1_mean = 0.5
    phi2_mean = -4.0
    xdiag = problem.phi1 if x_side == "phi1" else problem.psi1
    a_s = problem.nu * problem.t_mat + psi1_mean * (xdiag @ problem.b_mat)
    # right coefficient enters as X @ B_s^T with B_s^T = nu T + phi2_mean B^T Psi2
    b_s = problem.nu * problem.t_mat + phi2_mean * (problem.psi2 @ problem.b_mat)
    return SylvesterSpec(a_s=a_s, b_s=b_s)
