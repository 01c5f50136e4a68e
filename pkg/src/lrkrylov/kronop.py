"""Matrix-free multiterm Kronecker-sum operators.

A :class:`MultitermOperator` holds the coefficient pairs ``(A_i, B_i)`` of the
operator ``sum_i B_i (x) A_i`` acting on matrices as ``X -> sum_i A_i X B_i^T``.
The operator is never assembled; applications act on the factors of a
:class:`~lrkrylov.lowrank.LowRankMatrix` and return a factored result with
column count ``p * k`` (no compression is performed here).

The extreme singular values needed by the truncation-budget schedules are
estimated with Golub-Kahan bidiagonalization run entirely in low-rank
arithmetic, with full reorthogonalization of the carrier matrices.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .errors import ContractViolationError, NumericError, ResourceLimitError
from .lowrank import LowRankMatrix, compress, concat_scaled, fro_norm, inner, scale, trunc


def vec(x):
    """Column-stacking vectorization, so that (B (x) A) vec(X) = vec(A X B^T)."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(x, shape):
    """Inverse of :func:`vec`."""
    return np.asarray(x).reshape(shape, order="F")


def _is_square(m):
    return m.ndim == 2 and m.shape[0] == m.shape[1]


def _coerce_term(m, name):
    if sparse.issparse(m):
        if m.shape[0] != m.shape[1]:
            raise ContractViolationError(f"{name} must be square, got shape {m.shape}")
        return m.tocsr()
    m = np.asarray(m, dtype=float)
    if not _is_square(m):
        raise ContractViolationError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class MultitermOperator:
    """The operator ``X -> sum_i A_i X B_i^T`` given by term pairs (A_i, B_i).

    All A_i share one dimension n_A and all B_i share n_B; each factor only
    needs matrix-vector products (sparse or dense storage both work).
    Instances are immutable and safe to share between threads.
    """

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ContractViolationError("an operator needs at least one term")
        coerced = []
        for i, (a, b) in enumerate(self.terms):
            coerced.append((_coerce_term(a, f"A_{i}"), _coerce_term(b, f"B_{i}")))
        n_a = coerced[0][0].shape[0]
        n_b = coerced[0][1].shape[0]
        for i, (a, b) in enumerate(coerced):
            if a.shape[0] != n_a or b.shape[0] != n_b:
                raise ContractViolationError(
                    f"term {i} has shapes {a.shape} x {b.shape}, expected {n_a} and {n_b}"
                )
        object.__setattr__(self, "terms", tuple(coerced))

    @property
    def p(self):
        return len(self.terms)

    @property
    def n_a(self):
        return self.terms[0][0].shape[0]

    @property
    def n_b(self):
        return self.terms[0][1].shape[0]

    def _check_operand(self, x):
        if x.shape != (self.n_a, self.n_b):
            raise ContractViolationError(
                f"operand shape {x.shape} does not match operator ({self.n_a}, {self.n_b})"
            )

    def apply(self, x):
        """Apply the operator: factors [A_1 X_l, ..., A_p X_l], [B_1 X_r, ...]."""
        self._check_operand(x)
        if x.rank == 0:
            return LowRankMatrix.zeros(self.n_a, self.n_b)
        left = np.hstack([a @ x.left for a, _ in self.terms])
        right = np.hstack([b @ x.right for _, b in self.terms])
        return LowRankMatrix(left, right)

    def apply_adjoint(self, x):
        """Apply the adjoint operator, i.e. the terms (A_i^T, B_i^T)."""
        self._check_operand(x)
        if x.rank == 0:
            return LowRankMatrix.zeros(self.n_a, self.n_b)
        left = np.hstack([a.T @ x.left for a, _ in self.terms])
        right = np.hstack([b.T @ x.right for _, b in self.terms])
        return LowRankMatrix(left, right)


@dataclass(frozen=True)
class SpectralEstimates:
    """Extreme singular value estimates of the (preconditioned) operator.

    ``sigma_min`` from a short bidiagonalization run is generally an
    overestimate of the true smallest singular value; callers may override
    both values (source == "user_supplied").
    """

    sigma_max: float
    sigma_min: float
    source: str = "estimated"

    def __post_init__(self):
        if self.source not in ("estimated", "user_supplied"):
            raise ContractViolationError(f"unknown estimate source {self.source!r}")
        if not (self.sigma_max >= self.sigma_min > 0):
            raise ContractViolationError(
                f"need sigma_max >= sigma_min > 0, got {self.sigma_max}, {self.sigma_min}"
            )

    @property
    def kappa(self):
        return self.sigma_max / self.sigma_min


def materialize_kron(op, max_size=40_000):
    """Assemble ``sum_i B_i (x) A_i`` as a sparse matrix (guarded).

    The Kronecker ordering is vec-compatible: (B (x) A) vec(X) = vec(A X B^T)
    with column-stacking vec.
    """
    n = op.n_a * op.n_b
    if n > max_size:
        raise ResourceLimitError(
            f"assembled operator would be {n} x {n}, above the guard of {max_size}"
        )
    acc = None
    for a, b in op.terms:
        asp = a if sparse.issparse(a) else sparse.csr_matrix(a)
        bsp = b if sparse.issparse(b) else sparse.csr_matrix(b)
        k = sparse.kron(bsp, asp, format="csr")
        acc = k if acc is None else acc + k
    return acc


def _reorthogonalize(x, basis, tol):
    # Two classical Gram-Schmidt passes against the stored carriers, with a
    # compression after each pass to keep the factor growth bounded.
    for _ in range(2):
        if not basis or x.rank == 0:
            break
        coeffs = [inner(b, x) for b in basis]
        terms = [(1.0, x)] + [(-c, b) for c, b in zip(coeffs, basis)]
        x = trunc(*concat_scaled(terms), tol).kept
    return x


def estimate_extremes(op, steps=20, tol=1e-8, seed=0):
    """Estimate extreme singular values by Golub-Kahan bidiagonalization.

    The Lanczos carriers are low-rank matrices compressed with the fixed
    tolerance ``tol`` after every operator application and reorthogonalization
    pass; reorthogonalization is full.  On breakdown (a vanishing bidiagonal
    coefficient, e.g. an exhausted Krylov space) the estimates from the
    completed steps are returned, which are then exact.

    ``op`` only needs ``apply``/``apply_adjoint`` methods and ``n_a``/``n_b``
    attributes, so right-preconditioned composites work too.
    """
    if steps < 2:
        raise ContractViolationError(f"steps must be >= 2, got {steps}")
    rng = np.random.default_rng(seed)
    b = LowRankMatrix(rng.standard_normal((op.n_a, 1)), rng.standard_normal((op.n_b, 1)))
    u = scale(b, 1.0 / fro_norm(b))
    us, vs = [u], []
    alphas, betas = [], []
    for j in range(steps):
        w = compress(op.apply_adjoint(us[-1]), tol).kept
        w = _reorthogonalize(w, vs, tol)
        a = fro_norm(w)
        if not np.isfinite(a):
            raise NumericError("non-finite value in bidiagonalization")
        if a <= 1e-12 * max(alphas + betas + [1.0]):
            break
        alphas.append(a)
        vs.append(scale(w, 1.0 / a))
        if j == steps - 1:
            break
        w = compress(op.apply(vs[-1]), tol).kept
        w = _reorthogonalize(w, us, tol)
        bn = fro_norm(w)
        if not np.isfinite(bn):
            raise NumericError("non-finite value in bidiagonalization")
        if bn <= 1e-12 * max(alphas + betas):
            break
        betas.append(bn)
        us.append(scale(w, 1.0 / bn))
    if not alphas:
        raise NumericError("bidiagonalization broke down immediately; operator looks zero")
    bidiag = np.diag(alphas)
    if betas:
        k = len(alphas)
        bidiag += np.diag(betas[: k - 1], -1)
    svals = np.linalg.svd(bidiag, compute_uv=False)
    return SpectralEstimates(float(svals[0]), float(svals[-1]), source="estimated")
