"""Factored low-rank matrices and orthogonality-preserving compression.

A matrix is stored as the product ``left @ right.T`` of two skinny factors.
The compression routine :func:`trunc` computes thin QR factorizations of both
factors, an SVD of the small core, and keeps the leading singular triplets
until the discarded tail energy drops below the requested relative tolerance.
Because the kept and discarded parts are built from disjoint singular vectors
of the same orthonormal bases, they are block-orthogonal: ``F.T @ E == 0`` and
``E @ G == 0`` for the kept factors ``F, G`` and discarded part ``E``.  This
property is what keeps Krylov bases orthonormal under repeated compression.

All operations here are pure; :class:`LowRankMatrix` is an immutable value.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, NumericError, ResourceLimitError

_EPS = float(np.finfo(float).eps)

#: Condition-number threshold above which fro_norm switches from the Gram
#: route to the QR route.
GRAM_COND_LIMIT = 1e8


def _as_factor(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractViolationError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


def _check_finite(a, name):
    if a.size and not np.isfinite(a).all():
        raise NumericError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class LowRankMatrix:
    """A matrix represented by the factors ``left @ right.T``.

    ``left`` is ``n_A x k`` and ``right`` is ``n_B x k``.  ``k == 0`` encodes
    the zero matrix.  ``k`` is the number of stored columns, an upper bound on
    the true rank.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = _as_factor(self.left, "left")
        right = _as_factor(self.right, "right")
        if left.shape[1] != right.shape[1]:
            raise ContractViolationError(
                f"factor column counts differ: {left.shape[1]} vs {right.shape[1]}"
            )
        _check_finite(left, "left factor")
        _check_finite(right, "right factor")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    @property
    def rank(self):
        """Number of stored factor columns (a bound on the true rank)."""
        return self.left.shape[1]

    @classmethod
    def zeros(cls, n_a, n_b):
        return cls(np.zeros((n_a, 0)), np.zeros((n_b, 0)))


@dataclass(frozen=True)
class TruncationResult:
    """Outcome of a compression call.

    ``discarded_norm`` is the Frobenius norm of the discarded part,
    ``input_norm`` the Frobenius norm of the uncompressed product (both exact
    up to round-off, read off the core singular values).
    """

    kept: LowRankMatrix
    discarded_norm: float
    kept_rank: int
    input_norm: float


def scale(x, c):
    """Return ``c * x`` with the coefficient split evenly over both factors.

    Negative coefficients go entirely into the left factor.
    """
    if x.rank == 0 or c == 1.0:
        return x
    r = np.sqrt(abs(c))
    sgn = 1.0 if c >= 0 else -1.0
    return LowRankMatrix(sgn * r * x.left, r * x.right)


def inner(x, y):
    """Frobenius inner product <X, Y> via small Gram matrices.

    Uses trace((Y_l^T X_l)(X_r^T Y_r)), so only k x k matrices are formed;
    the cost is O(n * k_x * k_y).
    """
    if x.shape != y.shape:
        raise ContractViolationError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.rank == 0 or y.rank == 0:
        return 0.0
    a = y.left.T @ x.left
    b = x.right.T @ y.right
    return float(np.sum(a * b.T))


def fro_norm(x):
    """Frobenius norm of a factored matrix.

    The Gram-trace route is used by default.  When the Gram product is badly
    conditioned (> 1e8), or the trace is negative or tiny relative to the
    factor scales (catastrophic cancellation, typical for residual-like
    quantities), the norm is recomputed from thin QR factors and the singular
    values of the small core.
    """
    if x.rank == 0:
        return 0.0
    if x.rank == 1:
        return float(np.linalg.norm(x.left[:, 0]) * np.linalg.norm(x.right[:, 0]))
    gl = x.left.T @ x.left
    gr = x.right.T @ x.right
    prod = gl @ gr
    val = float(np.trace(prod))
    scale2 = float(np.trace(gl)) * float(np.trace(gr))
    cond = np.linalg.cond(prod)
    if val <= 0.0 or val < 1e-10 * scale2 or not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        rl = np.linalg.qr(x.left, mode="r")
        rn = np.linalg.qr(x.right, mode="r")
        s = np.linalg.svd(rl @ rn.T, compute_uv=False)
        return float(np.linalg.norm(s))
    return float(np.sqrt(val))


def _keep_count(sig, eps_rel, dim):
    """Smallest kept count whose tail energy meets the relative tolerance.

    With a zero threshold (eps_rel == 0 or a vanishing total) the cutoff
    falls back to the numerical rank dim * eps * sigma_1 so that numerically
    zero columns are never stored.
    """
    total = float(np.linalg.norm(sig))
    tail = np.sqrt(np.concatenate([np.cumsum((sig * sig)[::-1])[::-1], [0.0]]))
    thr = eps_rel * total
    if thr > 0.0:
        kbar = int(np.argmax(tail <= thr))
    else:
        kbar = int(np.count_nonzero(sig > dim * _EPS * sig[0]))
    discarded = float(tail[kbar])
    return kbar, discarded


def trunc(left, mid, right, eps_rel):
    """Compress the triple product ``left @ mid @ right.T``.

    Thin QR of both outer factors, SVD of the small core, then the smallest
    number of triplets is kept such that the discarded tail satisfies
    ``sqrt(sum_{i>k} sigma_i^2) <= eps_rel * ||Sigma||_F``.  Kept factors carry
    the balanced ``sqrt(sigma)`` scaling so both stay equally conditioned.

    Parameters
    ----------
    left : (n, r_l) array
    mid : (r_l, r_n) array or None
        ``None`` is shorthand for the identity (requires ``r_l == r_n``).
    right : (n', r_n) array
    eps_rel : float
        Relative Frobenius tolerance, >= 0.  Zero keeps the numerical rank.

    Returns
    -------
    TruncationResult
    """
    ml = _as_factor(left, "left factor")
    mn = _as_factor(right, "right factor")
    if eps_rel < 0:
        raise ContractViolationError(f"eps_rel must be >= 0, got {eps_rel}")
    if mid is None:
        if ml.shape[1] != mn.shape[1]:
            raise ContractViolationError(
                f"identity core needs matching column counts, got {ml.shape[1]} vs {mn.shape[1]}"
            )
        mm = None
    else:
        mm = np.asarray(mid, dtype=float)
        if mm.ndim != 2 or ml.shape[1] != mm.shape[0] or mn.shape[1] != mm.shape[1]:
            raise ContractViolationError(
                f"core shape {mm.shape} does not match factors {ml.shape} x {mn.shape}"
            )
        _check_finite(mm, "core factor")
    _check_finite(ml, "left factor")
    _check_finite(mn, "right factor")

    n_a, n_b = ml.shape[0], mn.shape[0]
    if ml.shape[1] == 0 or mn.shape[1] == 0:
        return TruncationResult(LowRankMatrix.zeros(n_a, n_b), 0.0, 0, 0.0)

    ql, rl = np.linalg.qr(ml, mode="reduced")
    qn, rn = np.linalg.qr(mn, mode="reduced")
    core = rl @ rn.T if mm is None else rl @ mm @ rn.T
    u, sig, wt = np.linalg.svd(core, full_matrices=False)
    input_norm = float(np.linalg.norm(sig))
    if input_norm == 0.0:
        return TruncationResult(LowRankMatrix.zeros(n_a, n_b), 0.0, 0, 0.0)

    kbar, discarded = _keep_count(sig, eps_rel, max(n_a, n_b))
    root = np.sqrt(sig[:kbar])
    f = ql @ (u[:, :kbar] * root)
    g = qn @ (wt[:kbar].T * root)
    return TruncationResult(LowRankMatrix(f, g), discarded, kbar, input_norm)


def compress(x, eps_rel):
    """Compress a :class:`LowRankMatrix` in place of its own factors."""
    return trunc(x.left, None, x.right, eps_rel)


def truncate_dense(a, eps_rel):
    """Compress a dense matrix with the same tail rule as :func:`trunc`."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractViolationError(f"expected a 2-d array, got shape {a.shape}")
    _check_finite(a, "dense input")
    u, sig, wt = np.linalg.svd(a, full_matrices=False)
    input_norm = float(np.linalg.norm(sig))
    if input_norm == 0.0:
        return TruncationResult(LowRankMatrix.zeros(*a.shape), 0.0, 0, 0.0)
    kbar, discarded = _keep_count(sig, eps_rel, max(a.shape))
    root = np.sqrt(sig[:kbar])
    return TruncationResult(
        LowRankMatrix(u[:, :kbar] * root, wt[:kbar].T * root), discarded, kbar, input_norm
    )


def concat_scaled(terms):
    """Stack scaled low-rank terms into (L, Theta, N) ready for :func:`trunc`.

    ``terms`` is a sequence of ``(coefficient, LowRankMatrix)`` pairs sharing
    outer dimensions.  The result represents ``sum_i c_i X_i`` without forming
    anything dense: L and N concatenate the factors and Theta is the diagonal
    matrix with blocks ``c_i * I_{k_i}``.
    """
    terms = list(terms)
    if not terms:
        raise ContractViolationError("concat_scaled needs at least one term")
    shape = terms[0][1].shape
    for c, x in terms:
        if x.shape != shape:
            raise ContractViolationError(f"outer dimension mismatch: {x.shape} vs {shape}")
        if not np.isfinite(c):
            raise NumericError("non-finite coefficient in concat_scaled")
    lefts = np.hstack([x.left for _, x in terms])
    rights = np.hstack([x.right for _, x in terms])
    diag = np.concatenate([np.full(x.rank, float(c)) for c, x in terms])
    return lefts, np.diag(diag), rights


def materialize(x, max_entries=1_000_000):
    """Return ``left @ right.T`` densely (guarded; test/desk-scale support)."""
    n_a, n_b = x.shape
    if n_a * n_b > max_entries:
        raise ResourceLimitError(
            f"materializing a {n_a} x {n_b} matrix exceeds the guard of {max_entries} entries"
        )
    return x.left @ x.right.T
