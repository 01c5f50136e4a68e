"""Benchmark problem generators and Matrix Market / manifest file I/O.

Two families are provided:

* a convection-diffusion equation on the unit square discretized with
  centered finite differences, which yields a four-term matrix equation with
  separable convection coefficients;
* a synthetic stochastic-diffusion problem: a diffusion coefficient given by
  a fixed cosine mode expansion with algebraically decaying amplitudes and
  independent uniform random variables, discretized with a conservative
  five-point stencil in space and an orthonormal Legendre chaos of bounded
  total degree in the stochastic directions.

Both generators are deterministic: identical inputs produce bitwise-identical
matrices.  The emitted right-hand-side factors follow the solver convention
``sum_i A_i X B_i^T + C1 C2^T = 0``, i.e. the solver's vectorized right-hand
side is ``-vec(C1 C2^T)``.

Problems round-trip through a JSON manifest that names Matrix Market files
for every term factor and the right-hand-side factors; paths are relative to
the manifest location.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sparse

from .errors import ContractViolationError, ParseError, ValidationError
from .kronop import MultitermOperator

MANIFEST_FORMAT = "lrkrylov-problem"


# ---------------------------------------------------------------------------
# convection-diffusion

@dataclass(frozen=True)
class ConvDiffProblem:
    """Four-term discretization of -nu Lap(u) + w . grad(u) = const."""

    n: int
    nu: float
    t_mat: sparse.csr_matrix
    b_mat: sparse.csr_matrix
    phi1: sparse.csr_matrix
    psi1: sparse.csr_matrix
    phi2: sparse.csr_matrix
    psi2: sparse.csr_matrix
    op: MultitermOperator
    c1: np.ndarray
    c2: np.ndarray


def gen_convdiff(n, nu):
    """Generate the convection-diffusion matrix equation on an n x n grid.

    Uniform interior grid x_i = i h, h = 1/(n+1) on (0, 1); T is the scaled
    negative second-difference matrix, B the centered first-difference matrix
    (exactly skew-symmetric).  The convection field is
    w = ((1 - (2x+1)^2) y, -2(2x+1)(1 - y^2)) and enters through the diagonal
    nodal-value matrices Phi_i, Psi_i.  The right-hand-side factors are the
    all-ones vectors.
    """
    if n < 3:
        raise ContractViolationError(f"n must be >= 3, got {n}")
    if nu <= 0:
        raise ContractViolationError(f"nu must be positive, got {nu}")
    h = 1.0 / (n + 1)
    x = h * np.arange(1, n + 1)
    t_mat = (sparse.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)) / h**2).tocsr()
    b_mat = (sparse.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2 * h)).tocsr()
    phi1 = sparse.diags(1.0 - (2 * x + 1) ** 2).tocsr()
    psi1 = sparse.diags(x).tocsr()
    phi2 = sparse.diags(-2.0 * (2 * x + 1)).tocsr()
    psi2 = sparse.diags(1.0 - x**2).tocsr()
    eye = sparse.identity(n, format="csr")
    nu_t = (nu * t_mat).tocsr()
    op = MultitermOperator((
        (nu_t, eye),
        (eye, nu_t),
        (phi1 @ b_mat, psi1),
        (phi2, psi2 @ b_mat),
    ))
    ones = np.ones((n, 1))
    return ConvDiffProblem(
        n=n, nu=nu, t_mat=t_mat, b_mat=b_mat,
        phi1=phi1, psi1=psi1, phi2=phi2, psi2=psi2,
        op=op, c1=ones, c2=ones.copy(),
    )


# ---------------------------------------------------------------------------
# synthetic stochastic diffusion

@dataclass(frozen=True)
class StochasticDiffusionProblem:
    """Galerkin matrices of the synthetic stochastic diffusion equation."""

    n_x: int
    n_sigma: int
    r: int
    degree: int
    theta: float
    k_list: tuple
    g_list: tuple
    f0: np.ndarray
    g0: np.ndarray
    op: MultitermOperator
    c1: np.ndarray
    c2: np.ndarray


def _total_degree_indices(r, degree):
    # graded lexicographic multi-indices alpha in N^r with |alpha| <= degree
    if r == 0:
        return [()]
    out = []
    for total in range(degree + 1):
        def rec(prefix, remaining, slots):
            if slots == 1:
                out.append(tuple(prefix + [remaining]))
                return
            for v in range(remaining, -1, -1):
                rec(prefix + [v], remaining - v, slots - 1)
        rec([], total, r)
    return out


def legendre_coupling(index):
    """Recurrence weight a_j = (j+1)/sqrt((2j+1)(2j+3)) of the orthonormal
    Legendre basis on uniform(-1, 1): sigma psi_j = a_j psi_{j+1} + a_{j-1} psi_{j-1}."""
    j = index
    return (j + 1) / math.sqrt((2 * j + 1) * (2 * j + 3))


def _chaos_multiplication_matrices(r, degree):
    idxs = _total_degree_indices(r, degree)
    pos = {a: i for i, a in enumerate(idxs)}
    n_sigma = len(idxs)
    gs = []
    for slot in range(r):
        g = np.zeros((n_sigma, n_sigma))
        for a, i in pos.items():
            up = list(a)
            up[slot] += 1
            j = pos.get(tuple(up))
            if j is not None:
                w = legendre_coupling(a[slot])
                g[i, j] = w
                g[j, i] = w
        gs.append(g)
    return idxs, gs


def _mode_field(i, theta):
    if i == 0:
        return lambda x, y: np.ones_like(x)
    amp = theta / i**2
    return lambda x, y: amp * np.cos(i * np.pi * x) * np.cos(i * np.pi * y)


def _diffusion_stiffness(n, coeff):
    """Five-point conservative stencil with midpoint coefficients, unscaled.

    Interior nodes x_i = i h on (0, 1)^2 with h = 1/(n+1); homogeneous
    Dirichlet boundary.  The 1/h^2 factor is folded into the right-hand side.
    """
    h = 1.0 / (n + 1)
    xi = h * np.arange(1, n + 1)
    xg, yg = np.meshgrid(xi, xi, indexing="ij")
    a_e = coeff(xg + h / 2, yg)
    a_w = coeff(xg - h / 2, yg)
    a_n = coeff(xg, yg + h / 2)
    a_s = coeff(xg, yg - h / 2)

    def node(i, j):
        return i * n + j

    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(n):
            k = node(i, j)
            rows.append(k)
            cols.append(k)
            vals.append(a_e[i, j] + a_w[i, j] + a_n[i, j] + a_s[i, j])
            if i + 1 < n:
                rows.append(k)
                cols.append(node(i + 1, j))
                vals.append(-a_e[i, j])
            if i > 0:
                rows.append(k)
                cols.append(node(i - 1, j))
                vals.append(-a_w[i, j])
            if j + 1 < n:
                rows.append(k)
                cols.append(node(i, j + 1))
                vals.append(-a_n[i, j])
            if j > 0:
                rows.append(k)
                cols.append(node(i, j - 1))
                vals.append(-a_s[i, j])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))


def gen_stochastic(n_grid, r, degree, theta=0.3):
    """Generate the synthetic stochastic diffusion matrix equation.

    The diffusion coefficient is 1 + theta * sum_{i=1}^r i^-2 cos(i pi x)
    cos(i pi y) sigma_i with independent uniform(-1, 1) random variables; the
    admissibility bound theta * sum i^-2 < 1 guarantees positivity for every
    realization and hence a positive definite assembled operator.  The
    stochastic blocks are the multiplication-by-sigma_i matrices in the
    orthonormal Legendre chaos of total degree <= ``degree``.  The rhs comes
    from the constant source f = 1 scaled by h^2, paired with the first
    chaos coordinate vector.
    """
    if n_grid < 2:
        raise ContractViolationError(f"n_grid must be >= 2, got {n_grid}")
    if r < 0 or degree < 1:
        raise ContractViolationError("need r >= 0 and degree >= 1")
    amplitude = theta * sum(1.0 / i**2 for i in range(1, r + 1))
    if r > 0 and amplitude >= 1.0:
        raise ContractViolationError(
            f"inadmissible theta: theta * sum(i^-2) = {amplitude:.6g} must be < 1 "
            "to keep the coefficient positive for every realization"
        )
    k_list = [_diffusion_stiffness(n_grid, _mode_field(i, theta)) for i in range(r + 1)]
    idxs, gs = _chaos_multiplication_matrices(r, degree)
    n_sigma = len(idxs)
    g_list = [np.eye(n_sigma)] + gs
    n_x = n_grid * n_grid
    h = 1.0 / (n_grid + 1)
    f0 = (h**2) * np.ones(n_x)
    g0 = np.zeros(n_sigma)
    g0[0] = 1.0
    op = MultitermOperator(tuple(zip(k_list, g_list)))
    return StochasticDiffusionProblem(
        n_x=n_x, n_sigma=n_sigma, r=r, degree=degree, theta=theta,
        k_list=tuple(k_list), g_list=tuple(g_list), f0=f0, g0=g0,
        op=op, c1=-f0[:, None], c2=g0[:, None],
    )


# ---------------------------------------------------------------------------
# Matrix Market + manifest I/O

def write_mm(path, mat):
    """Write a matrix in Matrix Market exchange format (full precision)."""
    scipy.io.mmwrite(str(path), mat, precision=17)


def _first_malformed_line(path):
    # best-effort scan for the earliest structurally broken line
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError:
        return None
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        return 1
    body = 0
    declared = None
    coordinate = "coordinate" in lines[0]
    for no, line in enumerate(lines[1:], start=2):
        if line.startswith("%") or not line.strip():
            continue
        toks = line.split()
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            return no
        if declared is None:
            declared = int(vals[2]) if coordinate and len(vals) >= 3 else None
            if coordinate and len(vals) != 3:
                return no
            continue
        body += 1
        if coordinate and len(toks) != 3:
            return no
        if not coordinate and len(toks) != 1:
            return no
    if declared is not None and body < declared:
        return len(lines) + 1
    return None


def read_mm(path):
    """Read a Matrix Market file; sparse data comes back in CSR format."""
    try:
        mat = scipy.io.mmread(str(path))
    except Exception as exc:
        raise ParseError(str(exc), path=str(path), line=_first_malformed_line(path)) from exc
    if sparse.issparse(mat):
        return mat.tocsr()
    return np.asarray(mat, dtype=float)


def write_problem(out_dir, op, c1, c2, kind="custom", params=None):
    """Write a problem as Matrix Market files plus a JSON manifest.

    Term matrices that are the same object are written once and shared in the
    manifest.  Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seen = {}
    counter = 0

    def store(mat):
        nonlocal counter
        key = id(mat)
        if key not in seen:
            name = f"m{counter}.mtx"
            counter += 1
            write_mm(out / name, mat)
            seen[key] = name
        return seen[key]

    terms = [{"a": store(a), "b": store(b)} for a, b in op.terms]
    c1 = np.atleast_2d(np.asarray(c1, dtype=float))
    c2 = np.atleast_2d(np.asarray(c2, dtype=float))
    if c1.shape[0] == 1 and op.n_a > 1:
        c1 = c1.T
    if c2.shape[0] == 1 and op.n_b > 1:
        c2 = c2.T
    write_mm(out / "c1.mtx", c1)
    write_mm(out / "c2.mtx", c2)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "kind": kind,
        "params": params or {},
        "n_a": op.n_a,
        "n_b": op.n_b,
        "terms": terms,
        "rhs": {"c1": "c1.mtx", "c2": "c2.mtx"},
    }
    mpath = out / "problem.json"
    mpath.write_text(json.dumps(manifest, indent=2) + "\n")
    return mpath


def read_problem(manifest_path):
    """Load a problem manifest; returns ``(op, c1, c2, meta)``.

    Raises :class:`ParseError` on malformed files and
    :class:`ValidationError` when the referenced matrices are mutually
    inconsistent.
    """
    mpath = Path(manifest_path)
    try:
        meta = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(mpath), line=exc.lineno) from exc
    except OSError as exc:
        raise ParseError(str(exc), path=str(mpath)) from exc
    for key in ("format", "n_a", "n_b", "terms", "rhs"):
        if key not in meta:
            raise ValidationError(f"manifest {mpath} is missing the {key!r} field")
    if meta["format"] != MANIFEST_FORMAT:
        raise ValidationError(f"unknown manifest format {meta['format']!r}")
    base = mpath.parent
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = read_mm(base / name)
        return cache[name]

    terms = []
    for i, entry in enumerate(meta["terms"]):
        a = load(entry["a"])
        b = load(entry["b"])
        if a.shape != (meta["n_a"], meta["n_a"]) or b.shape != (meta["n_b"], meta["n_b"]):
            raise ValidationError(
                f"term {i} has shapes {a.shape} x {b.shape}, manifest declares "
                f"{meta['n_a']} and {meta['n_b']}"
            )
        terms.append((a, b))
    c1 = np.asarray(load(meta["rhs"]["c1"]), dtype=float)
    c2 = np.asarray(load(meta["rhs"]["c2"]), dtype=float)
    if c1.ndim == 1:
        c1 = c1[:, None]
    if c2.ndim == 1:
        c2 = c2[:, None]
    if c1.shape[0] != meta["n_a"] or c2.shape[0] != meta["n_b"] or c1.shape[1] != c2.shape[1]:
        raise ValidationError(
            f"rhs factor shapes {c1.shape}, {c2.shape} are inconsistent with the manifest"
        )
    return MultitermOperator(tuple(terms)), c1, c2, meta
