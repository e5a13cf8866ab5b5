"""Dense and sparse linear algebra kernels used throughout the package.

Dense matrices are plain 2-D float64 ``numpy.ndarray`` objects (row-major).
The two spectral routines that the whole inf-sup machinery rests on --
``svd`` (one-sided Jacobi) and ``sym_eig`` (cyclic Jacobi) -- are implemented
here directly so that small singular values are computed to high relative
accuracy and so the two routes stay independent of each other.  Factor-based
solves (``lu_solve``, ``cholesky``) delegate the factorization itself to
LAPACK via scipy/numpy but keep the error contracts of this module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularMatrix(ValueError):
    """A pivot fell below the singularity threshold during factorization."""


class NotPositiveDefinite(ValueError):
    """Cholesky hit a non-positive diagonal pivot."""


class IndexOutOfRange(IndexError):
    """Triplet index outside the declared matrix shape."""


#: relative pivot threshold for lu_solve (× max initial column norm)
PIVOT_RTOL = 1e-14

#: relative symmetry tolerance required before cholesky / sym_eig
SYMMETRY_RTOL = 1e-12


def _as_dense(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _require_symmetric(a: np.ndarray, what: str) -> None:
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return
    if np.linalg.norm(a - a.T) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{what} requires a symmetric matrix "
                         f"(relative asymmetry > {SYMMETRY_RTOL:g})")


# ---------------------------------------------------------------------------
# factor-based solves
# ---------------------------------------------------------------------------

def lu_solve(a, b) -> np.ndarray:
    """Solve ``a x = b`` by LU with partial pivoting.

    Raises ``SingularMatrix`` when any pivot magnitude drops below
    ``PIVOT_RTOL`` times the largest initial column norm.  ``b`` may be a
    vector or a matrix of right-hand sides.
    """
    a = _as_dense(a)
    n, m = a.shape
    if n != m:
        raise ValueError("lu_solve needs a square matrix")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n:
        raise ValueError("right-hand side length mismatch")
    if n == 0:
        return b.copy()

    col_scale = float(np.max(np.linalg.norm(a, axis=0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")      # we do our own pivot check below
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(lu)) or np.min(pivots) <= PIVOT_RTOL * col_scale:
        raise SingularMatrix(
            f"pivot {np.min(pivots):.3e} below threshold "
            f"{PIVOT_RTOL * col_scale:.3e}")
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite solution from LU back substitution")
    return x


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with ``L Lᵀ = a`` for symmetric positive definite a."""
    a = _as_dense(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("cholesky needs a square matrix")
    _require_symmetric(a, "cholesky")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


# ---------------------------------------------------------------------------
# one-sided Jacobi SVD
# ---------------------------------------------------------------------------

#: off-diagonal Gram entries below this (relative to the column norms) are
#: considered annihilated
JACOBI_TOL = 1e-14

#: relative rank tolerance factor: rank_tol = RANK_RTOL * max(m, n)
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Full singular value decomposition ``a = u @ diag_{m,n}(sigma) @ v.T``."""

    u: np.ndarray            # (m, m) orthogonal
    sigma: np.ndarray        # (min(m, n),) non-negative, descending
    v: np.ndarray            # (n, n) orthogonal
    rank_tol: float
    numerical_rank: int

    def sigma_matrix(self) -> np.ndarray:
        """The m×n diagonal extension of ``sigma``."""
        m, n = self.u.shape[0], self.v.shape[0]
        s = np.zeros((m, n))
        k = len(self.sigma)
        s[:k, :k] = np.diag(self.sigma)
        return s

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.sigma_matrix() @ self.v.T


def _jacobi_orthogonalize(w: np.ndarray, max_sweeps: int = 100):
    """Orthogonalize the columns of ``w`` in place by Jacobi rotations.

    Returns the accumulated right rotation matrix V (so original_w = w_out
    with w_out = original_w @ V, columns of w_out mutually orthogonal).
    """
    m, n = w.shape
    v = np.eye(n)
    if n < 2:
        return v
    # columns whose norm is negligible against the largest are frozen: their
    # content is round-off and rotating against them never converges in the
    # relative criterion
    norm_floor = 1e-15 * math.sqrt(float(np.max(np.sum(w * w, axis=0))) or 1.0)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            wi = w[:, i]
            aii = float(wi @ wi)
            for j in range(i + 1, n):
                wj = w[:, j]
                ajj = float(wj @ wj)
                small, big = min(aii, ajj), max(aii, ajj)
                if small <= norm_floor * norm_floor:
                    continue
                aij = float(wi @ wj)
                if abs(aij) <= JACOBI_TOL * math.sqrt(aii * ajj):
                    continue
                rotated = True
                zeta = (ajj - aii) / (2.0 * aij)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                tmp = c * wi - s * wj
                w[:, j] = s * wi + c * wj
                w[:, i] = tmp
                wi = w[:, i]
                aii = float(wi @ wi)
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
        if not rotated:
            return v
    raise RuntimeError("one-sided Jacobi SVD did not converge")


def _householder_completion(u_cols: np.ndarray, m: int) -> np.ndarray:
    """Orthonormal basis of the complement of span(u_cols) in R^m."""
    k = u_cols.shape[1]
    if k == 0:
        return np.eye(m)
    q = np.eye(m)
    a = u_cols.copy()
    for j in range(k):
        x = a[j:, j]
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            continue
        alpha = -math.copysign(nx, x[0] if x[0] != 0.0 else 1.0)
        vref = x.copy()
        vref[0] -= alpha
        nv = float(np.linalg.norm(vref))
        if nv == 0.0:
            continue
        vref /= nv
        a[j:, j:] -= 2.0 * np.outer(vref, vref @ a[j:, j:])
        q[:, j:] -= 2.0 * np.outer(q[:, j:] @ vref, vref)
    return q[:, k:]


def svd(a, rank_tol: float | None = None) -> SvdResult:
    """One-sided Jacobi singular value decomposition with full U and V.

    ``rank_tol`` is the relative tolerance defining the numerical rank
    (count of sigma[i] > rank_tol * sigma[0]); the default is
    ``RANK_RTOL * max(m, n)``.
    """
    a = _as_dense(a)
    m, n = a.shape
    if max(m, n) > 5000:
        raise ValueError("svd is limited to matrices up to 5000 on a side")
    if rank_tol is None:
        rank_tol = RANK_RTOL * max(m, n, 1)

    transposed = m < n
    work = (a.T if transposed else a).copy()
    rows, cols = work.shape                      # rows >= cols

    vmat = _jacobi_orthogonalize(work)
    norms = np.linalg.norm(work, axis=0)
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    work = work[:, order]
    vmat = vmat[:, order]

    sig_max = norms[0] if len(norms) else 0.0
    keep = norms > 1e-15 * sig_max if sig_max > 0.0 else np.zeros(cols, bool)
    u_cols = np.zeros((rows, cols))
    u_cols[:, keep] = work[:, keep] / norms[keep]
    # columns whose singular value is at round-off level are rebuilt from the
    # orthogonal complement instead of normalizing noise
    n_keep = int(np.count_nonzero(keep))
    completion = _householder_completion(u_cols[:, :n_keep], rows)
    u_cols[:, n_keep:] = completion[:, : cols - n_keep]
    u_full = np.hstack([u_cols, completion[:, cols - n_keep:]])
    sigma = norms.copy()

    if transposed:
        u, v = vmat, u_full
    else:
        u, v = u_full, vmat

    rank = int(np.count_nonzero(sigma > rank_tol * sig_max)) if sig_max > 0 else 0
    return SvdResult(u=u, sigma=sigma, v=v, rank_tol=rank_tol,
                     numerical_rank=rank)


# ---------------------------------------------------------------------------
# cyclic Jacobi symmetric eigensolver
# ---------------------------------------------------------------------------

def sym_eig(a, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues descending, eigenvector matrix Q)`` with
    ``a @ Q = Q @ diag(eigenvalues)``.
    """
    a = _as_dense(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("sym_eig needs a square matrix")
    _require_symmetric(a, "sym_eig")

    w = a.copy()
    q = np.eye(n)
    scale = float(np.linalg.norm(w))
    if scale == 0.0 or n == 1:
        lam = np.diag(w).copy()
        order = np.argsort(-lam, kind="stable")
        return lam[order], q[:, order]

    stop = JACOBI_TOL * scale
    diag_idx = np.diag_indices(n)
    for _ in range(max_sweeps):
        # off-diagonal Frobenius mass, summed directly (a difference of the
        # full and diagonal sums cancels catastrophically near convergence)
        held = w[diag_idx].copy()
        w[diag_idx] = 0.0
        off = float(np.linalg.norm(w))
        w[diag_idx] = held
        if off <= stop:
            break
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                aij = w[i, j]
                # skipping everything below stop/n keeps the total skipped
                # off-diagonal mass under the convergence target
                if abs(aij) <= stop / n:
                    continue
                rotated = True
                theta = (w[j, j] - w[i, i]) / (2.0 * aij)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                # two-sided rotation on rows/cols i, j
                wi = w[i, :].copy()
                w[i, :] = c * wi - s * w[j, :]
                w[j, :] = s * wi + c * w[j, :]
                wi = w[:, i].copy()
                w[:, i] = c * wi - s * w[:, j]
                w[:, j] = s * wi + c * w[:, j]
                w[i, j] = 0.0
                w[j, i] = 0.0
                qi = q[:, i].copy()
                q[:, i] = c * qi - s * q[:, j]
                q[:, j] = s * qi + c * q[:, j]
        if not rotated:
            break
    else:
        raise RuntimeError("cyclic Jacobi eigensolver did not converge")

    lam = np.diag(w).copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], q[:, order]


# ---------------------------------------------------------------------------
# CSR sparse matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix (sorted column indices, no duplicates)."""

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.cols:
            raise ValueError("matvec length mismatch")
        counts = np.diff(self.row_ptr)
        row_of = np.repeat(np.arange(self.rows), counts)
        return np.bincount(row_of, weights=self.values * x[self.col_idx],
                           minlength=self.rows)

    def rmatvec(self, y) -> np.ndarray:
        """Transpose product ``Aᵀ y``."""
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows:
            raise ValueError("rmatvec length mismatch")
        counts = np.diff(self.row_ptr)
        row_of = np.repeat(np.arange(self.rows), counts)
        return np.bincount(self.col_idx, weights=self.values * y[row_of],
                           minlength=self.cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        counts = np.diff(self.row_ptr)
        row_of = np.repeat(np.arange(self.rows), counts)
        out[row_of, self.col_idx] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        counts = np.diff(self.row_ptr)
        row_of = np.repeat(np.arange(self.rows), counts)
        return csr_from_arrays(self.cols, self.rows,
                               self.col_idx, row_of, self.values)

    def scaled(self, factor: float) -> "CsrMatrix":
        return CsrMatrix(self.rows, self.cols, self.row_ptr,
                         self.col_idx, factor * self.values)

    def add(self, other: "CsrMatrix") -> "CsrMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch in CSR add")
        counts_a = np.diff(self.row_ptr)
        counts_b = np.diff(other.row_ptr)
        i = np.concatenate([np.repeat(np.arange(self.rows), counts_a),
                            np.repeat(np.arange(other.rows), counts_b)])
        j = np.concatenate([self.col_idx, other.col_idx])
        v = np.concatenate([self.values, other.values])
        return csr_from_arrays(self.rows, self.cols, i, j, v)


def csr_from_arrays(rows: int, cols: int, i, j, v) -> CsrMatrix:
    """Build a CSR matrix from parallel index/value arrays, summing duplicates."""
    i = np.asarray(i, dtype=np.int64).ravel()
    j = np.asarray(j, dtype=np.int64).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if not (len(i) == len(j) == len(v)):
        raise ValueError("triplet arrays must have equal length")
    if len(i) and (i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols):
        raise IndexOutOfRange("triplet index outside matrix shape")

    if len(i) == 0:
        return CsrMatrix(rows, cols, np.zeros(rows + 1, np.int64),
                         np.zeros(0, np.int64), np.zeros(0))

    order = np.lexsort((j, i))
    i, j, v = i[order], j[order], v[order]
    new_group = np.empty(len(i), bool)
    new_group[0] = True
    new_group[1:] = (i[1:] != i[:-1]) | (j[1:] != j[:-1])
    starts = np.flatnonzero(new_group)
    summed = np.add.reduceat(v, starts)
    iu, ju = i[starts], j[starts]
    row_ptr = np.zeros(rows + 1, np.int64)
    np.add.at(row_ptr, iu + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return CsrMatrix(rows, cols, row_ptr, ju, summed)


def csr_from_triplets(rows: int, cols: int, entries) -> CsrMatrix:
    """Build a CSR matrix from an iterable of ``(i, j, value)`` triplets."""
    entries = list(entries)
    if not entries:
        return csr_from_arrays(rows, cols, [], [], [])
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("entries must be (i, j, value) triplets")
    i = arr[:, 0]
    j = arr[:, 1]
    if np.any(i != np.round(i)) or np.any(j != np.round(j)):
        raise IndexOutOfRange("non-integer triplet index")
    return csr_from_arrays(rows, cols, i.astype(np.int64),
                           j.astype(np.int64), arr[:, 2])
