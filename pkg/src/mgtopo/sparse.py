"""Sparse linear-algebra substrate.

Matrices are plain :class:`scipy.sparse.csr_matrix` objects in canonical
form (sorted column indices, no duplicates). This module adds the few
kernels the solvers need on top of that: a deterministic mat-vec, Gauss-Seidel
sweeps and a banded Cholesky factorization with an optional dense border
(the "arrow" structure of the augmented interior-point matrix).
"""
from __future__ import annotations

import numpy as np
import scipy.io
import scipy.linalg as sl
import scipy.sparse as sp
from numba import njit

__all__ = [
    "NotPositiveDefiniteError",
    "as_csr",
    "spmv",
    "is_symmetric",
    "gauss_seidel_sweep",
    "CholeskyFactor",
    "cholesky_factor",
    "write_matrix_market",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not positive."""

    def __init__(self, pivot):
        self.pivot = int(pivot)
        super().__init__(f"matrix not positive definite (pivot {self.pivot})")


def as_csr(A):
    """Return `A` as a canonical float64 CSR matrix."""
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sum_duplicates()
    A.sort_indices()
    return A


@njit(cache=True)
def _csr_matvec(indptr, indices, data, v, out):
    for i in range(out.shape[0]):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * v[indices[k]]
        out[i] = acc


def spmv(A, v):
    """Compute ``A @ v`` with a fixed row-wise accumulation order."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if A.shape[1] != v.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix has {A.shape[1]} columns, vector has {v.shape[0]} entries"
        )
    A = A if sp.isspmatrix_csr(A) else as_csr(A)
    out = np.empty(A.shape[0])
    _csr_matvec(A.indptr, A.indices, A.data, v, out)
    return out


def is_symmetric(A, rtol=1e-12):
    """Check ``|A_ij - A_ji| <= rtol * max(1, |A_ij|)`` over stored entries."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    diff = abs(A - A.T)
    if diff.nnz == 0:
        return True
    scale = abs(A).maximum(abs(A.T))
    scale.data = np.maximum(scale.data, 1.0)
    d = diff.tocoo()
    return bool(np.all(d.data <= rtol * np.asarray(scale[d.row, d.col]).ravel()))


@njit(cache=True)
def _gs_forward(indptr, indices, data, diag, b, z):
    n = z.shape[0]
    for i in range(n):
        acc = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                acc -= data[k] * z[j]
        z[i] = acc / diag[i]


@njit(cache=True)
def _gs_backward(indptr, indices, data, diag, b, z):
    n = z.shape[0]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                acc -= data[k] * z[j]
        z[i] = acc / diag[i]


def gauss_seidel_sweep(A, b, z, direction="forward", diag=None):
    """Run one Gauss-Seidel sweep on ``A z = b``, updating `z` in place.

    Parameters
    ----------
    A : csr_matrix
        Square matrix with nonzero diagonal.
    b, z : ndarray
        Right-hand side and current iterate (float64, contiguous).
    direction : {"forward", "backward"}
        Row ordering of the sweep.
    diag : ndarray, optional
        Precomputed diagonal of `A`.

    Returns
    -------
    ndarray
        The updated `z` (same object).
    """
    if diag is None:
        diag = A.diagonal()
        if np.any(diag == 0.0):
            raise ValueError("smoother requires nonzero diagonal")
    if direction == "forward":
        _gs_forward(A.indptr, A.indices, A.data, diag, b, z)
    elif direction == "backward":
        _gs_backward(A.indptr, A.indices, A.data, diag, b, z)
    else:
        raise ValueError(f"unknown sweep direction {direction!r}")
    return z


class CholeskyFactor:
    """Cholesky factor of an SPD matrix with band-plus-border structure.

    The leading ``n - border`` block is factored in LAPACK banded storage;
    the trailing `border` rows/columns (dense, e.g. the volume multiplier row)
    are handled by a bordered Schur-complement update. No fill-reducing
    ordering is applied.
    """

    def __init__(self, band, bandwidth, coupling, border_factor, dim):
        self.band = band  # lower banded storage of L for the leading block
        self.bandwidth = bandwidth
        self.coupling = coupling  # W = L^{-1} C, shape (n0, border)
        self.border_factor = border_factor  # Cholesky of S - W^T W
        self.dim = dim

    @property
    def n0(self):
        return self.dim - self.coupling.shape[1]

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        n0 = self.n0
        if self.coupling.shape[1] == 0:
            return sl.cho_solve_banded((self.band, True), b)
        b1, b2 = b[:n0], b[n0:]
        y1 = _banded_lower_solve(self.band, b1)
        y2 = sl.solve_triangular(self.border_factor, b2 - self.coupling.T @ y1, lower=True)
        z2 = sl.solve_triangular(self.border_factor.T, y2, lower=False)
        z1 = _banded_lower_solve(self.band, y1 - self.coupling @ z2, trans=True)
        return np.concatenate([z1, z2])

    def to_dense_lower(self):
        """Reconstruct the full lower-triangular factor (for small matrices)."""
        n0 = self.n0
        L = np.zeros((self.dim, self.dim))
        for d in range(self.bandwidth + 1):
            idx = np.arange(n0 - d)
            L[idx + d, idx] = self.band[d, : n0 - d]
        L[n0:, :n0] = self.coupling.T
        L[n0:, n0:] = self.border_factor
        return L


def _banded_lower_solve(band, b, trans=False):
    bw = band.shape[0] - 1
    n = band.shape[1]
    if not trans:
        # solve L y = b with L in lower banded storage
        ab = band
        return sl.solve_banded((bw, 0), ab, b)
    # solve L^T z = b; L^T is upper banded: row d of upper storage holds superdiag
    ab = np.zeros_like(band)
    for d in range(bw + 1):
        ab[bw - d, d:] = band[d, : n - d]
    return sl.solve_banded((0, bw), ab, b)


def _lower_bandwidth(A):
    coo = A.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(coo.row - coo.col))


def cholesky_factor(A, border=0):
    """Factor the SPD matrix `A` as ``L L^T``.

    Parameters
    ----------
    A : sparse or dense (n, n) matrix
        Symmetric positive definite.
    border : int
        Number of trailing dense rows/columns kept out of the band.

    Raises
    ------
    NotPositiveDefiniteError
        If a non-positive pivot is met; ``.pivot`` is the 0-based index.
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("cholesky_factor requires a square matrix")
    n0 = n - border
    A11 = A[:n0, :n0]
    bw = _lower_bandwidth(A11)
    band = np.zeros((bw + 1, n0))
    coo = sp.tril(A11).tocoo()
    band[coo.row - coo.col, coo.col] = coo.data
    if n0 > 0:
        c, info = sl.lapack.dpbtrf(band, lower=1)
        if info > 0:
            raise NotPositiveDefiniteError(info - 1)
        if info < 0:  # pragma: no cover
            raise ValueError(f"dpbtrf illegal argument {-info}")
        band = c
    if border == 0:
        return CholeskyFactor(band, bw, np.zeros((n0, 0)), np.zeros((0, 0)), n)
    C = A[:n0, n0:].toarray()
    S = A[n0:, n0:].toarray()
    W = np.column_stack([_banded_lower_solve(band, C[:, j]) for j in range(border)]) if n0 else np.zeros((0, border))
    S = S - W.T @ W
    try:
        Lb = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        piv = n0 + int(np.argmin(np.diag(S)))
        raise NotPositiveDefiniteError(piv) from None
    return CholeskyFactor(band, bw, W, Lb, n)


def write_matrix_market(path, A, comment=""):
    """Dump `A` in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
