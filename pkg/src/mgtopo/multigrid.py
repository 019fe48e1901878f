"""Geometric multigrid on the nested structured meshes.

Prolongation uses bilinear (nine-point) interpolation per displacement
component; coarse operators are Galerkin products. The hierarchy can carry
one extra trailing unknown (the volume multiplier of the interior-point
system), which is transferred by the identity.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr, cholesky_factor, gauss_seidel_sweep

__all__ = [
    "interpolation_1d",
    "nodal_prolongation",
    "build_prolongation",
    "galerkin_coarsen",
    "MultigridHierarchy",
    "vcycle",
]


def interpolation_1d(nc):
    """Linear interpolation from ``nc + 1`` to ``2 nc + 1`` grid points."""
    rows, cols, vals = [], [], []
    for i in range(2 * nc + 1):
        if i % 2 == 0:
            rows.append(i), cols.append(i // 2), vals.append(1.0)
        else:
            rows += [i, i]
            cols += [i // 2, i // 2 + 1]
            vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nc + 1, nc + 1))


def nodal_prolongation(coarse_nx, coarse_ny):
    """Scalar nine-point prolongation between node grids (no boundary conditions)."""
    # column-major node numbering makes the x factor the outer one
    return sp.kron(interpolation_1d(coarse_nx), interpolation_1d(coarse_ny), format="csr")


def build_prolongation(fine_mesh, coarse_mesh, augmented=False):
    """Prolongation from the free dofs of `coarse_mesh` to those of `fine_mesh`.

    Rows of fixed fine dofs and columns of fixed coarse dofs are removed.
    With ``augmented=True`` one trailing row/column with a unit entry is added.
    """
    if fine_mesh.nx != 2 * coarse_mesh.nx or fine_mesh.ny != 2 * coarse_mesh.ny:
        raise ValueError("meshes are not related by uniform 2x refinement")
    P = sp.kron(nodal_prolongation(coarse_mesh.nx, coarse_mesh.ny), sp.identity(2), format="csr")
    P = P[fine_mesh.free_dofs][:, coarse_mesh.free_dofs]
    if augmented:
        P = sp.block_diag([P, sp.identity(1)], format="csr")
    return as_csr(P)


def galerkin_coarsen(A, P):
    """Return the symmetric Galerkin product ``P^T A P``."""
    if A.shape[0] != A.shape[1] or A.shape[1] != P.shape[0]:
        raise ValueError(f"dimension mismatch: A {A.shape}, P {P.shape}")
    Ac = as_csr(P.T @ (A @ P))
    return as_csr(0.5 * (Ac + Ac.T))


class MultigridHierarchy:
    """Operators ``A_1 .. A_l`` (finest last) and prolongations ``P_2 .. P_l``.

    Parameters
    ----------
    A : sparse matrix
        The finest-level SPD operator.
    prolongations : list of sparse matrices
        ``prolongations[k]`` maps level ``k`` to level ``k + 1`` (0-based,
        coarsest first); its length is ``levels - 1``.
    pre_sweeps, post_sweeps : int
        Forward Gauss-Seidel sweeps before and backward sweeps after the
        coarse-grid correction.
    """

    def __init__(self, A, prolongations, pre_sweeps=4, post_sweeps=4):
        self.prolongations = [as_csr(P) for P in prolongations]
        self.restrictions = [as_csr(P.T) for P in self.prolongations]
        ops = [as_csr(A)]
        for P in reversed(self.prolongations):
            ops.append(galerkin_coarsen(ops[-1], P))
        self.operators = ops[::-1]
        self.diagonals = []
        for k, Ak in enumerate(self.operators):
            d = Ak.diagonal()
            if k > 0 and np.any(d == 0.0):
                raise ValueError("smoother requires nonzero diagonal")
            self.diagonals.append(d)
        self.coarse_factor = cholesky_factor(self.operators[0])
        self.pre_sweeps = pre_sweeps
        self.post_sweeps = post_sweeps

    @property
    def levels(self):
        return len(self.operators)

    def precondition(self, r):
        """Apply one V-cycle with zero initial guess."""
        return vcycle(self, self.levels, np.zeros(r.shape[0]), r)

    __call__ = precondition


def vcycle(h, level, z, r):
    """One V-cycle for ``A_level z = r`` on hierarchy `h` (levels are 1-based)."""
    r = np.ascontiguousarray(r, dtype=np.float64)
    z = np.array(z, dtype=np.float64)
    k = level - 1
    if k == 0:
        return h.coarse_factor.solve(r)
    A, d = h.operators[k], h.diagonals[k]
    for _ in range(h.pre_sweeps):
        gauss_seidel_sweep(A, r, z, "forward", diag=d)
    rc = h.restrictions[k - 1] @ (r - A @ z)
    v = vcycle(h, level - 1, np.zeros(rc.shape[0]), rc)
    z += h.prolongations[k - 1] @ v
    for _ in range(h.post_sweeps):
        gauss_seidel_sweep(A, r, z, "backward", diag=d)
    return z
