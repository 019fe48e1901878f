"""SIMP model with a density filter, for use by the interior-point solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .fem import assemble_B, assemble_stiffness

__all__ = ["FilterMatrix", "build_filter", "simp_stiffness", "simp_B", "simp_kkt_res3", "SimpModel"]

_METRIC_P = {"manhattan": 1, "euclidean": 2}


@dataclass(frozen=True)
class FilterMatrix:
    W: sp.csr_matrix
    rmin: float
    metric: str

    def __matmul__(self, x):
        return self.W @ x


def build_filter(mesh, rmin, metric="manhattan"):
    """Density filter ``x_tilde = W x`` over element-centre distances.

    The raw weights ``max(0, rmin - dist(i, j))`` are scaled column by column
    so that every column of `W` sums to one, i.e. the filter preserves the
    total volume ``sum(x)``.
    """
    if rmin <= 0:
        raise ValueError("rmin must be positive")
    try:
        p = _METRIC_P[metric]
    except KeyError:
        raise ValueError(f"unknown filter metric {metric!r}") from None
    tree = cKDTree(mesh.element_centers)
    # strict inequality dist < rmin; pairs at distance exactly rmin get weight 0
    D = tree.sparse_distance_matrix(tree, rmin, p=p, output_type="coo_matrix")
    off = D.row != D.col
    i, j, d = D.row[off], D.col[off], D.data[off]
    # self pairs are added explicitly; the tree may or may not report them
    i = np.concatenate([i, np.arange(mesh.m)])
    j = np.concatenate([j, np.arange(mesh.m)])
    d = np.concatenate([d, np.zeros(mesh.m)])
    w = np.maximum(0.0, rmin - d)
    keep = w > 0
    What = sp.csr_matrix((w[keep], (i[keep], j[keep])), shape=(mesh.m, mesh.m))
    What.sum_duplicates()
    col = np.asarray(What.sum(axis=0)).ravel()
    W = sp.csr_matrix(What @ sp.diags(1.0 / col))
    W.sort_indices()
    return FilterMatrix(W, float(rmin), metric)


def _W(W):
    return W.W if isinstance(W, FilterMatrix) else W


def simp_stiffness(mesh, x, W, p=3.0):
    """Penalized stiffness ``sum_i (W x)_i^p K_i``."""
    xt = _W(W) @ np.asarray(x, dtype=float)
    return assemble_stiffness(mesh, xt**p)


def simp_B(mesh, u, x, W, p=3.0):
    """Sensitivity matrix with columns ``p sum_j W_ji (W x)_j^(p-1) K_j u``."""
    W = _W(W)
    xt = W @ np.asarray(x, dtype=float)
    return sp.csr_matrix(assemble_B(mesh, u) @ sp.diags(p * xt ** (p - 1)) @ W)


def simp_kkt_res3(mesh, u, x, lam, phi, psi, W, p=3.0):
    """Stationarity residual of the filtered SIMP problem.

    Uses the same sign as the variable thickness case, so that the Newton
    system keeps its form with ``B`` replaced by :func:`simp_B`.
    """
    Bh = simp_B(mesh, u, x, W, p)
    return -(0.5 * (Bh.T @ u) + lam + phi - psi)


class SimpModel:
    """Stiffness and sensitivities of the filtered SIMP problem."""

    name = "simp"

    def __init__(self, problem, W=None, p=None):
        spec = problem.spec
        self.mesh = problem.mesh
        self.filter = W if W is not None else build_filter(self.mesh, spec.rmin, spec.metric)
        self.p = float(spec.penal if p is None else p)

    def filtered(self, x):
        return _W(self.filter) @ x

    def stiffness(self, x):
        return simp_stiffness(self.mesh, x, self.filter, self.p)

    def sensitivity(self, u, x):
        return simp_B(self.mesh, u, x, self.filter, self.p)
