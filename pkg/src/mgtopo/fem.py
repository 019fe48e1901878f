"""Structured-grid finite elements for the variable thickness sheet.

Nodes of an ``nx x ny`` grid are numbered column by column,
``node = i * (ny + 1) + j`` for ``0 <= i <= nx`` (x direction) and
``0 <= j <= ny`` (y direction, pointing up). Elements use the same
column-major order, ``elem = ex * ny + ey``. Each node carries the dofs
``2 * node`` (horizontal) and ``2 * node + 1`` (vertical); fixed dofs are
eliminated and the free ones renumbered in their original order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "element_stiffness",
    "Mesh",
    "ProblemSpec",
    "PRESETS",
    "preset",
    "Problem",
    "assemble_stiffness",
    "assemble_load",
    "element_energies",
    "assemble_B",
    "compliance",
]


def element_stiffness(E=1.0, nu=0.3):
    """Plane-stress stiffness of the unit bilinear square (8 x 8).

    Local nodes are ordered counter-clockwise from the lower-left corner,
    dofs interleaved as ``(u0, v0, u1, v1, ...)``. The matrix does not
    depend on the element size.
    """
    if not (E > 0 and 0 <= nu < 0.5):
        raise ValueError("element_stiffness requires E > 0 and 0 <= nu < 0.5")
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    pattern = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return E / (1 - nu**2) * k[pattern]


# Fixed-node selectors, evaluated on every level of the hierarchy.
def _left_edge(nx, ny):
    return [(0, j) for j in range(ny + 1)]


def _bottom_corners(nx, ny):
    return [(0, 0), (nx, 0)]


BOUNDARY_CONDITIONS = {"left_edge": _left_edge, "bottom_corners": _bottom_corners}


# Load selectors: (loaded node, its two neighbours along the boundary).
def _right_middle(nx, ny):
    if ny % 2:
        raise ValueError("right_middle load needs an even number of rows")
    j = ny // 2
    return (nx, j), [(nx, j - 1), (nx, j + 1)]


def _bottom_middle(nx, ny):
    if nx % 2:
        raise ValueError("bottom_middle load needs an even number of columns")
    i = nx // 2
    return (i, 0), [(i - 1, 0), (i + 1, 0)]


LOADS = {"right_middle": _right_middle, "bottom_middle": _bottom_middle}


class Mesh:
    """Rectangular grid of unit-shape bilinear elements with eliminated dofs."""

    def __init__(self, nx, ny, fixed_nodes=(), KE=None):
        self.nx, self.ny = int(nx), int(ny)
        self.KE = element_stiffness() if KE is None else np.asarray(KE, dtype=float)
        self.fixed_nodes = sorted({self.node(i, j) for i, j in fixed_nodes})
        fixed = np.zeros(2 * self.n_nodes, dtype=bool)
        for nd in self.fixed_nodes:
            fixed[2 * nd: 2 * nd + 2] = True
        self.fixed_dofs = np.flatnonzero(fixed)
        self.free_dofs = np.flatnonzero(~fixed)
        self.dof_index = np.full(2 * self.n_nodes, -1, dtype=np.int64)
        self.dof_index[self.free_dofs] = np.arange(self.free_dofs.size)

    def __repr__(self):
        return f"Mesh({self.nx}x{self.ny}, n={self.n}, m={self.m})"

    def node(self, i, j):
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise ValueError(f"node ({i}, {j}) outside a {self.nx}x{self.ny} grid")
        return i * (self.ny + 1) + j

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def m(self):
        return self.nx * self.ny

    @property
    def n(self):
        return self.free_dofs.size

    @cached_property
    def edof_full(self):
        """(m, 8) unreduced dof numbers of every element."""
        ex, ey = np.divmod(np.arange(self.m), self.ny)
        n0 = ex * (self.ny + 1) + ey
        n1 = n0 + self.ny + 1
        nodes = np.stack([n0, n1, n1 + 1, n0 + 1], axis=1)
        return np.stack([2 * nodes, 2 * nodes + 1], axis=2).reshape(self.m, 8)

    @cached_property
    def edof(self):
        """(m, 8) free-dof numbers, ``-1`` marking eliminated dofs."""
        return self.dof_index[self.edof_full]

    @cached_property
    def element_centers(self):
        ex, ey = np.divmod(np.arange(self.m), self.ny)
        return np.stack([ex + 0.5, ey + 0.5], axis=1)

    @cached_property
    def _assembly(self):
        # Maps element weights to CSR values: data = S @ w.
        a, b = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        a, b = a.ravel(), b.ravel()
        rows = self.edof[:, a]
        cols = self.edof[:, b]
        vals = np.broadcast_to(self.KE[a, b], rows.shape)
        elem = np.broadcast_to(np.arange(self.m)[:, None], rows.shape)
        keep = (rows >= 0) & (cols >= 0)
        rows, cols, vals, elem = rows[keep], cols[keep], vals[keep], elem[keep]
        key = rows * self.n + cols
        uniq, slot = np.unique(key, return_inverse=True)
        S = sp.csr_matrix((vals, (slot, elem)), shape=(uniq.size, self.m))
        r, c = np.divmod(uniq, self.n)
        indptr = np.searchsorted(r, np.arange(self.n + 1)).astype(np.int32)
        return S, c.astype(np.int32), indptr

    def expand(self, u):
        """Scatter a free-dof vector to all dofs (zeros on fixed ones)."""
        full = np.zeros(2 * self.n_nodes)
        full[self.free_dofs] = u
        return full


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, supports, load, material and model of one experiment.

    ``volume=None`` means a mean density of one, ``V = m`` on the finest mesh.
    """

    coarse_nx: int
    coarse_ny: int
    levels: int = 3
    bc: str = "left_edge"
    load: str = "right_middle"
    volume: float | None = None
    upper_bound: float = 2.0
    young: float = 1.0
    poisson: float = 0.3
    model: str = "vts"
    penal: float = 3.0
    rmin: float = 2.0
    metric: str = "manhattan"
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.load not in LOADS:
            raise ValueError(f"unknown load {self.load!r}")
        if self.model not in ("vts", "simp"):
            raise ValueError(f"unknown model {self.model!r}")
        m = self.fine_shape[0] * self.fine_shape[1]
        if not 0 < self.V < m * self.upper_bound:
            raise ValueError(f"volume {self.V} not strictly feasible for m={m}, upper bound {self.upper_bound}")

    def shape(self, level):
        """Element counts of mesh `level` (1 = coarsest)."""
        f = 2 ** (level - 1)
        return self.coarse_nx * f, self.coarse_ny * f

    @property
    def fine_shape(self):
        return self.shape(self.levels)

    @property
    def V(self):
        nx, ny = self.fine_shape
        return float(nx * ny) if self.volume is None else float(self.volume)

    def with_(self, **changes):
        return replace(self, **changes)

    def build(self):
        return Problem(self)


PRESETS = {
    "ex1": dict(coarse_nx=2, coarse_ny=2, bc="left_edge", load="right_middle"),
    "ex2": dict(coarse_nx=4, coarse_ny=2, bc="left_edge", load="right_middle"),
    "ex3": dict(coarse_nx=8, coarse_ny=2, bc="bottom_corners", load="bottom_middle"),
    "ex4": dict(coarse_nx=4, coarse_ny=2, bc="left_edge", load="right_middle",
                upper_bound=3.0, model="simp", penal=3.0, rmin=2.0, metric="manhattan"),
}


def preset(name, levels=3, **overrides):
    """Return the :class:`ProblemSpec` of a named benchmark."""
    try:
        params = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}") from None
    params.update(overrides)
    return ProblemSpec(levels=levels, name=name, **params)


class Problem:
    """All level meshes, the load and the bounds of a :class:`ProblemSpec`."""

    def __init__(self, spec):
        self.spec = spec
        KE = element_stiffness(spec.young, spec.poisson)
        bc = BOUNDARY_CONDITIONS[spec.bc]
        self.meshes = []
        for level in range(1, spec.levels + 1):
            nx, ny = spec.shape(level)
            self.meshes.append(Mesh(nx, ny, bc(nx, ny), KE))
        self.f = assemble_load(self.mesh, spec)
        self.V = spec.V
        self.xbar = spec.upper_bound

    @property
    def mesh(self):
        return self.meshes[-1]

    @property
    def n(self):
        return self.mesh.n

    @property
    def m(self):
        return self.mesh.m


def assemble_stiffness(mesh, weights):
    """Assemble ``K = sum_i weights_i K_i`` on the free dofs (CSR)."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (mesh.m,):
        raise ValueError(f"expected {mesh.m} element weights, got {weights.shape}")
    S, indices, indptr = mesh._assembly
    return sp.csr_matrix((S @ weights, indices, indptr), shape=(mesh.n, mesh.n))


def assemble_load(mesh, spec):
    """Vertical load ``(-1/2, -1, -1/2)`` on the selected node and its neighbours."""
    centre, neighbours = LOADS[spec.load](mesh.nx, mesh.ny)
    f = np.zeros(mesh.n)
    for (i, j), value in [(centre, -1.0)] + [(nb, -0.5) for nb in neighbours]:
        dof = mesh.dof_index[2 * mesh.node(i, j) + 1]
        if dof < 0:
            raise ValueError("load applied to fixed dof")
        f[dof] += value
    return f


def _element_displacements(mesh, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n,):
        raise ValueError(f"expected displacement of length {mesh.n}, got {u.shape}")
    return mesh.expand(u)[mesh.edof_full]


def element_energies(mesh, u):
    """Return ``g_i = u^T K_i u`` for every element."""
    ue = _element_displacements(mesh, u)
    return np.einsum("ea,ab,eb->e", ue, mesh.KE, ue)


def assemble_B(mesh, u):
    """Return the n x m matrix ``B(u) = (K_1 u, ..., K_m u)``."""
    ue = _element_displacements(mesh, u)
    cols = ue @ mesh.KE
    rows = mesh.edof
    keep = rows >= 0
    elem = np.broadcast_to(np.arange(mesh.m)[:, None], rows.shape)
    return sp.csr_matrix((cols[keep], (rows[keep], elem[keep])), shape=(mesh.n, mesh.m))


def compliance(f, u):
    """Return ``f^T u / 2``."""
    f, u = np.asarray(f, dtype=float), np.asarray(u, dtype=float)
    if f.shape != u.shape:
        raise ValueError("compliance needs vectors of equal length")
    return 0.5 * float(f @ u)
