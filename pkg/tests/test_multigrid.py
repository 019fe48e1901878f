import numpy as np
import pytest
import scipy.sparse as sp
from oracles import stationary_factor

from mgtopo.fem import Mesh, Problem, assemble_stiffness, preset
from mgtopo.linear import prolongations
from mgtopo.multigrid import (
    MultigridHierarchy,
    build_prolongation,
    galerkin_coarsen,
    interpolation_1d,
    nodal_prolongation,
    vcycle,
)
from mgtopo.sparse import as_csr


def uniform_hierarchy(name="ex1", levels=4, sweeps=4):
    p = Problem(preset(name, levels))
    K = assemble_stiffness(p.mesh, np.ones(p.m))
    return p, K, MultigridHierarchy(K, prolongations(p), sweeps, sweeps)


def test_interpolation_1d_stencil():
    P = interpolation_1d(2).toarray()
    assert np.allclose(P, [[1, 0, 0], [0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5], [0, 0, 1]])


def test_prolongation_preserves_constants():
    P = nodal_prolongation(2, 3)
    assert np.allclose(P @ np.ones(P.shape[1]), 1.0)
    P2 = build_prolongation(Mesh(4, 6), Mesh(2, 3))
    assert np.allclose(P2 @ np.ones(P2.shape[1]), 1.0)


def test_cell_centre_row():
    P = nodal_prolongation(2, 2)  # 3x3 coarse nodes -> 5x5 fine nodes
    centre = 1 * 5 + 1  # fine node (1, 1), the centre of coarse cell (0, 0)
    row = P[centre].toarray().ravel()
    coarse = [0 * 3 + 0, 0 * 3 + 1, 1 * 3 + 0, 1 * 3 + 1]
    assert np.allclose(row[coarse], 0.25) and row.sum() == pytest.approx(1.0)
    edge = 1 * 5 + 0  # midpoint between coarse nodes (0,0) and (1,0)
    assert np.allclose(P[edge].toarray().ravel()[[0, 3]], 0.5)


def test_prolongation_drops_fixed_dofs_and_augments():
    p = Problem(preset("ex1", 2))
    P = build_prolongation(p.meshes[1], p.meshes[0])
    assert P.shape == (p.meshes[1].n, p.meshes[0].n)
    Pa = build_prolongation(p.meshes[1], p.meshes[0], augmented=True)
    assert Pa.shape == (P.shape[0] + 1, P.shape[1] + 1)
    last_row, last_col = Pa[-1].toarray().ravel(), Pa[:, -1].toarray().ravel()
    assert last_row[-1] == 1 and np.count_nonzero(last_row) == 1 and np.count_nonzero(last_col) == 1
    with pytest.raises(ValueError, match="2x refinement"):
        build_prolongation(Mesh(4, 4), Mesh(3, 2))


def test_galerkin_identity_and_dense_oracle():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    A = as_csr(M @ M.T + 30 * np.eye(30))
    assert abs(galerkin_coarsen(A, sp.identity(30, format="csr")) - A).max() <= 1e-12
    P = as_csr(rng.standard_normal((30, 12)))
    Ac = galerkin_coarsen(A, P).toarray()
    dense = P.toarray().T @ A.toarray() @ P.toarray()
    assert np.max(np.abs(Ac - dense)) <= 1e-12 * np.max(np.abs(dense))
    assert np.linalg.eigvalsh(Ac).min() > 0
    with pytest.raises(ValueError, match="dimension mismatch"):
        galerkin_coarsen(A, P[:20])


def test_galerkin_chain_associative():
    p, K, h = uniform_hierarchy(levels=3)
    P2, P3 = h.prolongations
    direct = galerkin_coarsen(K, P3 @ P2).toarray()
    assert np.max(np.abs(h.operators[0].toarray() - direct)) <= 1e-12 * np.max(np.abs(direct))
    for A in h.operators:
        assert abs(A - A.T).max() == 0
        assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_single_level_is_exact():
    p = Problem(preset("ex1", 1))
    K = assemble_stiffness(p.mesh, np.ones(p.m))
    h = MultigridHierarchy(K, [])
    assert np.allclose(K @ h(p.f), p.f, atol=1e-13)


def test_zero_in_zero_out():
    p, K, h = uniform_hierarchy(levels=3)
    assert np.all(vcycle(h, h.levels, np.zeros(p.n), np.zeros(p.n)) == 0)


@pytest.mark.parametrize("sweeps", [1, 4])
def test_preconditioner_symmetric_positive(sweeps):
    p, K, h = uniform_hierarchy(levels=3, sweeps=sweeps)
    rng = np.random.default_rng(1)
    for _ in range(3):
        r1, r2 = rng.standard_normal(p.n), rng.standard_normal(p.n)
        a, b = h(r1) @ r2, r1 @ h(r2)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
        assert h(r1) @ r1 > 0


def test_vcycle_reduction_factor_ex1_l4():
    p, K, h = uniform_hierarchy(levels=4)
    errs = stationary_factor(K, h, p.f)
    factors = np.array(errs[1:]) / np.array(errs[:-1])
    assert factors.max() <= 0.2


@pytest.mark.parametrize("levels", [2, 3, 4])
def test_stationary_iteration_converges_random_density(levels):
    p = Problem(preset("ex2", levels))
    x = np.random.default_rng(levels).uniform(0.05, 2.0, p.m)
    K = assemble_stiffness(p.mesh, x)
    h = MultigridHierarchy(K, prolongations(p))
    z = np.zeros(p.n)
    for _ in range(20):
        z = z + h(p.f - K @ z)
    assert np.linalg.norm(p.f - K @ z) <= 1e-8 * np.linalg.norm(p.f)
