"""
Multigrid-preconditioned CG on refined meshes
=============================================

Geometric multigrid with Galerkin coarse operators keeps the number of CG
iterations almost constant under refinement, even when the element
thicknesses vary by two orders of magnitude.
"""

# %%
# Solve the equilibrium system for a uniform and a random thickness field
# on six nested meshes, to a relative residual of 1e-6.
import time

import numpy as np

from mgtopo import MgCgSolver, Problem, preset
from mgtopo.fem import assemble_stiffness

rng = np.random.default_rng(0)
print(f"{'level':>5} {'unknowns':>9} {'uniform':>8} {'random':>7} {'seconds':>8}")
for levels in range(1, 8):
    problem = Problem(preset("ex1", levels))
    solver = MgCgSolver(problem)
    counts = []
    t0 = time.perf_counter()
    for x in (np.ones(problem.m), rng.uniform(0.02, 2.0, problem.m)):
        K = assemble_stiffness(problem.mesh, x)
        counts.append(solver.solve(K, problem.f, 1e-6).iterations)
    print(f"{levels:5d} {problem.n:9d} {counts[0]:8d} {counts[1]:7d} {time.perf_counter() - t0:8.2f}")

# %%
# The setup (Galerkin products and the coarse Cholesky factor) dominates
# the time on small meshes; on large ones the smoother does.
