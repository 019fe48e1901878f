"""
Penalized densities with a filter
=================================

With the SIMP model the stiffness of an element grows like the cube of its
filtered density, which pushes the design towards black and white. The
problem is no longer convex, so the interior-point method spends most of
its Newton steps on the last barrier values.
"""

# %%
# A short cantilever with a Manhattan-distance density filter of radius 2.
from pathlib import Path

import numpy as np

from mgtopo import IpmConfig, Problem, ipm_solve, preset
from mgtopo.cli import render_density

out = Path("demo_output")
out.mkdir(exist_ok=True)
problem = Problem(preset("ex4", 4))
state, log = ipm_solve(problem, IpmConfig(linear_solver="direct"))

# %%
# Newton steps per barrier value: small at first, larger near the end.
outer = log.column("outer_iter")
counts = [int((outer == k).sum()) for k in range(1, int(outer.max()) + 1)]
print("Newton steps per barrier value:", counts)
print(f"compliance {log.objective:.4f} after {log.feval} linear solves")

# %%
# Most elements end near one of the bounds.
x = state.x / problem.xbar
print(f"fraction of near-void or near-solid elements: {np.mean((x < 0.05) | (x > 0.95)):.2f}")
render_density(state.x, problem.mesh, out / "simp_cantilever.pgm", problem.xbar)
