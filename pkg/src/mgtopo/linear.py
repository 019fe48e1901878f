"""Linear-solver arms shared by the optimizers: MG-preconditioned CG or Cholesky."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .krylov import PcgOutcome, StoppingRule, pcg
from .multigrid import MultigridHierarchy, build_prolongation
from .sparse import cholesky_factor

__all__ = ["MgCgSolver", "DirectSolver", "make_solver", "prolongations"]


def prolongations(problem, augmented=False):
    """Prolongations of `problem`'s mesh hierarchy, coarsest first (cached)."""
    cache = problem.__dict__.setdefault("_prolongations", {})
    if augmented not in cache:
        ms = problem.meshes
        cache[augmented] = [build_prolongation(ms[k + 1], ms[k], augmented) for k in range(len(ms) - 1)]
    return cache[augmented]


class MgCgSolver:
    """CG preconditioned by one V-cycle; the hierarchy is rebuilt per system."""

    name = "mgcg"

    def __init__(self, problem, pre_sweeps=4, post_sweeps=4, maxit=1000):
        self.problem = problem
        self.pre_sweeps = pre_sweeps
        self.post_sweeps = post_sweeps
        self.maxit = maxit

    def hierarchy(self, A, augmented=False):
        return MultigridHierarchy(A, prolongations(self.problem, augmented), self.pre_sweeps, self.post_sweeps)

    def solve(self, A, b, tol=1e-2, mode="relative", z0=None, augmented=False):
        h = self.hierarchy(A, augmented)
        return pcg(A, b, h.precondition, StoppingRule(tol, mode), self.maxit, z0)


class DirectSolver:
    """Banded Cholesky with the multiplier row as a dense border.

    The system is symmetrically scaled to unit diagonal first; void regions of
    penalized designs otherwise produce diagonal entries twenty orders of
    magnitude apart and the factorization loses its pivots to round-off.
    """

    name = "direct"

    def __init__(self, problem=None):
        self.problem = problem

    def solve(self, A, b, tol=None, mode=None, z0=None, augmented=False):
        d = A.diagonal()
        if np.all(d > 0):
            S = sp.diags(1.0 / np.sqrt(d))
            y = cholesky_factor(S @ A @ S, border=1 if augmented else 0).solve(S @ b)
            x = S @ y
        else:
            x = cholesky_factor(A, border=1 if augmented else 0).solve(b)
        return PcgOutcome(x, 0, float(np.linalg.norm(A @ x - b)), True)


def make_solver(kind, problem, sweeps=4, maxit=1000):
    """Linear solver by name; `sweeps` and `maxit` only affect ``"mgcg"``."""
    if kind == "mgcg":
        return MgCgSolver(problem, pre_sweeps=sweeps, post_sweeps=sweeps, maxit=maxit)
    if kind == "direct":
        return DirectSolver(problem)
    raise ValueError(f"unknown linear solver {kind!r}")
