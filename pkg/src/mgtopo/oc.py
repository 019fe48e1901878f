"""Optimality-criteria methods: plain OC, damped OC and averaged OC.

Every variant rescales the densities multiplicatively by the element
energies and restores the volume constraint with a bisection on the
multiplier. The equilibrium systems are solved by MG-preconditioned CG with
an adaptive tolerance (tightened whenever the compliance goes up) or by the
Cholesky reference solver.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .fem import assemble_stiffness, element_energies
from .linear import make_solver
from .runlog import ConvergenceError, RunLog

__all__ = ["OcConfig", "bisect_lambda", "oc_update", "oc_step", "aoc_step", "oc_solve",
           "report_density", "OC_COLUMNS"]

OC_COLUMNS = ("iter", "objective", "delta_objective", "lambda", "cg_iters", "cg_tol")


@dataclass(frozen=True)
class OcConfig:
    variant: str = "oc"  # "oc", "doc" or "aoc"
    q: float = 0.5
    tau_lambda: float = 1e-11
    tau_oc: float = 1e-5
    x_lower: float = 1e-9
    cg_tol: float = 1e-4
    cg_shrink: float = 0.1
    cg_tol_min: float = 1e-12
    lambda_max: float = 10000.0
    max_outer: int = 5000
    linear_solver: str = "mgcg"
    mg_sweeps: int = 4
    cg_maxit: int = 1000

    def __post_init__(self):
        if self.variant not in ("oc", "doc", "aoc"):
            raise ValueError(f"unknown OC variant {self.variant!r}")
        if not 0 < self.q <= 1:
            raise ValueError("damping exponent q must lie in (0, 1]")
        if not self.x_lower > 0:
            raise ValueError("x_lower must be strictly positive")


def _update(x, g, lam, x_lower, xbar, q):
    gq = g if q == 1 else g**q
    return np.clip(x * gq / lam, x_lower, xbar)


def bisect_lambda(x, g, V, xbar, config=OcConfig(), q=None):
    """Find the volume multiplier by bisection on ``[0, lambda_max]``.

    Returns ``(lam, x_new)`` with ``x_new = clip(x * g**q / lam, x_lower, xbar)``
    evaluated at the last bisection midpoint.

    Raises
    ------
    ValueError
        If the volume `V` cannot be matched inside the bracket.
    """
    q = (config.q if config.variant == "doc" else 1.0) if q is None else q
    x, g = np.asarray(x, dtype=float), np.asarray(g, dtype=float)
    lo, hi = 0.0, config.lambda_max
    if _update(x, g, hi, config.x_lower, xbar, q).sum() > V:
        raise ValueError("volume unreachable: too much volume even at the largest multiplier")
    if np.minimum(np.where(g > 0, xbar, config.x_lower), xbar).sum() < V:
        raise ValueError("volume unreachable: bounds cannot hold the prescribed volume")
    lam, x_new = hi, None
    while hi - lo > config.tau_lambda:
        lam = 0.5 * (hi + lo)
        x_new = _update(x, g, lam, config.x_lower, xbar, q)
        if x_new.sum() > V:
            lo = lam
        else:
            hi = lam
    if x_new is None:
        x_new = _update(x, g, lam, config.x_lower, xbar, q)
    return lam, x_new


def oc_update(mesh, x, u, V, xbar, config=OcConfig()):
    """One multiplicative update of `x` given its displacement `u`."""
    g = element_energies(mesh, u)
    return bisect_lambda(x, g, V, xbar, config)


def oc_step(problem, x, solver, config=OcConfig(), u0=None):
    """Solve equilibrium at `x`, then apply one OC/DOC update.

    Returns ``(x_new, lam, outcome)`` where `outcome` is the linear solve.
    """
    K = assemble_stiffness(problem.mesh, x)
    out = solver.solve(K, problem.f, config.cg_tol, "relative", z0=u0)
    lam, x_new = oc_update(problem.mesh, x, out.solution, problem.V, problem.xbar, config)
    return x_new, lam, out


def aoc_step(problem, x, solver, config=OcConfig(), u0=None):
    """Averaged OC: mean of one and two OC steps from `x`.

    Returns ``(x_new, (x1, x2), outcomes)``.
    """
    plain = OcConfig(**{**config.__dict__, "variant": "oc"})
    x1, _, out1 = oc_step(problem, x, solver, plain, u0)
    x2, _, out2 = oc_step(problem, x1, solver, plain, out1.solution)
    return 0.5 * (x1 + x2), (x1, x2), (out1, out2)


def report_density(x, x_lower):
    """Densities as reported after termination: lower-bound entries set to zero."""
    x = np.array(x, dtype=float)
    x[x <= x_lower] = 0.0
    return x


def oc_solve(problem, config=OcConfig(), solver=None):
    """Run the OC family until the compliance stagnates.

    Stops when ``|f^T u_k - f^T u_{k-1}| <= tau_oc`` or after ``max_outer``
    iterations. With the iterative solver, an increase of ``f^T u`` discards
    the step, tightens the CG tolerance by ``cg_shrink`` and retries from the
    previous design.

    Returns
    -------
    x : ndarray
        Final design (raw, bounded below by ``x_lower``).
    runlog : RunLog
        One row per linear solve.
    """
    t_start = time.perf_counter()
    solver = solver or make_solver(config.linear_solver, problem, config.mg_sweeps, config.cg_maxit)
    iterative = solver.name != "direct"
    runlog = RunLog(f"{config.variant}-{solver.name}", OC_COLUMNS)
    f, mesh = problem.f, problem.mesh
    plain = OcConfig(**{**config.__dict__, "variant": "oc"})
    step_cfg = plain if config.variant == "aoc" else config
    cg_tol = config.cg_tol
    lin_time = 0.0

    def solve(x, u0):
        nonlocal lin_time
        t0 = time.perf_counter()
        out = solver.solve(assemble_stiffness(mesh, x), f, cg_tol, "relative", z0=u0)
        lin_time += time.perf_counter() - t0
        return out

    def record(it, obj, prev, lam, out):
        runlog.append(**{"iter": it, "objective": obj, "lambda": lam, "cg_iters": out.iterations,
                         "delta_objective": (obj - prev) if prev is not None else float("nan"),
                         "cg_tol": cg_tol if iterative else 0.0})

    x = np.full(problem.m, problem.V / problem.m)
    out = solve(x, None)
    u = out.solution
    obj = float(f @ u)
    record(0, obj, None, float("nan"), out)
    it = 0
    converged = False
    while it < config.max_outer:
        lam, x_new = bisect_lambda(x, element_energies(mesh, u), problem.V, problem.xbar, step_cfg)
        if config.variant == "aoc":
            out1 = solve(x_new, u)
            record(it + 0.5, float(f @ out1.solution), obj, lam, out1)
            lam, x2 = bisect_lambda(x_new, element_energies(mesh, out1.solution), problem.V, problem.xbar, step_cfg)
            x_new = 0.5 * (x_new + x2)
            u_guess = out1.solution
        else:
            u_guess = u
        out = solve(x_new, u_guess)
        obj_new = float(f @ out.solution)
        if iterative and obj_new > obj:
            cg_tol *= config.cg_shrink
            if cg_tol < config.cg_tol_min:
                runlog.status = "failed"
                raise ConvergenceError("iterative solver cannot sustain descent", runlog)
            runlog.notes.append(f"iteration {it + 1}: objective increased, cg_tol -> {cg_tol:.1e}")
            record(it + 1, obj_new, obj, lam, out)
            # roll back and re-solve the previous design more accurately
            out = solve(x, u)
            u = out.solution
            obj_prev, obj = obj, float(f @ u)
            record(it, obj, obj_prev, float("nan"), out)
            continue
        it += 1
        record(it, obj_new, obj, lam, out)
        x, u = x_new, out.solution
        done = abs(obj_new - obj) <= config.tau_oc
        obj = obj_new
        if done:
            converged = True
            break

    runlog.status = "converged" if converged else "max_outer"
    runlog.objective = 0.5 * obj
    reported = report_density(x, config.x_lower)
    above = reported[reported > 0]
    runlog.x_min = float(above.min()) if above.size else 0.0
    runlog.linear_time = lin_time
    runlog.wall_time = time.perf_counter() - t_start
    runlog.extra["outer_iters"] = it
    runlog.final_u = u
    return x, runlog
