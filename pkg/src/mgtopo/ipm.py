"""Primal-dual interior point method for minimum compliance.

The Newton system in ``(u, lambda, x, phi, psi)`` is reduced by eliminating
the bound multipliers and then the design update, leaving the SPD augmented
system ``Z [d_u; d_lambda] = rhs`` of size ``n + 1``. That system is solved by
multigrid-preconditioned CG (or a Cholesky reference solver); the remaining
components follow by back-substitution.

Residuals are the negated nonlinear equations, so every Newton system reads
``J d = res``:

* ``res1 = f - K(x) u``
* ``res2 = V - sum(x)``
* ``res3 = -(g/2 + lambda + phi - psi)`` with ``g_i = u^T K_i u``
* ``res4 = s - phi * x``
* ``res5 = r - psi * (xbar - x)``
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .fem import assemble_B, assemble_stiffness, compliance
from .linear import make_solver
from .runlog import ConvergenceError, RunLog

__all__ = [
    "IpmConfig",
    "IpmState",
    "ResidualBundle",
    "VtsModel",
    "make_model",
    "init_state",
    "compute_residuals",
    "barrier_diagonal",
    "build_augmented_system",
    "recover_dx",
    "recover_dphi_dpsi",
    "newton_direction",
    "step_length",
    "newton_stop",
    "kkt_norm",
    "scaled_kkt_error",
    "lemma_gap_check",
    "barrier_iterations",
    "ipm_solve",
    "IPM_COLUMNS",
]

log = logging.getLogger(__name__)

IPM_COLUMNS = ("outer_iter", "newton_steps", "s", "r", "cg_iters", "objective",
               "res1_rel", "kkt_error", "alpha", "cg_tol")


@dataclass(frozen=True)
class IpmConfig:
    sigma_s: float = 0.2
    sigma_r: float = 0.2
    tau_nwt: float = 1e-1
    tau_ip: float = 1e-8
    step_shrink: float = 0.9
    cg_tol: float = 1e-2
    cg_tol_mode: str = "fixed"  # or "decreasing": halve after each barrier update
    # "relative": ||rho|| <= tol ||b||; "product": the literal ||rho|| ||b|| <= tol;
    # "kkt": ||rho|| <= tol ||F|| with F the full KKT residual; "auto": kkt for
    # SIMP, relative otherwise
    cg_stop: str = "auto"
    cg_maxit: int = 1000
    newton_cap: int = 50
    linear_solver: str = "mgcg"
    mg_sweeps: int = 4

    def __post_init__(self):
        for name in ("sigma_s", "sigma_r"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("tau_nwt", "tau_ip", "cg_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cg_tol_mode not in ("fixed", "decreasing"):
            raise ValueError(f"unknown cg_tol_mode {self.cg_tol_mode!r}")
        if self.cg_stop not in ("auto", "relative", "product", "kkt"):
            raise ValueError(f"unknown cg_stop {self.cg_stop!r}")


@dataclass
class IpmState:
    u: np.ndarray
    lam: float
    x: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    s: float = 1.0
    r: float = 1.0

    def copy(self):
        return replace(self, u=self.u.copy(), x=self.x.copy(), phi=self.phi.copy(), psi=self.psi.copy())


@dataclass
class ResidualBundle:
    res1: np.ndarray
    res2: float
    res3: np.ndarray
    res4: np.ndarray
    res5: np.ndarray
    res3_tilde: np.ndarray


class VtsModel:
    """Variable thickness sheet: ``K(x) = sum x_i K_i``."""

    name = "vts"

    def __init__(self, problem):
        self.mesh = problem.mesh

    def stiffness(self, x):
        return assemble_stiffness(self.mesh, x)

    def sensitivity(self, u, x):
        return assemble_B(self.mesh, u)


def make_model(problem):
    if problem.spec.model == "simp":
        from .simp import SimpModel

        return SimpModel(problem)
    return VtsModel(problem)


def init_state(problem, solver, model=None, cg_tol=1e-2, cg_stop="relative"):
    """Uniform design ``x = V/m`` with its equilibrium displacement.

    Returns the state and the linear-solve outcome (for iteration counts).
    """
    model = model or make_model(problem)
    m = problem.m
    x = np.full(m, problem.V / m)
    out = solver.solve(model.stiffness(x), problem.f, cg_tol, "relative" if cg_stop == "kkt" else cg_stop)
    state = IpmState(u=out.solution, lam=1.0, x=x, phi=np.ones(m), psi=np.ones(m))
    return state, out


def compute_residuals(state, problem, model=None, K=None, B=None):
    """Evaluate the perturbed KKT residuals at `state`."""
    if K is None or B is None:
        model = model or make_model(problem)
        K = model.stiffness(state.x) if K is None else K
        B = model.sensitivity(state.u, state.x) if B is None else B
    x, phi, psi = state.x, state.phi, state.psi
    slack = problem.xbar - x
    res1 = problem.f - K @ state.u
    res2 = problem.V - float(x.sum())
    res3 = -(0.5 * (B.T @ state.u) + state.lam + phi - psi)
    res4 = state.s - phi * x
    res5 = state.r - psi * slack
    res3_tilde = res3 - res4 / x + res5 / slack
    return ResidualBundle(res1, res2, res3, res4, res5, res3_tilde)


def barrier_diagonal(state, xbar):
    """``D = X^{-1} Phi + Xtilde^{-1} Psi`` as a vector."""
    D = state.phi / state.x + state.psi / (xbar - state.x)
    if not np.all(D > 0):
        raise ValueError("state left the interior")
    return D


def build_augmented_system(state, B, K, bundle, xbar):
    """Schur complement ``Z`` of the reduced Newton system and its right-hand side.

    ``Z = [[K, 0], [0, 0]] + [B; e^T] D^{-1} [B^T, e]``, symmetric positive
    definite with a dense last row and column.
    """
    Dinv = 1.0 / barrier_diagonal(state, xbar)
    B = sp.csr_matrix(B)
    BD = B @ sp.diags(Dinv)
    c = np.asarray(B @ Dinv).ravel()
    Z11 = sp.csr_matrix(K + BD @ B.T)
    Z = sp.bmat([[Z11, c[:, None]], [c[None, :], np.array([[Dinv.sum()]])]], format="csr")
    Z.sort_indices()
    t = Dinv * bundle.res3_tilde
    rhs = np.concatenate([bundle.res1 + B @ t, [bundle.res2 + t.sum()]])
    return Z, rhs


def recover_dx(d_u, d_lam, bundle, D, B):
    """Design step from the reduced system: ``D^{-1} (B^T d_u + e d_lambda - res3_tilde)``."""
    return (B.T @ d_u + d_lam - bundle.res3_tilde) / D


def recover_dphi_dpsi(d_x, bundle, state, xbar):
    """Multiplier steps from the linearized complementarity rows."""
    d_phi = (bundle.res4 - state.phi * d_x) / state.x
    d_psi = (bundle.res5 + state.psi * d_x) / (xbar - state.x)
    return d_phi, d_psi


def newton_direction(state, problem, bundle, K, B, solver, cg_tol=1e-2, cg_stop="relative"):
    """Full Newton step ``(d_u, d_lambda, d_x, d_phi, d_psi)`` and the solve outcome."""
    Z, rhs = build_augmented_system(state, B, K, bundle, problem.xbar)
    if cg_stop == "kkt":
        # back-substitution satisfies rows 3-5 exactly, so the CG residual is
        # the whole Newton residual; measure it against the KKT residual
        cg_tol = cg_tol * kkt_norm(bundle) / max(float(np.linalg.norm(rhs)), 1e-300)
        cg_stop = "relative"
    out = solver.solve(Z, rhs, cg_tol, cg_stop, augmented=True)
    d_u, d_lam = out.solution[:-1], float(out.solution[-1])
    D = barrier_diagonal(state, problem.xbar)
    # re-solve the last row of Z for d_lambda with d_u fixed so that
    # e^T d_x = res2 holds exactly and inexact solves cannot drift the volume
    w = (B.T @ d_u - bundle.res3_tilde) / D
    d_lam = float((bundle.res2 - w.sum()) / (1.0 / D).sum())
    d_x = recover_dx(d_u, d_lam, bundle, D, B)
    d_phi, d_psi = recover_dphi_dpsi(d_x, bundle, state, problem.xbar)
    return (d_u, d_lam, d_x, d_phi, d_psi), out


def kkt_norm(bundle):
    """Euclidean norm of the stacked residuals ``res1 .. res5``."""
    return float(np.sqrt(bundle.res1 @ bundle.res1 + bundle.res2**2 + bundle.res3 @ bundle.res3
                         + bundle.res4 @ bundle.res4 + bundle.res5 @ bundle.res5))


def _ratio_min(v, dv):
    neg = dv < 0
    return float(np.min(-v[neg] / dv[neg])) if np.any(neg) else math.inf


def step_length(x, d_x, xbar, shrink=0.9):
    """Largest damped step keeping ``0 < x + alpha d_x < xbar``, capped at 1."""
    x, d_x = np.asarray(x, dtype=float), np.asarray(d_x, dtype=float)
    alpha_l = shrink * _ratio_min(x, d_x)
    alpha_u = shrink * _ratio_min(xbar - x, -d_x)
    return min(alpha_l, alpha_u, 1.0)


def _joint_step(state, d, xbar, shrink):
    _, _, d_x, d_phi, d_psi = d
    return min(
        step_length(state.x, d_x, xbar, shrink),
        shrink * _ratio_min(state.phi, d_phi),
        shrink * _ratio_min(state.psi, d_psi),
        1.0,
    )


def _newton_measure(bundle, f, phi, psi):
    return (np.linalg.norm(bundle.res1) / np.linalg.norm(f)
            + np.linalg.norm(bundle.res3_tilde) / (np.linalg.norm(phi) + np.linalg.norm(psi)))


def newton_stop(bundle, f, phi, psi, tau_nwt=1e-1):
    """Inexact Newton termination test (inclusive)."""
    return bool(_newton_measure(bundle, f, phi, psi) <= tau_nwt)


def scaled_kkt_error(state, bundle, f, xbar):
    """Scaled KKT error including complementarity terms (diagnostic only)."""
    x, phi, psi = state.x, state.phi, state.psi
    scale = np.linalg.norm(phi) * np.linalg.norm(x)
    return float(_newton_measure(bundle, f, phi, psi) + phi @ x / scale + psi @ (xbar - x) / scale)


def lemma_gap_check(x, x_star, s, tau):
    """Check ``|x*_i - x_i| / (x*_i x_i) <= tau / s`` elementwise.

    Returns ``(passed, max_violation)`` where the violation is the largest
    excess of the left side over the bound (0 when all hold).
    """
    x, x_star = np.asarray(x, dtype=float), np.asarray(x_star, dtype=float)
    lhs = np.abs(x_star - x) / (x_star * x)
    excess = float(np.max(lhs - tau / s, initial=0.0))
    return excess <= 0.0, max(excess, 0.0)


def barrier_iterations(tau_ip, sigma=0.2, s0=1.0):
    """Number of barrier reductions until ``s <= tau_ip``."""
    s, k = s0, 0
    while s > tau_ip:
        s *= sigma
        k += 1
    return k


def ipm_solve(problem, config=IpmConfig(), model=None, solver=None, callback=None):
    """Run the interior point method.

    Parameters
    ----------
    problem : fem.Problem
    config : IpmConfig
    model : VtsModel or SimpModel, optional
        Defaults to the model named in ``problem.spec``.
    solver : optional
        Linear solver arm; built from ``config.linear_solver`` when omitted.
    callback : callable, optional
        Called as ``callback(state, bundle, K, B)`` after every accepted step.

    Returns
    -------
    state : IpmState
    runlog : RunLog
        One row per linear system (the first row is the initial equilibrium
        solve).

    Raises
    ------
    ConvergenceError
        When one barrier value needs more than ``config.newton_cap`` Newton steps.
    """
    t_start = time.perf_counter()
    model = model or make_model(problem)
    solver = solver or make_solver(config.linear_solver, problem, config.mg_sweeps, config.cg_maxit)
    runlog = RunLog(f"ipm-{solver.name}", IPM_COLUMNS)
    if config.tau_ip < 1e-12:
        runlog.notes.append("tau_ip below 1e-12: beyond validated regime")
        log.warning("tau_ip=%g is beyond the validated regime", config.tau_ip)
    f = problem.f
    cg_tol = config.cg_tol
    cg_stop = config.cg_stop
    if cg_stop == "auto":
        cg_stop = "kkt" if getattr(model, "name", "vts") == "simp" else "relative"

    t0 = time.perf_counter()
    state, out = init_state(problem, solver, model, cg_tol, cg_stop)
    lin_time = time.perf_counter() - t0
    K = model.stiffness(state.x)
    B = model.sensitivity(state.u, state.x)
    bundle = compute_residuals(state, problem, K=K, B=B)
    runlog.append(outer_iter=0, newton_steps=0, s=state.s, r=state.r, cg_iters=out.iterations,
                  objective=compliance(f, state.u), res1_rel=_rel(bundle.res1, f),
                  kkt_error=scaled_kkt_error(state, bundle, f, problem.xbar), alpha=0.0, cg_tol=cg_tol)

    outer, newton_steps = 0, 0
    while max(state.s, state.r) > config.tau_ip:
        t0 = time.perf_counter()
        d, out = newton_direction(state, problem, bundle, K, B, solver, cg_tol, cg_stop)
        lin_time += time.perf_counter() - t0
        alpha = _joint_step(state, d, problem.xbar, config.step_shrink)
        d_u, d_lam, d_x, d_phi, d_psi = d
        state.u = state.u + alpha * d_u
        state.lam = state.lam + alpha * d_lam
        state.x = state.x + alpha * d_x
        state.phi = state.phi + alpha * d_phi
        state.psi = state.psi + alpha * d_psi
        newton_steps += 1

        K = model.stiffness(state.x)
        B = model.sensitivity(state.u, state.x)
        bundle = compute_residuals(state, problem, K=K, B=B)
        runlog.append(outer_iter=outer + 1, newton_steps=newton_steps, s=state.s, r=state.r,
                      cg_iters=out.iterations, objective=compliance(f, state.u),
                      res1_rel=_rel(bundle.res1, f),
                      kkt_error=scaled_kkt_error(state, bundle, f, problem.xbar),
                      alpha=alpha, cg_tol=cg_tol)
        if callback is not None:
            callback(state, bundle, K, B)

        if newton_stop(bundle, f, state.phi, state.psi, config.tau_nwt):
            state.s *= config.sigma_s
            state.r *= config.sigma_r
            outer += 1
            newton_steps = 0
            if config.cg_tol_mode == "decreasing":
                cg_tol *= 0.5
            # the barrier terms of res4/res5 changed
            bundle = compute_residuals(state, problem, K=K, B=B)
        elif newton_steps >= config.newton_cap:
            runlog.status = "failed"
            runlog.wall_time = time.perf_counter() - t_start
            raise ConvergenceError(
                f"Newton method needed more than {config.newton_cap} steps at s={state.s:.3e}",
                runlog, state)

    runlog.status = "converged"
    runlog.objective = compliance(f, state.u)
    runlog.x_min = float(state.x.min())
    runlog.linear_time = lin_time
    runlog.wall_time = time.perf_counter() - t_start
    runlog.extra["outer_iters"] = outer
    return state, runlog


def _rel(res, f):
    return float(np.linalg.norm(res) / np.linalg.norm(f))
