"""Conjugate gradients preconditioned by a multigrid V-cycle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["PcgOutcome", "BreakdownError", "stopping_rule_ip", "StoppingRule", "pcg"]

_FLOOR = 1e-300


class BreakdownError(ArithmeticError):
    """CG met a search direction of non-positive curvature."""


@dataclass
class PcgOutcome:
    solution: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool


def stopping_rule_ip(residual, b, tol=1e-2, mode="relative"):
    """Inexact-Newton CG stopping test.

    ``mode="relative"`` tests ``||residual|| <= tol * ||b||``; ``mode="product"``
    is the literal ``||residual|| * ||b|| <= tol``.
    """
    rn = float(np.linalg.norm(residual))
    bn = float(np.linalg.norm(b))
    if mode == "relative":
        return rn <= tol * max(bn, _FLOOR)
    if mode == "product":
        return rn * bn <= tol
    raise ValueError(f"unknown stopping mode {mode!r}")


@dataclass
class StoppingRule:
    """Callable wrapper around :func:`stopping_rule_ip` with fixed settings."""

    tol: float = 1e-2
    mode: str = "relative"

    def __call__(self, residual, b):
        return stopping_rule_ip(residual, b, self.tol, self.mode)


def _as_operator(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    return lambda v: A @ v


def pcg(A, b, precond=None, stop: Callable | None = None, maxit=1000, z0=None):
    """Preconditioned conjugate gradients.

    Follows the textbook recurrence with residual ``r = A z - b``. The loop
    ends as soon as ``stop(r, b)`` holds (also before the first iteration)
    or after `maxit` iterations.

    Parameters
    ----------
    A : matrix or callable
        SPD operator.
    b : ndarray
        Right-hand side.
    precond : callable, optional
        SPD preconditioner ``r -> M^{-1} r``; identity when omitted.
    stop : callable, optional
        ``stop(residual, b) -> bool``; defaults to a relative residual of 1e-8.
    maxit : int
        Iteration cap.
    z0 : ndarray, optional
        Initial guess (zeros by default).

    Raises
    ------
    BreakdownError
        If ``p^T A p <= 0`` for some search direction.
    """
    op = _as_operator(A)
    M = precond if precond is not None else (lambda v: v.copy())
    stop = stop if stop is not None else StoppingRule(1e-8)
    b = np.asarray(b, dtype=np.float64)
    z = np.zeros_like(b) if z0 is None else np.array(z0, dtype=np.float64)

    r = op(z) - b
    if stop(r, b):
        return PcgOutcome(z, 0, float(np.linalg.norm(r)), True)
    y = M(r)
    p = -y
    ry = r @ y
    for it in range(1, maxit + 1):
        Ap = op(p)
        pAp = p @ Ap
        if not pAp > 0:
            raise BreakdownError(
                f"operator not positive definite along search direction (p^T A p = {pAp:.3e}, iteration {it})"
            )
        alpha = ry / pAp
        z += alpha * p
        r = r + alpha * Ap
        if stop(r, b):
            return PcgOutcome(z, it, float(np.linalg.norm(r)), True)
        y = M(r)
        ry_new = r @ y
        beta = ry_new / ry
        p = -y + beta * p
        ry = ry_new
    return PcgOutcome(z, maxit, float(np.linalg.norm(r)), False)
