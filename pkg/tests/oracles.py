"""Dense reference computations used by the tests."""
import numpy as np

from mgtopo.fem import assemble_B, assemble_stiffness, element_energies
from mgtopo.sparse import cholesky_factor


def kkt_map(mesh, f, V, xbar, s, r, u, lam, x, phi, psi):
    """The perturbed KKT equations F(z) = 0 of the variable thickness sheet."""
    K = assemble_stiffness(mesh, x)
    g = element_energies(mesh, u)
    return np.concatenate([
        K @ u - f,
        [x.sum() - V],
        0.5 * g + lam + phi - psi,
        phi * x - s,
        psi * (xbar - x) - r,
    ])


def dense_newton_matrix(mesh, u, x, phi, psi, xbar):
    """Jacobian of :func:`kkt_map` in (u, lambda, x, phi, psi)."""
    n, m = mesh.n, mesh.m
    K = assemble_stiffness(mesh, x).toarray()
    B = assemble_B(mesh, u).toarray()
    e = np.ones((m, 1))
    Z = np.zeros
    I = np.eye(m)
    return np.block([
        [K, Z((n, 1)), B, Z((n, m)), Z((n, m))],
        [Z((1, n)), Z((1, 1)), e.T, Z((1, m)), Z((1, m))],
        [B.T, e, Z((m, m)), I, -I],
        [Z((m, n)), Z((m, 1)), np.diag(phi), np.diag(x), Z((m, m))],
        [Z((m, n)), Z((m, 1)), -np.diag(psi), Z((m, m)), np.diag(xbar - x)],
    ])


def finite_difference_jacobian(fun, z, h=1e-6):
    f0 = fun(z)
    J = np.zeros((f0.size, z.size))
    for k in range(z.size):
        dz = np.zeros_like(z)
        dz[k] = h
        J[:, k] = (fun(z + dz) - fun(z - dz)) / (2 * h)
    return J


def project_capped_simplex(y, V, xbar, lower=0.0):
    """Euclidean projection onto {lower <= x <= xbar, sum x = V}."""
    lo, hi = y.min() - xbar - 1.0, y.max() + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(y - mid, lower, xbar).sum() > V:
            lo = mid
        else:
            hi = mid
    return np.clip(y - 0.5 * (lo + hi), lower, xbar)


def projected_gradient(problem, tol=1e-8, maxit=200_000):
    """Minimize 1/2 f^T K(x)^{-1} f over the capped simplex by projected gradient.

    Step sizes follow an Armijo backtracking rule; stops when the projected
    step changes x by less than `tol` in the max norm.
    """
    mesh, f, V, xbar = problem.mesh, problem.f, problem.V, problem.xbar

    def evaluate(x):
        # void elements may leave K singular; the load must stay in its range
        K = assemble_stiffness(mesh, x).toarray()
        u = np.linalg.lstsq(K, f, rcond=1e-13)[0]
        if np.linalg.norm(K @ u - f) > 1e-9 * np.linalg.norm(f):
            return np.inf, None
        return 0.5 * f @ u, -0.5 * element_energies(mesh, u)

    x = np.full(mesh.m, V / mesh.m)
    c, g = evaluate(x)
    t = 1.0
    for _ in range(maxit):
        while True:
            x_new = project_capped_simplex(x - t * g, V, xbar)
            c_new, g_new = evaluate(x_new)
            if c_new <= c + g @ (x_new - x) + 0.5 / t * np.sum((x_new - x) ** 2):
                break
            t *= 0.5
        step = np.max(np.abs(x_new - x))
        x, c, g = x_new, c_new, g_new
        if step <= tol:
            return x
        t *= 2.0
    raise RuntimeError("projected gradient did not converge")


def quadrature_stiffness(E, nu):
    """Bilinear unit square, plane stress, 2 x 2 Gauss rule."""
    C = E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
    g = 0.5 + np.array([-1, 1]) / (2 * np.sqrt(3))
    K = np.zeros((8, 8))
    for x in g:
        for y in g:
            dN = np.array([[-(1 - y), -(1 - x)], [1 - y, -x], [y, x], [-y, 1 - x]])
            Bm = np.zeros((3, 8))
            Bm[0, 0::2] = dN[:, 0]
            Bm[1, 1::2] = dN[:, 1]
            Bm[2, 0::2] = dN[:, 1]
            Bm[2, 1::2] = dN[:, 0]
            K += 0.25 * Bm.T @ C @ Bm
    return K


def stationary_factor(K, h, f, cycles=6):
    """Energy-norm errors of the stationary iteration ``z += h(f - K z)``."""
    exact = cholesky_factor(K).solve(f)
    z = np.zeros_like(f)
    errs = []
    for _ in range(cycles):
        z = z + h(f - K @ z)
        e = z - exact
        errs.append(np.sqrt(e @ (K @ e)))
    return errs
