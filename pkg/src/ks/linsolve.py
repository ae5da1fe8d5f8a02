"""Matrix-free Krylov solvers for the two implicit solves of each time step.

Step 1 needs a symmetric positive-definite shifted-Helmholtz solve (CG);
Step 2 needs a nonsymmetric advection-diffusion solve (BiCGSTAB). Both work
on (ny, nx) field arrays through stencil closures.

The grid Laplacian is self-adjoint under the trapezoidal quadrature inner
product (not under the plain one), so CG optionally takes a weight array and
runs in that inner product while the convergence test stays on the plain
relative 2-norm residual.

``spectral_helmholtz_inverse`` returns the exact inverse of sigma*I - Lap_h
via DCT-I (the mirror-ghost stencil is diagonal in that basis); it serves as
a preconditioner and keeps iteration counts flat under grid refinement.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from ks.errors import SolverError


@dataclass
class LinearOperator:
    """Matrix-free operator: ``apply`` maps a field to a field."""
    apply: callable
    symmetric: bool = False

    def __call__(self, f):
        return self.apply(f)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def _l2(v):
    return float(np.sqrt(np.vdot(v, v).real))


def spectral_helmholtz_inverse(grid, sigma: float):
    """Exact inverse of sigma*I - Lap_h on the mirror-ghost Neumann grid."""
    lam_x = (2.0 * np.cos(np.pi * np.arange(grid.nx) / (grid.nx - 1)) - 2.0) / grid.hx**2
    lam_y = (2.0 * np.cos(np.pi * np.arange(grid.ny) / (grid.ny - 1)) - 2.0) / grid.hy**2
    denom = sigma - lam_x[None, :] - lam_y[:, None]

    def apply(r):
        # scipy.fft backward normalization: idctn inverts dctn exactly
        return idctn(dctn(r, type=1) / denom, type=1)

    return apply


def solve_spd(op, rhs, tol=1e-10, maxit=None, x0=None, precond=None, weights=None):
    """Preconditioned conjugate gradients.

    weights: optional array defining the inner product in which ``op`` (and
    the preconditioner) are self-adjoint. Convergence is still declared on
    ``||op(x)-rhs||_2 / ||rhs||_2 <= tol``.
    """
    if maxit is None:
        maxit = 10 * rhs.size
    w = weights if weights is not None else 1.0

    def dot(a, b):
        return float(np.sum(w * a * b))

    b_norm = _l2(rhs)
    if b_norm == 0.0:
        return np.zeros_like(rhs), SolveReport(0, 0.0, True)

    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - op(x)
    if _l2(r) / b_norm <= tol:
        return x, SolveReport(0, _l2(r) / b_norm, True)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = dot(r, z)
    for it in range(1, maxit + 1):
        ap = op(p)
        pap = dot(p, ap)
        if pap <= 0.0:
            raise SolverError("CG breakdown: operator not positive definite",
                              SolveReport(it, _l2(r) / b_norm, False))
        a = rz / pap
        x += a * p
        r -= a * ap
        res = _l2(r) / b_norm
        if res <= tol:
            return x, SolveReport(it, res, True)
        z = precond(r) if precond is not None else r
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    report = SolveReport(maxit, _l2(rhs - op(x)) / b_norm, False)
    raise SolverError(f"CG failed to converge in {maxit} iterations "
                      f"(residual {report.residual:.3e})", report)


def solve_nonsym(op, rhs, tol=1e-10, maxit=None, x0=None, precond=None):
    """Preconditioned BiCGSTAB with the same residual contract as solve_spd."""
    if maxit is None:
        maxit = 10 * rhs.size
    b_norm = _l2(rhs)
    if b_norm == 0.0:
        return np.zeros_like(rhs), SolveReport(0, 0.0, True)

    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - op(x)
    res = _l2(r) / b_norm
    if res <= tol:
        return x, SolveReport(0, res, True)
    r0 = r.copy()
    rho_old = 1.0
    a = 1.0
    om = 1.0
    v = np.zeros_like(rhs)
    p = np.zeros_like(rhs)
    tiny = 1e-300
    for it in range(1, maxit + 1):
        rho = float(np.sum(r0 * r))
        if abs(rho) < tiny:
            raise SolverError("BiCGSTAB breakdown (rho ~ 0)",
                              SolveReport(it, _l2(rhs - op(x)) / b_norm, False))
        beta = (rho / rho_old) * (a / om)
        p = r + beta * (p - om * v)
        ph = precond(p) if precond is not None else p
        v = op(ph)
        denom = float(np.sum(r0 * v))
        if abs(denom) < tiny:
            raise SolverError("BiCGSTAB breakdown (r0.v ~ 0)",
                              SolveReport(it, _l2(rhs - op(x)) / b_norm, False))
        a = rho / denom
        s = r - a * v
        x = x + a * ph
        if _l2(s) / b_norm <= tol:
            return x, SolveReport(it, _l2(rhs - op(x)) / b_norm, True)
        sh = precond(s) if precond is not None else s
        t = op(sh)
        tt = float(np.sum(t * t))
        if tt < tiny:
            raise SolverError("BiCGSTAB breakdown (t ~ 0)",
                              SolveReport(it, _l2(rhs - op(x)) / b_norm, False))
        om = float(np.sum(t * s)) / tt
        x = x + om * sh
        r = s - om * t
        res = _l2(r) / b_norm
        if res <= tol:
            return x, SolveReport(it, _l2(rhs - op(x)) / b_norm, True)
        rho_old = rho
    report = SolveReport(maxit, _l2(rhs - op(x)) / b_norm, False)
    raise SolverError(f"BiCGSTAB failed to converge in {maxit} iterations "
                      f"(residual {report.residual:.3e})", report)
