"""Preconditioned conjugate gradients on the normal equations.

Used by the Newton solvers for the ground state and the full-dispersion
envelope equation.  Unknowns are SpectralFields; the operator is self-adjoint
for the real inner product Re <u, v>, possibly indefinite.  With a positive
Fourier-multiplier preconditioner P = M^{-1/2} we solve

    (P A P)^2 y = (P A P) P b,    x = P y,

which is symmetric positive definite whenever A is invertible on the
subspace defined by ``project``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .spectral_core import SpectralField, apply_multiplier


def _dot(a: SpectralField, b: SpectralField) -> float:
    return float(np.real(np.vdot(b.coeffs, a.coeffs)))


def normal_cg(apply_A: Callable[[SpectralField], SpectralField], b: SpectralField,
              precond_symbol: np.ndarray, project: Callable | None = None,
              rtol: float = 1e-12, maxiter: int = 500) -> tuple[SpectralField, dict]:
    """Solve A x = b by CG on the symmetrically preconditioned normal equations.

    ``precond_symbol`` is the (positive) symbol M of the free operator.
    Returns x and a dict with iteration count and final relative residual of A x = b.
    """
    proj = project or (lambda f: f)
    half = 1.0 / np.sqrt(precond_symbol)

    def P(f):
        return apply_multiplier(f, half)

    def Ahat(f):
        return proj(P(apply_A(proj(P(f)))))

    rhs = Ahat(proj(P(b)))
    y = SpectralField.zeros(b.grid, real=b.real)
    r = rhs
    p = r
    rr = _dot(r, r)
    r0 = np.sqrt(rr)
    info = {"iterations": 0, "converged": r0 == 0.0}
    if r0 == 0.0:
        return y, info
    for it in range(1, maxiter + 1):
        q = Ahat(Ahat(p))
        alpha = rr / _dot(p, q)
        y = y + alpha * p
        r = r - alpha * q
        rr_new = _dot(r, r)
        info["iterations"] = it
        if np.sqrt(rr_new) <= rtol * r0:
            info["converged"] = True
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    x = proj(P(y))
    resid = apply_A(x) - b
    info["relative_residual"] = np.sqrt(_dot(resid, resid) / max(_dot(b, b), 1e-300))
    return x, info
