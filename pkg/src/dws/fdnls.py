"""Full-dispersion envelope equation and its two small-amplitude branches.

In envelope variables K (conjugate to (eps x, eps z)) the equation reads

    eps^-2 g(e + eps K) zeta + 2 f(e + eps K) zeta - (11/8) chi0(eps K)(|zeta|^2 zeta) = 0

with zeta supported in the disc |K| < delta/eps.  Unknowns live in the class
zeta(x,z) = conj(zeta(-x,z)) = zeta(x,-z).  Newton steps are solved with CG on
the normal equations, preconditioned by 2 + K1^2 + 2 K3^2 (the eps -> 0 limit
of the linear symbol).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .krylov import normal_cg
from .nls import GroundState, precond_symbol
from .report import ConvergenceError, SolverReport
from .spectral_core import (
    BandLimitError,
    Grid2D,
    SpectralField,
    apply_multiplier,
    in_disc,
    mask_field,
    padded_product,
    sobolev_norm,
    sup_norm,
    symmetrize,
)
from .symbols import DEFAULT_DELTA, shifted_symbol

CUBIC = 11.0 / 8.0
CLASS = "conj-x-even-z"
EPS_RANGE = (0.0, 0.1)

Remainder = Callable[[SpectralField], SpectralField]


def envelope_band(grid: Grid2D, eps: float, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Mask of the envelope disc |K| < delta/eps."""
    K1, K3 = grid.kmesh
    return in_disc(K1, K3, delta / eps)


def band_project(zeta: SpectralField, eps: float, delta: float = DEFAULT_DELTA) -> SpectralField:
    return mask_field(zeta, envelope_band(zeta.grid, eps, delta))


def fdnls_symbol(grid: Grid2D, eps: float) -> np.ndarray:
    K1, K3 = grid.kmesh
    return shifted_symbol(K1, K3, eps)


def project_class(zeta: SpectralField, eps: float, delta: float = DEFAULT_DELTA) -> SpectralField:
    """Band cutoff followed by the reflection class (the two commute)."""
    return symmetrize(band_project(zeta, eps, delta), CLASS)


def _check_band(zeta: SpectralField, eps: float, delta: float, tol: float = 1e-12):
    p = np.abs(zeta.coeffs) ** 2
    total = p.sum()
    out = p[~envelope_band(zeta.grid, eps, delta)].sum()
    if total > 0 and out > tol ** 2 * total:
        raise BandLimitError(
            f"envelope has relative spectral mass {np.sqrt(out / total):.2e} outside |K| < delta/eps")


def _cubic(zeta: SpectralField) -> SpectralField:
    if zeta.real:
        return padded_product(zeta, zeta, zeta)
    return padded_product(zeta, zeta, zeta, conj=(1,))


def fdnls_residual(zeta: SpectralField, eps: float, delta: float = DEFAULT_DELTA,
                   remainder: Remainder | None = None) -> SpectralField:
    """Left-hand side of the full-dispersion equation, plus ``remainder(zeta)`` if given.

    Raises BandLimitError when zeta has content outside |K| < delta/eps.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_band(zeta, eps, delta)
    lin = apply_multiplier(zeta, fdnls_symbol(zeta.grid, eps))
    res = lin - CUBIC * band_project(_cubic(zeta), eps, delta)
    if remainder is not None:
        res = res + remainder(zeta)
    return res


def jacobian(zeta: SpectralField, eps: float, delta: float = DEFAULT_DELTA):
    """Real-linear derivative d -> L d - (11/8) chi0(2|zeta|^2 d + zeta^2 conj(d))."""
    sym = fdnls_symbol(zeta.grid, eps)
    z = zeta.as_complex()
    abs2 = padded_product(z, z, conj=(1,))
    sq = padded_product(z, z)

    def apply(d: SpectralField) -> SpectralField:
        d = d.as_complex()
        nl = 2.0 * padded_product(abs2, d) + padded_product(sq, d, conj=(1,))
        return apply_multiplier(d, sym) - CUBIC * band_project(nl, eps, delta)

    return apply


def class_defect(zeta: SpectralField) -> float:
    """Relative distance of zeta from its reflection class."""
    n = sobolev_norm(zeta, 0)
    return sobolev_norm(zeta - symmetrize(zeta, CLASS), 0) / n if n > 0 else 0.0


def jacobian_floor(zeta: SpectralField, eps: float, delta: float = DEFAULT_DELTA,
                   seed: int = 0, maxiter: int = 60) -> float:
    """Estimate of the smallest |eigenvalue| of the Jacobian on the band and reflection class.

    The real-linear operator is self-adjoint for Re<u, v>; its square is
    handled by LOBPCG on the stacked (real, imaginary) coefficient vector.
    """
    g = zeta.grid
    J = jacobian(zeta, eps, delta)
    pre = 1.0 / precond_symbol(g) ** 2
    shift = 4.0 * float(np.max(np.abs(fdnls_symbol(g, eps))[envelope_band(g, eps, delta)])) ** 2
    n = g.size

    def to_field(v):
        return SpectralField(g, coeffs=(v[:n] + 1j * v[n:]).reshape(g.shape), real=False)

    def to_vec(f):
        c = f.coeffs.ravel()
        return np.concatenate([c.real, c.imag])

    def sq(V):
        V = V.reshape(2 * n, -1)
        out = np.empty_like(V)
        for j in range(V.shape[1]):
            f = to_field(V[:, j])
            p = project_class(f, eps, delta)
            out[:, j] = to_vec(project_class(J(project_class(J(p), eps, delta)), eps, delta)
                               + shift * (f - p))
        return out

    def prec(V):
        V = V.reshape(2 * n, -1)
        w = np.concatenate([pre.ravel(), pre.ravel()])
        return V * w[:, None]

    A = LinearOperator((2 * n, 2 * n), matvec=sq, matmat=sq, dtype=float)
    M = LinearOperator((2 * n, 2 * n), matvec=prec, matmat=prec, dtype=float)
    rng = np.random.default_rng(seed)
    X0 = np.stack([to_vec(project_class(to_field(rng.normal(size=2 * n)), eps, delta))
                   for _ in range(3)], axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        vals, _ = lobpcg(A, X0, M=M, largest=False, tol=1e-6, maxiter=maxiter)
    return float(np.sqrt(max(vals.min(), 0.0)))


@dataclass(frozen=True)
class FdnlsSolution:
    zeta: SpectralField
    epsilon: float
    branch: str
    residual_h1: float
    h1_distance_to_ground_state: float
    sup_distance_to_ground_state: float
    delta: float = DEFAULT_DELTA

    def sidecar(self) -> dict:
        return {"epsilon": self.epsilon, "branch": self.branch, "delta": self.delta,
                "residual_h1": self.residual_h1,
                "h1_distance": self.h1_distance_to_ground_state,
                "sup_distance": self.sup_distance_to_ground_state}


def _sign(branch: str) -> float:
    if branch not in ("+", "-"):
        raise ValueError(f"branch must be '+' or '-', got {branch!r}")
    return 1.0 if branch == "+" else -1.0


def _newton(zeta: SpectralField, eps: float, delta: float, tol: float, maxiter: int,
            remainder_value: SpectralField | None, rep: SolverReport) -> SpectralField:
    M = precond_symbol(zeta.grid)

    def proj(f):
        return project_class(f, eps, delta)

    def residual(z):
        r = fdnls_residual(z, eps, delta)
        return r if remainder_value is None else r + remainder_value

    history = []
    for it in range(maxiter):
        R = residual(zeta)
        res = sobolev_norm(R, 1)
        rep.log(res)
        history.append(res)
        defect = class_defect(zeta)
        rep.extra["max_class_defect"] = max(rep.extra.get("max_class_defect", 0.0), defect)
        if not np.isfinite(res):
            break
        if res <= tol:
            rep.converged = True
            return zeta
        # judged per call: earlier outer passes solved a different frozen problem
        if len(history) > 3 and res > 1e3 * min(history):
            break
        d, info = normal_cg(jacobian(zeta, eps, delta), -R, M, project=proj,
                            rtol=1e-13, maxiter=400)
        rep.extra.setdefault("cg_iterations", []).append(info["iterations"])
        # backtracking on the H^1 residual keeps far-from-seed solves (large eps) on track
        step = 1.0
        for _ in range(12):
            trial = proj(zeta + step * d)
            if sobolev_norm(residual(trial), 1) < res:
                break
            step *= 0.5
        rep.extra.setdefault("steps", []).append(step)
        zeta = trial
    rep.converged = False
    return zeta


def solve_fdnls(eps: float, branch: str, ground: GroundState, tol: float = 1e-9,
                delta: float = DEFAULT_DELTA, remainder: Remainder | None = None,
                seed: SpectralField | None = None, maxiter: int = 60,
                outer_maxiter: int = 30, jacobian_floor_min: float | None = 0.5,
                ) -> tuple[FdnlsSolution, SolverReport]:
    """Newton continuation of the branch from +-zeta0.

    With ``remainder`` the coupling term is lagged: each outer pass freezes
    remainder(zeta) and runs Newton on the full-dispersion part, until the
    coupled residual meets ``tol``.  ``jacobian_floor_min`` (None to skip)
    flags eps as too large when the Jacobian floor estimate drops below it.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    s = _sign(branch)
    zeta0 = ground.zeta0.as_complex()
    rep = SolverReport(f"newton-fdnls[{branch}]")
    rep.flags["extrapolation"] = not (EPS_RANGE[0] < eps <= EPS_RANGE[1])
    rep.flags["remainder_coupling"] = remainder is not None
    start = seed.as_complex() if seed is not None else s * zeta0
    zeta = project_class(start, eps, delta)
    if remainder is None:
        zeta = _newton(zeta, eps, delta, tol, maxiter, None, rep)
    else:
        outer = SolverReport("remainder-coupling")
        for _ in range(outer_maxiter):
            rv = remainder(zeta)
            zeta = _newton(zeta, eps, delta, 0.1 * tol, maxiter, rv, rep)
            full = sobolev_norm(fdnls_residual(zeta, eps, delta, remainder), 1)
            outer.log(full)
            if full <= tol:
                outer.converged = True
                break
            if len(outer.contraction) >= 2 and min(outer.contraction[-2:]) >= 1.0:
                break
        rep.extra["outer"] = outer.to_dict()
        rep.converged = outer.converged
    res = sobolev_norm(fdnls_residual(zeta, eps, delta, remainder), 1)
    if not rep.converged:
        rep.message = f"Newton did not reach {tol:.1e}; last residual {res:.3e}"
        raise ConvergenceError(rep.message, rep)
    if jacobian_floor_min is not None:
        floor = jacobian_floor(zeta, eps, delta)
        rep.flags["jacobian_floor"] = floor
        rep.flags["eps_too_large"] = floor < jacobian_floor_min
    diff = zeta - s * zeta0
    sol = FdnlsSolution(zeta, float(eps), branch, res, sobolev_norm(diff, 1), sup_norm(diff), delta)
    return sol, rep


def commensurate_half_length(length: float, eps_values) -> float:
    """Smallest multiple of pi*eps_max near ``length`` such that length/eps is a multiple of pi
    for every eps in ``eps_values`` whose ratio to eps_max is 1/integer."""
    eps_values = [float(e) for e in eps_values]
    emax = max(eps_values)
    for e in eps_values:
        r = emax / e
        if abs(r - round(r)) > 1e-9:
            raise ValueError(f"eps = {e} is not eps_max/integer; no common envelope box exists")
    m = max(1, round(length / (np.pi * emax)))
    return m * np.pi * emax
