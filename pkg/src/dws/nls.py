"""Ground state of the stationary anisotropic cubic NLS and its linearisation.

The equation is

    -1/2 zeta_xx - zeta_zz + zeta - (11/16) |zeta|^2 zeta = 0

solved in the original (x, z) coordinates: Petviashvili iteration on the
fixed-point form zeta = M^{-1} N(zeta) (M = 1 + k1^2/2 + k3^2, N the cubic),
followed by a Newton polish whose linear solves use CG on the normal
equations preconditioned by the free symbol.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .krylov import normal_cg
from .report import ConvergenceError, SolverReport
from .spectral_core import (
    Grid2D,
    SpectralField,
    apply_multiplier,
    boundary_ring_mass,
    inner,
    padded_product,
    sobolev_norm,
    symmetrize,
)

CUBIC = 11.0 / 16.0


def free_symbol(k1, k3):
    return 1.0 + 0.5 * k1 ** 2 + k3 ** 2


def precond_symbol(grid: Grid2D) -> np.ndarray:
    """Symbol 2 + k1^2 + 2 k3^2 of the free part, used as preconditioner."""
    K1, K3 = grid.kmesh
    return 2.0 + K1 ** 2 + 2.0 * K3 ** 2


def cubic(zeta: SpectralField) -> SpectralField:
    """|zeta|^2 zeta, alias-free."""
    if zeta.real:
        return padded_product(zeta, zeta, zeta)
    return padded_product(zeta, zeta, zeta, conj=(1,))


def nls_residual(zeta: SpectralField, coefficient: float = CUBIC) -> SpectralField:
    """-zeta_xx/2 - zeta_zz + zeta - coefficient |zeta|^2 zeta."""
    return apply_multiplier(zeta, free_symbol) - coefficient * cubic(zeta)


def nls_functional(zeta: SpectralField) -> float:
    """int (|zeta_x|^2/4 + |zeta_z|^2/2 + |zeta|^2/2 - (11/64)|zeta|^4)."""
    zx, zz = zeta.dx().values, zeta.dz().values
    a2 = np.abs(zeta.values) ** 2
    dens = 0.25 * np.abs(zx) ** 2 + 0.5 * np.abs(zz) ** 2 + 0.5 * a2 - (11.0 / 64.0) * a2 ** 2
    return float(dens.sum() * zeta.grid.cell_area)


@dataclass(frozen=True)
class GroundState:
    zeta0: SpectralField
    residual_h1: float
    peak: float
    iterations: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid2D:
        return self.zeta0.grid

    def sidecar(self) -> dict:
        g = self.grid
        return {"residual_h1": self.residual_h1, "peak": self.peak,
                "grid": {"nx": g.nx, "nz": g.nz, "Lx": g.Lx, "Lz": g.Lz},
                "iterations": dict(self.iterations)}


def gaussian_seed(grid: Grid2D, amplitude: float = 2.6) -> SpectralField:
    X, Z = grid.mesh
    return SpectralField(grid, values=amplitude * np.exp(-(X ** 2 / 2 + Z ** 2) / 2))


def petviashvili(seed: SpectralField, tol: float = 1e-12, maxiter: int = 2000,
                 gamma: float = 1.5) -> tuple[SpectralField, SolverReport]:
    """Petviashvili iteration for M zeta = (11/16) zeta^3 in the even-even class."""
    rep = SolverReport("petviashvili")
    K1, K3 = seed.grid.kmesh
    M = free_symbol(K1, K3)
    zeta = symmetrize(seed, "even-even")
    factors = []
    for it in range(maxiter):
        N = CUBIC * cubic(zeta)
        num = np.real(np.vdot(zeta.coeffs, M * zeta.coeffs))
        den = np.real(np.vdot(zeta.coeffs, N.coeffs))
        if den <= 0:
            rep.message = "Rayleigh quotient denominator vanished; degenerate seed"
            raise ConvergenceError(rep.message, rep)
        S = num / den
        factors.append(S)
        new = symmetrize(SpectralField(seed.grid, coeffs=S ** gamma * N.coeffs / M, real=True),
                         "even-even")
        incr = sobolev_norm(new - zeta, 1) / sobolev_norm(new, 1)
        rep.log(incr)
        zeta = new
        if abs(S - 1) < tol and incr < tol:
            rep.converged = True
            break
        if len(factors) > 50 and incr > 10 * min(rep.residuals):
            break
    rep.extra["factors_tail"] = factors[-10:]
    if not np.isfinite(factors[-1]) or abs(factors[-1] - 1) > 1e-3:
        rep.message = f"stabilising factor did not approach 1 (last {factors[-1]:.6g})"
        raise ConvergenceError(rep.message, rep)
    rep.converged = True
    return zeta, rep


def _T(zeta0: SpectralField, coefficient: float):
    def apply(v: SpectralField) -> SpectralField:
        return apply_multiplier(v, free_symbol) - coefficient * padded_product(zeta0, zeta0, v)
    return apply


def linearized_ops(zeta0: SpectralField):
    """(T1, T2): linearisations of the NLS at a real solution along real and imaginary directions."""
    return _T(zeta0, 3 * CUBIC), _T(zeta0, CUBIC)


def newton_polish(zeta: SpectralField, tol: float = 1e-10, maxiter: int = 20,
                  parity: str = "even-even") -> tuple[SpectralField, SolverReport]:
    rep = SolverReport("newton-nls")
    M = precond_symbol(zeta.grid)

    def proj(f):
        return symmetrize(f, parity)

    for it in range(maxiter):
        R = nls_residual(zeta)
        res = sobolev_norm(R, 1)
        rep.log(res)
        if res <= tol:
            rep.converged = True
            break
        T1, _ = linearized_ops(zeta)
        d, info = normal_cg(T1, -R, M, project=proj, rtol=1e-13, maxiter=400)
        rep.extra.setdefault("cg_iterations", []).append(info["iterations"])
        zeta = proj(zeta + d)
    else:
        rep.message = f"Newton polish stopped at residual {rep.last_residual:.3e}"
        raise ConvergenceError(rep.message, rep)
    return zeta, rep


def ground_state(grid: Grid2D, tol: float = 1e-10, seed: SpectralField | None = None,
                 ring_tol: float = 1e-10) -> GroundState:
    """Positive even-even ground state on ``grid`` with H^1 residual <= tol."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    seed = seed if seed is not None else gaussian_seed(grid)
    zeta, prep = petviashvili(seed)
    zeta, nrep = newton_polish(zeta, tol)
    zeta = symmetrize(zeta, "even-even")
    res = sobolev_norm(nls_residual(zeta), 1)
    vals = zeta.values
    ring = boundary_ring_mass(zeta)
    X, Z = grid.mesh
    peak = float(vals[np.argmin(X[:, 0] ** 2), np.argmin(Z[0] ** 2)])
    return GroundState(zeta, res, peak,
                       {"petviashvili": prep.iterations, "newton": nrep.iterations,
                        "ring_mass": ring, "ring_ok": ring <= ring_tol})


# -- spectral checks ----------------------------------------------------------------

@dataclass
class SpectrumReport:
    T1_full: np.ndarray
    T2_full: np.ndarray
    T1_even_even: np.ndarray
    T2_odd_even: np.ndarray
    kernel_residuals: dict
    converged: bool

    @property
    def T1_even_even_min_abs(self) -> float:
        return float(np.abs(self.T1_even_even).min())

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _relres(T, v: SpectralField) -> float:
    return sobolev_norm(T(v), 0) / sobolev_norm(v, 0)


def kernel_residuals(zeta0: SpectralField) -> dict:
    T1, T2 = linearized_ops(zeta0)
    return {"T1_dx": _relres(T1, zeta0.dx()), "T1_dz": _relres(T1, zeta0.dz()),
            "T2_zeta0": _relres(T2, zeta0)}


def _lowest(T, grid: Grid2D, k: int, parity: str | None, shift: float, seed: int,
            tol: float = 1e-7, maxiter: int = 200, buffer: int = 2):
    n = grid.size
    pre = 1.0 / precond_symbol(grid)

    def to_field(v):
        return SpectralField(grid, values=v.reshape(grid.shape), real=True)

    def matvec(V):
        V = np.atleast_2d(V.T).T if V.ndim == 1 else V
        out = np.empty_like(V)
        for j in range(V.shape[1]):
            f = to_field(V[:, j])
            if parity is None:
                out[:, j] = T(f).values.ravel()
            else:
                p = symmetrize(f, parity)
                out[:, j] = (symmetrize(T(p), parity) + shift * (f - p)).values.ravel()
        return out

    def precond(V):
        V = np.atleast_2d(V.T).T if V.ndim == 1 else V
        out = np.empty_like(V)
        for j in range(V.shape[1]):
            out[:, j] = apply_multiplier(to_field(V[:, j]), pre).values.ravel()
        return out

    A = LinearOperator((n, n), matvec=matvec, matmat=matvec, dtype=float)
    Mop = LinearOperator((n, n), matvec=precond, matmat=precond, dtype=float)
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n, k + buffer))
    if parity is not None:
        for j in range(k + buffer):
            X0[:, j] = symmetrize(to_field(X0[:, j]), parity).values.ravel()
    with warnings.catch_warnings():
        # the buffer vectors sit in the clustered continuum and converge slowly
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(A, X0, M=Mop, largest=False, tol=tol, maxiter=maxiter)
    order = np.argsort(vals)[:k]
    vals, vecs = vals[order], vecs[:, order]
    resid = [np.linalg.norm(matvec(vecs[:, j]).ravel() - vals[j] * vecs[:, j]) for j in range(k)]
    ok = bool(max(resid) <= 1e-5 * max(1.0, np.abs(vals).max()))
    return vals, ok


def kernel_check(zeta0: SpectralField, k: int = 3, shift: float = 20.0, seed: int = 0) -> SpectrumReport:
    """Lowest eigenvalues of T1 and T2 on the full grid space and on the
    symmetry classes (even-even for T1, odd-in-x/even-in-z for T2)."""
    T1, T2 = linearized_ops(zeta0)
    g = zeta0.grid
    t1f, ok1 = _lowest(T1, g, k, None, shift, seed)
    t2f, ok2 = _lowest(T2, g, k, None, shift, seed + 1)
    t1e, ok3 = _lowest(T1, g, k, "even-even", shift, seed + 2)
    t2o, ok4 = _lowest(T2, g, k, "odd-even", shift, seed + 3)
    return SpectrumReport(t1f, t2f, t1e, t2o, kernel_residuals(zeta0), ok1 and ok2 and ok3 and ok4)


def rescaled_unit_cubic(gs: GroundState) -> SpectralField:
    """sqrt(11/16) zeta0, a solution of the same equation with cubic coefficient 1."""
    return np.sqrt(11.0 / 16.0) * gs.zeta0


def h1_inner(a: SpectralField, b: SpectralField) -> float:
    return inner(a, b) + inner(a.dx(), b.dx()) + inner(a.dz(), b.dz())
