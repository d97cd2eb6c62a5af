"""Dirichlet-Neumann machinery on the flattened lower half-space.

The potential is carried as horizontal Fourier coefficients (real-to-complex
transform over (x, z)) on a graded set of depth nodes.  For each horizontal
wavenumber the half-space problem with divergence-form sources is solved by
two exponential sweeps: sources are interpolated by local cubics in depth and
multiplied against the exact exponential kernels, so large |k| causes no
stiffness.  The nonlinear boundary-value problem for a given surface is then
solved by Picard iteration.

Closed-form low-order terms of the K, L operators and of the gradients of the
energy and kinetic functionals live at the bottom of the module.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from .report import ConvergenceError, SolverReport
from .spectral_core import (
    BandLimitError,
    Grid2D,
    SpectralField,
    apply_multiplier,
    field_to_bytes,
    inner,
    padded_product,
)
from .symbols import symbol_K0, symbol_L0, symbol_M0


# -- depth grid -------------------------------------------------------------------

@dataclass(frozen=True)
class DnoConfig:
    """Depth truncation and Picard controls.

    ``picard_tol`` bounds the Picard increment in the layer-integrated H^3-type
    norm relative to the norm of the linear (flat-surface) solution.
    """

    Ymax: float = 30.0
    ny: int = 48
    h0: float = 0.015
    picard_tol: float = 1e-11
    picard_max: int = 80
    decay_tol: float = 1e-8

    def __post_init__(self):
        if not self.Ymax > 0:
            raise ValueError("Ymax must be positive")
        if self.ny < 16:
            raise ValueError("ny must be at least 16")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if not 0 < self.h0 * (self.ny - 1) < self.Ymax:
            raise ValueError("h0*(ny-1) must be below Ymax for geometric grading")


@dataclass(frozen=True)
class YGrid:
    """Strictly increasing depth nodes with y[-1] == 0 and trapezoid weights."""

    y: np.ndarray

    @classmethod
    def graded(cls, Ymax: float, ny: int, h0: float) -> "YGrid":
        n = ny - 1

        def total(r):
            return h0 * n if abs(r - 1) < 1e-14 else h0 * (r ** n - 1) / (r - 1)

        # at r_hi the last interval alone reaches Ymax, so the root is bracketed
        r_hi = max((Ymax / h0) ** (1.0 / max(n - 1, 1)), 1.0 + 1e-9)
        r = brentq(lambda r: total(r) - Ymax, 1.0 + 1e-12, r_hi)
        h = h0 * r ** np.arange(n)
        depth = np.concatenate([[0.0], np.cumsum(h)])
        depth[-1] = Ymax
        return cls(np.ascontiguousarray(-depth[::-1]))

    @classmethod
    def from_config(cls, cfg: DnoConfig) -> "YGrid":
        return cls.graded(cfg.Ymax, cfg.ny, cfg.h0)

    @property
    def ny(self) -> int:
        return len(self.y)

    @property
    def Ymax(self) -> float:
        return float(-self.y[0])

    @cached_property
    def weights(self) -> np.ndarray:
        h = np.diff(self.y)
        w = np.zeros(self.ny)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    def __hash__(self):
        return hash(self.y.tobytes())

    def __eq__(self, other):
        return isinstance(other, YGrid) and np.array_equal(self.y, other.y)


def _exp_moments(a: np.ndarray, nmax: int = 3) -> list[np.ndarray]:
    """I_n(a) = int_0^1 s^n exp(-a(1-s)) ds for n = 0..nmax, a >= 0."""
    out = [np.empty_like(a) for _ in range(nmax + 1)]
    small = a <= 1.0
    big = ~small
    ab = a[big]
    if ab.size:
        prev = -np.expm1(-ab) / ab
        out[0][big] = prev
        for n in range(1, nmax + 1):
            prev = (1.0 - n * prev) / ab
            out[n][big] = prev
    asm = a[small]
    if asm.size:
        for n in range(nmax + 1):
            # sum_p (-a)^p n! / (n+p+1)!
            term = np.full_like(asm, 1.0 / (n + 1))
            acc = term.copy()
            for p in range(1, 24):
                term = term * (-asm) / (n + p + 1)
                acc += term
            out[n][small] = acc
    return out


class _Sweeps:
    """Per-interval cubic-interpolation weights for the two exponential sweeps."""

    def __init__(self, ygrid: YGrid):
        y = ygrid.y
        ny = len(y)
        self.h = np.diff(y)
        self.stencil = []
        self.p_up = []
        self.p_down = []
        for j in range(ny - 1):
            st = min(max(j - 1, 0), ny - 4)
            nodes = y[st:st + 4]
            h = self.h[j]
            s_up = (nodes - y[j]) / h
            s_dn = (y[j + 1] - nodes) / h
            self.stencil.append(st)
            self.p_up.append(_lagrange_coeffs(s_up))
            self.p_down.append(_lagrange_coeffs(s_dn))


def _lagrange_coeffs(s: np.ndarray) -> np.ndarray:
    """coeffs[m, n]: power-basis coefficient of s^n in the m-th Lagrange basis polynomial."""
    out = np.zeros((len(s), len(s)))
    for m in range(len(s)):
        others = np.delete(s, m)
        c = npoly.polyfromroots(others)
        out[m] = c / np.prod(s[m] - others)
    return out


# -- half-space fields ------------------------------------------------------------

def _half_kmesh(grid: Grid2D):
    k1 = grid.k1
    k3 = sfft.rfftfreq(grid.nz, 1.0 / grid.nz) * grid.dk3
    K1, K3 = np.meshgrid(k1, k3, indexing="ij")
    return K1, K3, np.hypot(K1, K3)


def _half_weights(grid: Grid2D) -> np.ndarray:
    """Multiplicity of each rfft column in the full spectrum."""
    w = np.full(grid.nz // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


class HalfSpaceField:
    """Potential on the flattened half-space.

    ``layers[j]`` holds the (x, z) real-to-complex Fourier coefficients of u at
    depth ``ygrid.y[j]`` and ``dy_layers[j]`` those of u_y; the last layer is
    the surface y = 0.
    """

    def __init__(self, grid: Grid2D, ygrid: YGrid, layers: np.ndarray,
                 dy_layers: np.ndarray | None = None):
        shape = (ygrid.ny, grid.nx, grid.nz // 2 + 1)
        if layers.shape != shape:
            raise ValueError(f"layer array shape {layers.shape} != {shape}")
        self.grid = grid
        self.ygrid = ygrid
        self.layers = layers
        self.dy_layers = dy_layers
        layers.setflags(write=False)
        if dy_layers is not None:
            dy_layers.setflags(write=False)

    @classmethod
    def from_physical(cls, grid: Grid2D, ygrid: YGrid, values: np.ndarray) -> "HalfSpaceField":
        """Build from real physical values of shape (ny, nx, nz)."""
        return cls(grid, ygrid, sfft.rfft2(values, axes=(-2, -1)))

    @classmethod
    def zeros(cls, grid: Grid2D, ygrid: YGrid) -> "HalfSpaceField":
        z = np.zeros((ygrid.ny, grid.nx, grid.nz // 2 + 1), dtype=complex)
        return cls(grid, ygrid, z, z.copy())

    def physical(self, derivative: str = "") -> np.ndarray:
        """Physical values of u, u_x, u_y or u_z on every layer."""
        K1, K3, _ = _half_kmesh(self.grid)
        if derivative == "":
            c = self.layers
        elif derivative == "x":
            c = 1j * K1 * self.layers
        elif derivative == "z":
            c = 1j * K3 * self.layers
        elif derivative == "y":
            c = self.dy_layers
        else:
            raise ValueError(f"unknown derivative {derivative!r}")
        return sfft.irfft2(c, s=self.grid.shape, axes=(-2, -1))

    def layer(self, j: int) -> SpectralField:
        v = sfft.irfft2(self.layers[j], s=self.grid.shape)
        return SpectralField(self.grid, values=v, real=True)

    def surface(self) -> SpectralField:
        return self.layer(self.ygrid.ny - 1)

    def star_norm(self) -> float:
        return _star_norm(self.grid, self.ygrid, self.layers, self.dy_layers)

    def to_bytes(self) -> bytes:
        """SpectralField header of the surface layer, then ny and depths, then layers top-down."""
        head = field_to_bytes(self.surface())
        head = head[:-(self.grid.size * 8)]
        out = [head, struct.pack("<I", self.ygrid.ny), self.ygrid.y[::-1].astype("<f8").tobytes()]
        for j in range(self.ygrid.ny - 1, -1, -1):
            out.append(np.ascontiguousarray(self.layer(j).values.T).astype("<f8").tobytes())
        return b"".join(out)


def _star_norm(grid: Grid2D, ygrid: YGrid, u_hat: np.ndarray, uy_hat: np.ndarray) -> float:
    """Layer-integrated (1+|k|^2)^2 (|k|^2 |u_hat|^2 + |u_y_hat|^2); proportional to
    the H^3-type gradient norm (horizontal Sobolev weights only)."""
    _, _, kap = _half_kmesh(grid)
    wk = (1 + kap ** 2) ** 2 * _half_weights(grid)[None, :]
    dens = np.abs(u_hat) ** 2 * kap ** 2 + np.abs(uy_hat) ** 2
    per_layer = np.einsum("jab,ab->j", dens, wk)
    return float(np.sqrt(np.dot(ygrid.weights, per_layer) * grid.norm_weight()))


# -- the explicit solution operator -------------------------------------------------

class _Weights:
    """Sweep weights for every interval and horizontal mode of one (grid, depth-grid) pair."""

    def __init__(self, grid: Grid2D, ygrid: YGrid):
        sw = _Sweeps(ygrid)
        _, _, kap = _half_kmesh(grid)
        n = ygrid.ny - 1
        self.stencil = sw.stencil
        self.decay = np.empty((n,) + kap.shape)
        self.up = np.empty((n, 4) + kap.shape)
        self.down = np.empty((n, 4) + kap.shape)
        for j in range(n):
            a = kap * sw.h[j]
            I = np.stack(_exp_moments(a))
            self.decay[j] = np.exp(-a)
            self.up[j] = sw.h[j] * np.tensordot(sw.p_up[j], I, axes=(1, 0))
            self.down[j] = sw.h[j] * np.tensordot(sw.p_down[j], I, axes=(1, 0))


@lru_cache(maxsize=2)
def _weights(grid: Grid2D, ygrid: YGrid) -> _Weights:
    return _Weights(grid, ygrid)


def _sweep_solve(grid: Grid2D, ygrid: YGrid, A: np.ndarray, B: np.ndarray,
                 xi_hat: np.ndarray):
    """Apply the explicit half-space solution operator mode by mode.

    A = -(i k1 F1 + i k3 F3)/(2|k|) and B = F2 (coefficient arrays of shape
    (ny, nx, nz//2+1)).  Returns (u_hat, u_y_hat).  The up-sweep accumulates
    the kernel exp(-|k|(y - y')) over sources below y, the down-sweep
    exp(-|k|(y' - y)) over sources above; both run in a fixed order.
    """
    W = _weights(grid, ygrid)
    K1, _, kap = _half_kmesh(grid)
    ny = ygrid.ny
    C1 = A + 0.5 * B
    C2 = A - 0.5 * B
    P = np.zeros_like(C1)
    Q = np.zeros_like(C2)
    for j in range(ny - 1):
        st = W.stencil[j]
        acc = W.decay[j] * P[j]
        for m in range(4):
            acc += W.up[j, m] * C1[st + m]
        P[j + 1] = acc
    for j in range(ny - 2, -1, -1):
        st = W.stencil[j]
        acc = W.decay[j] * Q[j + 1]
        for m in range(4):
            acc += W.down[j, m] * C2[st + m]
        Q[j] = acc
    with np.errstate(divide="ignore", invalid="ignore"):
        top = P[-1] + np.where(kap > 0, 1j * K1 * xi_hat / np.where(kap > 0, kap, 1.0), 0.0)
    ekap = np.exp(kap[None] * ygrid.y[:, None, None])
    u = P + Q + top[None] * ekap
    uy = B - kap * P + kap * Q + kap * top[None] * ekap
    u[:, 0, 0] = 0.0
    uy[:, 0, 0] = B[:, 0, 0]
    return u, uy


def _xi_half(xi: SpectralField) -> np.ndarray:
    if not xi.real:
        raise ValueError("Dirichlet-Neumann data must be real")
    c = np.array(xi.coeffs[:, : xi.grid.nz // 2 + 1])
    c[0, 0] = 0.0  # additive-constant gauge
    return c


def solve_S(F1: HalfSpaceField | None, F2: HalfSpaceField | None, F3: HalfSpaceField | None,
            xi: SpectralField, ygrid: YGrid | None = None) -> HalfSpaceField:
    """Solve Delta u = div(F1, F2, F3) in y < 0, u_y = F2 + xi_x on y = 0, u_y -> 0.

    Any of the sources may be None (zero).  The mean horizontal mode of u is
    set to zero.
    """
    srcs = [F for F in (F1, F2, F3) if F is not None]
    if srcs:
        ygrid = srcs[0].ygrid
        for F in srcs:
            if F.grid != xi.grid or F.ygrid != ygrid:
                raise ValueError("sources and boundary data must share grid and depth nodes")
    if ygrid is None:
        raise ValueError("a depth grid is required when all sources are zero")
    grid = xi.grid
    shape = (ygrid.ny, grid.nx, grid.nz // 2 + 1)
    K1, K3, kap = _half_kmesh(grid)
    zero = np.zeros(shape, dtype=complex)
    f1 = F1.layers if F1 is not None else zero
    f2 = F2.layers if F2 is not None else zero
    f3 = F3.layers if F3 is not None else zero
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(kap > 0, 1.0 / np.where(kap > 0, kap, 1.0), 0.0)
    A = -0.5j * (K1 * f1 + K3 * f3) * inv
    u, uy = _sweep_solve(grid, ygrid, A, np.asarray(f2), _xi_half(xi))
    return HalfSpaceField(grid, ygrid, u, uy)


# -- the nonlinear problem -----------------------------------------------------------

class _Surface:
    """Slopes of eta needed by the flattened sources."""

    def __init__(self, eta: SpectralField):
        if not eta.real:
            raise ValueError("surface elevation must be real")
        self.ex = eta.dx().values
        self.ez = eta.dz().values
        self.s = self.ex ** 2 + self.ez ** 2


def _sources(grid: Grid2D, surf: _Surface, u_hat: np.ndarray, uy_hat: np.ndarray):
    """(A, B) coefficient arrays of the divergence-form sources for the current u."""
    K1, K3, kap = _half_kmesh(grid)
    axes = (-2, -1)
    ux = sfft.irfft2(1j * K1 * u_hat, s=grid.shape, axes=axes)
    uz = sfft.irfft2(1j * K3 * u_hat, s=grid.shape, axes=axes)
    uy = sfft.irfft2(uy_hat, s=grid.shape, axes=axes)
    F1 = surf.ex * uy
    F3 = surf.ez * uy
    F2 = surf.ex * ux + surf.ez * uz - surf.s * uy
    del ux, uz, uy
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(kap > 0, 1.0 / np.where(kap > 0, kap, 1.0), 0.0)
    A = -0.5j * inv * (K1 * sfft.rfft2(F1, axes=axes) + K3 * sfft.rfft2(F3, axes=axes))
    B = sfft.rfft2(F2, axes=axes)
    return A, B


def _decay_ratio(grid: Grid2D, ygrid: YGrid, A: np.ndarray, B: np.ndarray) -> float:
    """Size of the kernel-weighted source at the truncation depth relative to the surface."""
    _, _, kap = _half_kmesh(grid)
    w = _half_weights(grid)[None, :]
    top = np.sqrt(np.sum(w * (np.abs(A[-1]) ** 2 + np.abs(B[-1]) ** 2)))
    if top == 0:
        return 0.0
    damp = np.exp(-kap * ygrid.Ymax)
    bot = np.sqrt(np.sum(w * damp ** 2 * (np.abs(A[0]) ** 2 + np.abs(B[0]) ** 2)))
    return float(bot / top)


def solve_dn(eta: SpectralField, xi: SpectralField, cfg: DnoConfig | None = None,
             u0: HalfSpaceField | None = None) -> tuple[HalfSpaceField, SolverReport]:
    """Picard iteration u <- S(F1(eta,u), F2(eta,u), F3(eta,u), xi).

    Raises ConvergenceError when the increment ratio stays >= 1 or the
    iteration cap is reached.
    """
    cfg = cfg or DnoConfig()
    eta._check(xi)
    grid = eta.grid
    ygrid = u0.ygrid if u0 is not None else YGrid.from_config(cfg)
    xi_hat = _xi_half(xi)
    zero = np.zeros((ygrid.ny, grid.nx, grid.nz // 2 + 1), dtype=complex)
    u_lin, uy_lin = _sweep_solve(grid, ygrid, zero, zero, xi_hat)
    report = SolverReport("picard-dn")
    ref = _star_norm(grid, ygrid, u_lin, uy_lin)
    if ref == 0.0:
        report.converged = True
        report.message = "zero boundary data"
        return HalfSpaceField(grid, ygrid, u_lin, uy_lin), report
    surf = _Surface(eta)
    if not np.any(surf.s):
        report.converged = True
        report.log(0.0)
        report.message = "flat surface: linear solution is exact"
        return HalfSpaceField(grid, ygrid, u_lin, uy_lin), report
    if u0 is not None:
        u, uy = np.array(u0.layers), np.array(u0.dy_layers)
    else:
        u, uy = u_lin, uy_lin
    growth = 0
    for it in range(cfg.picard_max):
        A, B = _sources(grid, surf, u, uy)
        un, uyn = _sweep_solve(grid, ygrid, A, B, xi_hat)
        incr = _star_norm(grid, ygrid, un - u, uyn - uy) / ref
        report.log(incr)
        u, uy = un, uyn
        if incr <= cfg.picard_tol:
            report.converged = True
            break
        if len(report.contraction) and report.contraction[-1] >= 1.0:
            growth += 1
            if growth >= 2:
                report.message = ("Picard iteration is not contracting; the surface is "
                                  "too steep for this solver")
                raise ConvergenceError(report.message, report)
        else:
            growth = 0
    else:
        report.message = f"Picard iteration cap {cfg.picard_max} reached"
        raise ConvergenceError(report.message, report)
    ratio = _decay_ratio(grid, ygrid, A, B)
    report.flags["decay_ratio"] = ratio
    report.flags["decay_ok"] = ratio <= cfg.decay_tol
    if ratio > cfg.decay_tol:
        report.flags["suggested_Ymax"] = 2 * ygrid.Ymax
    return HalfSpaceField(grid, ygrid, u, uy), report


def _trace_derivatives(u: HalfSpaceField) -> tuple[SpectralField, SpectralField]:
    K1, K3, _ = _half_kmesh(u.grid)
    top = u.layers[-1]
    s = u.grid.shape
    kv = sfft.irfft2(-1j * K1 * top, s=s)
    lv = sfft.irfft2(-1j * K3 * top, s=s)
    return SpectralField(u.grid, values=kv, real=True), SpectralField(u.grid, values=lv, real=True)


def KL_op(eta: SpectralField, xi: SpectralField, cfg: DnoConfig | None = None,
          u0: HalfSpaceField | None = None):
    """(K(eta) xi, L(eta) xi, u, report) from a single solve."""
    u, rep = solve_dn(eta, xi, cfg, u0)
    K, L = _trace_derivatives(u)
    return K, L, u, rep


def K_op(eta: SpectralField, xi: SpectralField, cfg: DnoConfig | None = None) -> SpectralField:
    """K(eta) xi = -d/dx of the surface trace of the flattened potential."""
    return KL_op(eta, xi, cfg)[0]


def L_op(eta: SpectralField, xi: SpectralField, cfg: DnoConfig | None = None) -> SpectralField:
    """L(eta) xi = -d/dz of the surface trace of the flattened potential."""
    return KL_op(eta, xi, cfg)[1]


# -- multipliers and closed-form expansion terms ---------------------------------------

def K0(xi: SpectralField) -> SpectralField:
    return apply_multiplier(xi, symbol_K0)


def L0(xi: SpectralField) -> SpectralField:
    return apply_multiplier(xi, symbol_L0)


def M0(xi: SpectralField) -> SpectralField:
    return apply_multiplier(xi, symbol_M0)


def _p(*fields):
    return padded_product(*fields)


def K1_closed(eta: SpectralField, xi: SpectralField) -> SpectralField:
    """First-order term of K(eta) xi (linear in eta)."""
    return -_p(eta, xi.dx()).dx() - K0(_p(eta, K0(xi))) - L0(_p(eta, L0(xi)))


def L1_closed(eta: SpectralField, xi: SpectralField) -> SpectralField:
    """First-order term of L(eta) xi (linear in eta)."""
    return -_p(eta, xi.dx()).dz() - L0(_p(eta, K0(xi))) - M0(_p(eta, L0(xi)))


def m_bilinear(u: SpectralField, v: SpectralField) -> SpectralField:
    """Symmetric bilinear form whose diagonal is the quadratic part of the kinetic gradient."""
    ux, vx = u.dx(), v.dx()
    K0u, K0v, L0u, L0v = K0(u), K0(v), L0(u), L0(v)
    local = _p(ux, vx) - _p(K0u, K0v) - _p(L0u, L0v)
    nonlocal_ = (-(_p(ux, v) + _p(u, vx)).dx()
                 - K0(_p(u, K0v) + _p(v, K0u))
                 - L0(_p(u, L0v) + _p(v, L0u)))
    return 0.5 * (local + nonlocal_)


def Lprime2(eta: SpectralField) -> SpectralField:
    return m_bilinear(eta, eta)


def Kprime1(eta: SpectralField) -> SpectralField:
    return apply_multiplier(eta, lambda k1, k3: 1.0 + k1 ** 2 + k3 ** 2)


def Kprime3(eta: SpectralField) -> SpectralField:
    ex, ez = eta.dx(), eta.dz()
    s = _p(ex, ex) + _p(ez, ez)
    return 0.5 * (_p(s, ex).dx() + _p(s, ez).dz())


def Lprime1(eta: SpectralField) -> SpectralField:
    return K0(eta)


def _require_compact(eta: SpectralField, frac: float = 2.0 / 3.0, tol: float = 1e-24):
    g = eta.grid
    K1, K3 = g.kmesh
    outer = (np.abs(K1) > frac * g.k1.max()) | (np.abs(K3) > frac * g.k3.max())
    p = np.abs(eta.coeffs) ** 2
    total = p.sum()
    if total > 0 and p[outer].sum() > tol * total:
        raise BandLimitError(
            "the cubic kinetic term needs a compactly supported spectrum; "
            f"relative power {p[outer].sum() / total:.2e} in the outer third of the lattice")


def Lprime3(eta1: SpectralField, strict: bool = True) -> SpectralField:
    """Cubic part of the kinetic gradient for band-limited input.

    With ``strict=False`` wide spectra are accepted; intermediate products
    are then truncated to the grid.
    """
    if strict:
        _require_compact(eta1)
    e = eta1
    Ke, Le = K0(e), L0(e)
    eKe, eLe = _p(e, Ke), _p(e, Le)
    K_eKe, L_eKe = K0(eKe), L0(eKe)
    L_eLe, M_eLe = L0(eLe), M0(eLe)
    exx = e.dx().dx()
    exz = e.dx().dz()
    e2 = _p(e, e)
    terms = [
        _p(Ke, K_eKe),
        _p(Ke, L_eLe),
        _p(Le, L_eKe),
        _p(Le, M_eLe),
        K0(_p(e, K_eKe)),
        K0(_p(e, L_eLe)),
        L0(_p(e, L_eKe)),
        L0(_p(e, M_eLe)),
        _p(e, Ke, exx),
        0.5 * K0(_p(e2, exx)),
        0.5 * _p(e2, Ke).dx().dx(),
        _p(e, Le, exz),
        0.5 * L0(_p(e2, exz)),
        0.5 * _p(e2, Le).dx().dz(),
    ]
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def Kprime_full(eta: SpectralField) -> SpectralField:
    """Gradient of the surface-energy functional (coefficient 1 on the curvature term)."""
    ex, ez = eta.dx(), eta.dz()
    root = np.sqrt(1.0 + ex.values ** 2 + ez.values ** 2)
    g = eta.grid
    return (eta - SpectralField(g, values=ex.values / root).dx()
            - SpectralField(g, values=ez.values / root).dz())


def Lprime_full(eta: SpectralField, cfg: DnoConfig | None = None, return_aux: bool = False,
                u0: HalfSpaceField | None = None):
    """Gradient of the kinetic functional, via one Dirichlet-Neumann solve with xi = eta.

    ``u0`` warm-starts the Picard iteration (e.g. with the potential of a nearby surface).
    """
    K, L, u, rep = KL_op(eta, eta, cfg, u0)
    ex, ez = eta.dx().values, eta.dz().values
    Kv, Lv = K.values, L.values
    val = (-0.5 * Kv ** 2 - 0.5 * Lv ** 2
           + (ex - ex * Kv - ez * Lv) ** 2 / (2 * (1 + ex ** 2 + ez ** 2)) + Kv)
    out = SpectralField(eta.grid, values=val, real=True)
    if return_aux:
        return out, {"K": K, "L": L, "u": u, "report": rep}
    return out


def energy_functional(eta: SpectralField) -> float:
    """int (eta^2/2 + sqrt(1 + |grad eta|^2) - 1)."""
    ex, ez = eta.dx().values, eta.dz().values
    s = ex ** 2 + ez ** 2
    dens = 0.5 * eta.values ** 2 + s / (np.sqrt(1 + s) + 1)
    return float(dens.sum() * eta.grid.cell_area)


def kinetic_functional(eta: SpectralField, cfg: DnoConfig | None = None) -> float:
    """(1/2) int eta K(eta) eta."""
    return 0.5 * inner(eta, K_op(eta, eta, cfg))
