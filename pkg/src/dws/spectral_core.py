"""Periodic grids, transform pairs, Fourier multipliers and norms.

Conventions used throughout the package:

* grid points are ``x_j = -Lx + j*dx`` with ``dx = 2*Lx/nx`` (same for z);
  arrays are indexed ``[ix, iz]``;
* Fourier coefficients are the unnormalised DFT of the physical values
  (``scipy.fft.fft2``); the ``1/N`` factor is applied on the inverse;
* the continuous transform is unitary, ``u_hat(k) = (1/2pi) int u e^{-ik.x}``,
  so that ``u_hat ~ (dx*dz/2pi) * coeffs`` up to a unimodular phase and every
  norm below approximates the corresponding integral over the plane.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft


class DwsError(Exception):
    """Base class for errors raised by this package."""


class SymbolError(DwsError, ValueError):
    """A multiplier symbol is not finite on the lattice."""


class BandLimitError(DwsError, ValueError):
    """A field has spectral content outside the region an operation requires."""


class FieldFormatError(DwsError, ValueError):
    """A binary field file is malformed or corrupted."""


@dataclass(frozen=True)
class Grid2D:
    """Periodic rectangle [-Lx, Lx) x [-Lz, Lz) with nx x nz points."""

    nx: int
    nz: int
    Lx: float
    Lz: float

    def __post_init__(self):
        for n in (self.nx, self.nz):
            if n < 2 or n & (n - 1):
                raise ValueError(f"grid counts must be powers of two >= 2, got {n}")
        if not (self.Lx > 0 and self.Lz > 0):
            raise ValueError("box half-lengths must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def dx(self) -> float:
        return 2 * self.Lx / self.nx

    @property
    def dz(self) -> float:
        return 2 * self.Lz / self.nz

    @property
    def dk1(self) -> float:
        return np.pi / self.Lx

    @property
    def dk3(self) -> float:
        return np.pi / self.Lz

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz

    @cached_property
    def x(self) -> np.ndarray:
        return -self.Lx + self.dx * np.arange(self.nx)

    @cached_property
    def z(self) -> np.ndarray:
        return -self.Lz + self.dz * np.arange(self.nz)

    @cached_property
    def k1(self) -> np.ndarray:
        return sfft.fftfreq(self.nx, 1.0 / self.nx) * self.dk1

    @cached_property
    def k3(self) -> np.ndarray:
        return sfft.fftfreq(self.nz, 1.0 / self.nz) * self.dk3

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.z, indexing="ij")

    @cached_property
    def kmesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.k1, self.k3, indexing="ij")

    @cached_property
    def kabs(self) -> np.ndarray:
        K1, K3 = self.kmesh
        return np.hypot(K1, K3)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on the Nyquist row/column, which has no mirror partner."""
        m = np.zeros(self.shape, dtype=bool)
        m[self.nx // 2, :] = True
        m[:, self.nz // 2] = True
        return m

    def norm_weight(self) -> float:
        """Factor turning sum |coeffs|^2 into the continuous L2 norm squared."""
        return self.cell_area / self.size

    def padded(self, factor: float) -> "Grid2D":
        mx, mz = int(round(self.nx * factor)), int(round(self.nz * factor))
        return Grid2D(_next_pow2(mx), _next_pow2(mz), self.Lx, self.Lz)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _mirror(a: np.ndarray) -> np.ndarray:
    """a(-k) on the FFT lattice (index j -> -j mod n on both axes)."""
    return np.roll(a[::-1, ::-1], 1, axis=(0, 1))


def reflect_index(a: np.ndarray, axis: int) -> np.ndarray:
    """Physical-space reflection x_j -> -x_j, i.e. index j -> (n - j) % n."""
    return np.roll(np.flip(a, axis=axis), 1, axis=axis)


class SpectralField:
    """Immutable scalar field on a Grid2D, held in physical and Fourier form.

    Either representation may be supplied; the other is computed on first
    access and cached.  ``real`` marks fields whose physical values are real.
    """

    __array_priority__ = 100

    def __init__(self, grid: Grid2D, values=None, coeffs=None, real: bool | None = None):
        if values is None and coeffs is None:
            raise ValueError("either values or coeffs must be given")
        self.grid = grid
        self._values = None
        self._coeffs = None
        if values is not None:
            v = np.asarray(values)
            if v.shape != grid.shape:
                raise ValueError(f"values shape {v.shape} does not match grid {grid.shape}")
            if real is None:
                real = not np.iscomplexobj(v)
            v = np.array(v.real if real else v, dtype=float if real else complex)
            self._values = _freeze(v)
        if coeffs is not None:
            c = np.array(coeffs, dtype=complex)
            if c.shape != grid.shape:
                raise ValueError(f"coeffs shape {c.shape} does not match grid {grid.shape}")
            self._coeffs = _freeze(c)
            if real is None:
                real = False
        self.real = bool(real)

    # -- constructors -----------------------------------------------------
    @classmethod
    def zeros(cls, grid: Grid2D, real: bool = True) -> "SpectralField":
        return cls(grid, values=np.zeros(grid.shape, dtype=float if real else complex), real=real)

    @classmethod
    def from_function(cls, grid: Grid2D, fn: Callable) -> "SpectralField":
        X, Z = grid.mesh
        return cls(grid, values=np.broadcast_to(fn(X, Z), grid.shape))

    # -- representations ----------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = sfft.ifft2(self._coeffs)
            self._values = _freeze(v.real.copy() if self.real else v)
        return self._values

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = _freeze(sfft.fft2(self._values))
        return self._coeffs

    def hat(self) -> np.ndarray:
        """Approximate continuous (unitary) transform on the lattice, modulus-exact."""
        g = self.grid
        return self.coeffs * (g.cell_area / (2 * np.pi))

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, values=self.values + other.values,
                                 real=self.real and other.real)
        return SpectralField(self.grid, values=self.values + other,
                             real=self.real and np.isrealobj(other))

    __radd__ = __add__

    def __neg__(self):
        return SpectralField(self.grid, values=-self.values, real=self.real)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return SpectralField(self.grid, values=self.values * other.values,
                                 real=self.real and other.real)
        if np.ndim(other) != 0:
            return NotImplemented
        return SpectralField(self.grid, values=self.values * other,
                             real=self.real and np.isrealobj(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def conj(self) -> "SpectralField":
        if self.real:
            return self
        return SpectralField(self.grid, values=np.conj(self.values), real=False)

    def real_part(self) -> "SpectralField":
        return SpectralField(self.grid, values=self.values.real.copy(), real=True)

    def imag_part(self) -> "SpectralField":
        return SpectralField(self.grid, values=self.values.imag.copy(), real=True)

    def as_complex(self) -> "SpectralField":
        return SpectralField(self.grid, values=self.values.astype(complex), real=False)

    # -- derivatives ----------------------------------------------------------
    def dx(self) -> "SpectralField":
        K1, _ = self.grid.kmesh
        return apply_multiplier(self, 1j * K1)

    def dz(self) -> "SpectralField":
        _, K3 = self.grid.kmesh
        return apply_multiplier(self, 1j * K3)

    def __repr__(self):
        kind = "real" if self.real else "complex"
        return f"SpectralField({kind}, {self.grid})"


FieldLike = SpectralField
Symbol = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray]


def symbol_on_lattice(grid: Grid2D, symbol: Symbol) -> np.ndarray:
    """Evaluate ``symbol`` on the wavenumber lattice, rejecting non-finite values."""
    if callable(symbol):
        K1, K3 = grid.kmesh
        s = np.asarray(symbol(K1, K3))
    else:
        s = np.asarray(symbol)
    s = np.broadcast_to(s, grid.shape)
    bad = ~np.isfinite(s)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise SymbolError(
            f"symbol is not finite at k = ({grid.k1[i]:.6g}, {grid.k3[j]:.6g})"
            f" ({int(bad.sum())} offending lattice points)")
    return s


def _is_hermitian(s: np.ndarray, grid: Grid2D) -> bool:
    diff = np.abs(s - np.conj(_mirror(s)))
    diff[grid.nyquist_mask] = 0.0
    scale = max(np.abs(s).max(), 1e-300)
    return bool(diff.max() <= 1e-14 * scale)


def apply_multiplier(field: SpectralField, symbol: Symbol) -> SpectralField:
    """Return F^{-1}[symbol * F[field]].

    Realness is kept when the symbol maps real fields to real fields
    (s(-k) = conj(s(k)) away from the unpaired Nyquist lines).
    """
    s = symbol_on_lattice(field.grid, symbol)
    real = field.real and _is_hermitian(s, field.grid)
    return SpectralField(field.grid, coeffs=s * field.coeffs, real=real)


def mask_field(field: SpectralField, mask: np.ndarray) -> SpectralField:
    """Apply a 0/1 spectral mask (e.g. a sharp band cutoff)."""
    return apply_multiplier(field, mask.astype(float))


def sobolev_norm(field: SpectralField, s: float = 0.0) -> float:
    """Continuous H^s norm, (int (1+|k|^2)^s |u_hat|^2 dk)^{1/2}."""
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    g = field.grid
    w = (1.0 + g.kabs ** 2) ** s
    return float(np.sqrt(g.norm_weight() * np.sum(w * np.abs(field.coeffs) ** 2)))


# Lattice points can sit exactly on a disc boundary (e.g. |K| = delta/eps on the
# envelope lattice), where the carrier-frame and envelope-frame distances round
# differently.  Shrinking the radius by this relative slack puts them outside in
# every frame.
DISC_SLACK = 1e-9


def in_disc(d1, d3, radius: float):
    """|(d1, d3)| < radius, with boundary points counted as outside."""
    return d1 ** 2 + d3 ** 2 < (radius * (1.0 - DISC_SLACK)) ** 2


def band_mask(grid: Grid2D, delta: float) -> np.ndarray:
    """Indicator of the two carrier discs |k -+ (1,0)| < delta."""
    K1, K3 = grid.kmesh
    return in_disc(K1 - 1, K3, delta) | in_disc(K1 + 1, K3, delta)


def scaled_norm(field: SpectralField, eps: float, delta: float = 0.15,
                leak_tol: float = 1e-12) -> float:
    """Carrier-band norm with weight 1 + eps^-2((|k1|-1)^2 + k3^2).

    The field must live in the two discs of radius ``delta`` around (+-1, 0);
    relative spectral mass outside beyond ``leak_tol`` is rejected.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = field.grid
    K1, K3 = g.kmesh
    p = np.abs(field.coeffs) ** 2
    inside = band_mask(g, delta)
    total = p.sum()
    if total > 0 and p[~inside].sum() > leak_tol * total:
        raise BandLimitError(
            f"spectral mass outside the carrier band: {p[~inside].sum() / total:.3e} relative")
    w = 1.0 + ((np.abs(K1) - 1) ** 2 + K3 ** 2) / eps ** 2
    return float(np.sqrt(g.norm_weight() * np.sum(w * p * inside)))


def l1_hat_norm(field: SpectralField) -> float:
    """int |u_hat| dk, approximated on the lattice."""
    g = field.grid
    return float(np.sum(np.abs(field.hat())) * g.dk1 * g.dk3)


def inner(a: SpectralField, b: SpectralField) -> float:
    """Real L2 inner product Re int a conj(b)."""
    a._check(b)
    return float(np.real(np.vdot(b.values, a.values)) * a.grid.cell_area)


def sup_norm(field: SpectralField) -> float:
    return float(np.abs(field.values).max())


def boundary_ring_mass(field: SpectralField, fraction: float = 0.1) -> float:
    """Relative L2 mass in the outer ring of the box (width ``fraction`` of each half-length)."""
    g = field.grid
    X, Z = g.mesh
    ring = (np.abs(X) > (1 - fraction) * g.Lx) | (np.abs(Z) > (1 - fraction) * g.Lz)
    p = np.abs(field.values) ** 2
    total = p.sum()
    return float(p[ring].sum() / total) if total > 0 else 0.0


# -- reflections ---------------------------------------------------------------

_AXES = {"x": 0, "z": 1}


def reflect(field: SpectralField, axis: str) -> SpectralField:
    """u(x, z) -> u(-x, z) (axis='x') or u(x, -z) (axis='z')."""
    return SpectralField(field.grid, values=reflect_index(field.values, _AXES[axis]),
                         real=field.real)


PARITIES = ("even-even", "odd-even", "even-odd", "odd-odd", "conj-x-even-z")


def symmetrize(field: SpectralField, parity: str = "even-even") -> SpectralField:
    """Project onto a reflection class by averaging with reflections.

    ``parity`` is one of ``even-even``, ``odd-even``, ``even-odd``, ``odd-odd``
    (parity in x then z) or ``conj-x-even-z`` for the complex class
    u(x,z) = conj(u(-x,z)) = u(x,-z).
    """
    if parity not in PARITIES:
        raise ValueError(f"unknown parity {parity!r}; choose from {PARITIES}")
    v = field.values
    if parity == "conj-x-even-z":
        v = 0.5 * (v + np.conj(reflect_index(v, 0)))
        v = 0.5 * (v + reflect_index(v, 1))
        return SpectralField(field.grid, values=v, real=field.real)
    sx = 1 if parity.split("-")[0] == "even" else -1
    sz = 1 if parity.split("-")[1] == "even" else -1
    v = 0.5 * (v + sx * reflect_index(v, 0))
    v = 0.5 * (v + sz * reflect_index(v, 1))
    return SpectralField(field.grid, values=v, real=field.real)


# -- products --------------------------------------------------------------------

def _pad_coeffs(c: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    nx, nz = c.shape
    mx, mz = shape
    out = np.zeros(shape, dtype=complex)
    hx, hz = nx // 2, nz // 2
    ix = np.r_[0:hx, mx - hx + 1:mx]
    jx = np.r_[0:hx, nx - hx + 1:nx]
    iz = np.r_[0:hz, mz - hz + 1:mz]
    jz = np.r_[0:hz, nz - hz + 1:nz]
    out[np.ix_(ix, iz)] = c[np.ix_(jx, jz)]
    return out


def _truncate_coeffs(c: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    mx, mz = c.shape
    nx, nz = shape
    out = np.zeros(shape, dtype=complex)
    hx, hz = nx // 2, nz // 2
    ix = np.r_[0:hx, mx - hx + 1:mx]
    jx = np.r_[0:hx, nx - hx + 1:nx]
    iz = np.r_[0:hz, mz - hz + 1:mz]
    jz = np.r_[0:hz, nz - hz + 1:nz]
    out[np.ix_(jx, jz)] = c[np.ix_(ix, iz)]
    return out


def _axis_map(n_from: int, n_to: int) -> tuple[np.ndarray, np.ndarray]:
    h = min(n_from, n_to) // 2
    return np.r_[0:h, n_from - h + 1:n_from], np.r_[0:h, n_to - h + 1:n_to]


def resample(field: SpectralField, nx: int, nz: int) -> SpectralField:
    """Same box, new lattice: zero-pad or truncate Fourier coefficients per axis.

    The Nyquist lines of the smaller lattice are dropped, so refine-then-coarsen
    is the identity on fields without Nyquist content.
    """
    g = field.grid
    new = Grid2D(nx, nz, g.Lx, g.Lz)
    sx, dx_ = _axis_map(g.nx, nx)
    sz, dz_ = _axis_map(g.nz, nz)
    out = np.zeros(new.shape, dtype=complex)
    out[np.ix_(dx_, dz_)] = field.coeffs[np.ix_(sx, sz)] * (new.size / g.size)
    return SpectralField(new, coeffs=out, real=field.real)


def padded_product(*fields: SpectralField, conj: tuple[int, ...] = ()) -> SpectralField:
    """Alias-free pointwise product of p fields via zero padding by (p+1)/2.

    Fields listed by index in ``conj`` enter complex-conjugated.  Nyquist
    modes are dropped, so the result is the exact product truncated to the grid.
    """
    g = fields[0].grid
    for f in fields[1:]:
        fields[0]._check(f)
    p = len(fields)
    fine = (g.nx * (p + 1) // 2, g.nz * (p + 1) // 2)
    scale = fine[0] * fine[1] / g.size
    prod = None
    for i, f in enumerate(fields):
        v = sfft.ifft2(_pad_coeffs(f.coeffs, fine)) * scale
        if f.real:
            v = v.real
        if i in conj:
            v = np.conj(v)
        prod = v if prod is None else prod * v
    real = all(f.real for f in fields)
    c = _truncate_coeffs(sfft.fft2(prod), g.shape) / scale
    return SpectralField(g, coeffs=c, real=real)


# -- binary I/O ------------------------------------------------------------------

MAGIC = b"DWSF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddB")


def field_to_bytes(field: SpectralField) -> bytes:
    """Serialise: header then z-major (rows of constant z) little-endian payload."""
    g = field.grid
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, g.nx, g.nz, g.Lx, g.Lz, 1 if field.real else 0)
    v = np.ascontiguousarray(field.values.T)
    payload = v.astype("<f8" if field.real else "<c16").tobytes()
    return head + payload


def field_from_bytes(data: bytes, offset: int = 0) -> tuple[SpectralField, int]:
    """Inverse of field_to_bytes; returns (field, offset just past the payload)."""
    if len(data) - offset < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, version, nx, nz, Lx, Lz, real = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"unsupported format version {version}")
    try:
        grid = Grid2D(nx, nz, Lx, Lz)
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc
    dtype = "<f8" if real else "<c16"
    start = offset + _HEADER.size
    nbytes = nx * nz * np.dtype(dtype).itemsize
    if len(data) < start + nbytes:
        raise FieldFormatError("truncated payload")
    v = np.frombuffer(data, dtype=dtype, count=nx * nz, offset=start).reshape(nz, nx).T
    return SpectralField(grid, values=v.copy(), real=bool(real)), start + nbytes


def save_field(path, field: SpectralField) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        data = fh.read()
    f, end = field_from_bytes(data)
    if end != len(data):
        raise FieldFormatError(f"{len(data) - end} trailing bytes after payload")
    return f


@dataclass(frozen=True)
class WaveParams:
    """Scalars of the travelling-wave problem.

    ``c`` is derived from ``epsilon`` (c^2 = 2(1 - eps^2)) and ``c2`` stores
    the square exactly.
    """

    epsilon: float
    delta: float = 0.15
    theta: float = 5.0 / 6.0
    R1: float = 10.0
    R3: float = 1.0
    c2: float = field(init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 0.2:
            raise ValueError("delta must lie in (0, 1/5)")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.R1 <= 0 or self.R3 <= 0:
            raise ValueError("ball radii must be positive")
        object.__setattr__(self, "c2", 2.0 * (1.0 - self.epsilon ** 2))

    @property
    def c(self) -> float:
        return float(np.sqrt(self.c2))
