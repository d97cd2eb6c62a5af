"""Scalar symbols of the deep-water gravity-capillary problem and their multipliers.

All functions take wavenumber components ``(k1, k3)`` as arrays and are
vectorised.  Values at k = 0 are fixed by continuity (g(0) = 1, f(0) = 0) or,
for the Dirichlet-Neumann multipliers, set to 0 (mean mode annihilated).
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .spectral_core import Grid2D, SpectralField, apply_multiplier, in_disc

DEFAULT_DELTA = 0.15


def dispersion_speed(k1):
    """Linear phase speed sqrt(k1 + 1/k1) for k1 > 0."""
    k1 = np.asarray(k1, dtype=float)
    if np.any(k1 <= 0):
        raise ValueError("dispersion_speed is defined for k1 > 0 only")
    out = np.sqrt(k1 + 1.0 / k1)
    return float(out) if out.ndim == 0 else out


def _safe_ratio(num, den):
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return r


def symbol_f(k1, k3):
    """k1^2/|k|, with value 0 at k = 0."""
    k1 = np.asarray(k1, dtype=float)
    return _safe_ratio(k1 ** 2, np.hypot(k1, k3))


def symbol_g(k1, k3):
    """1 + |k|^2 - 2 k1^2/|k|, with g(0) = 1.

    Evaluated as (|k|-1)^2 + 2 k3^2/|k|, which is algebraically identical but
    keeps full relative precision near the zeros k = (+-1, 0).
    """
    k1 = np.asarray(k1, dtype=float)
    k3 = np.asarray(k3, dtype=float)
    r2 = k1 ** 2 + k3 ** 2
    r = np.sqrt(r2)
    rm1 = (r2 - 1.0) / (r + 1.0)
    return rm1 ** 2 + 2.0 * _safe_ratio(k3 ** 2, r)


def limit_symbol(k1, k3):
    """2 + k1^2 + 2 k3^2."""
    return 2.0 + np.asarray(k1) ** 2 + 2.0 * np.asarray(k3) ** 2


def shifted_symbol(K1, K3, eps: float):
    """eps^-2 g(e + eps K) + 2 f(e + eps K), e = (1, 0).

    Uses g(e + s) = ((2 s1 + |s|^2)/(|e+s| + 1))^2 + 2 s3^2/|e+s| so that no
    cancellation occurs for small eps.
    """
    s1 = eps * np.asarray(K1, dtype=float)
    s3 = eps * np.asarray(K3, dtype=float)
    a = 1.0 + s1
    r = np.hypot(a, s3)
    rm1 = (2 * s1 + s1 ** 2 + s3 ** 2) / (r + 1.0)
    g = rm1 ** 2 + 2.0 * _safe_ratio(s3 ** 2, r)
    return g / eps ** 2 + 2.0 * _safe_ratio(a ** 2, r)


def symbol_K0(k1, k3):
    return symbol_f(k1, k3)


def symbol_L0(k1, k3):
    k1 = np.asarray(k1, dtype=float)
    return _safe_ratio(k1 * np.asarray(k3), np.hypot(k1, k3))


def symbol_M0(k1, k3):
    k3 = np.asarray(k3, dtype=float)
    return _safe_ratio(k3 ** 2, np.hypot(k1, k3))


SYMBOLS = {
    "g": symbol_g,
    "f": symbol_f,
    "K0": symbol_K0,
    "L0": symbol_L0,
    "M0": symbol_M0,
    "limit": limit_symbol,
}


# -- band cutoffs ----------------------------------------------------------------

_CENTERS = {(1, 0), (-1, 0), (0, 0)}


@dataclass(frozen=True)
class BandSpec:
    """Union of open discs of radius ``delta`` around the listed centres."""

    delta: float = DEFAULT_DELTA
    centers: tuple = ((1, 0), (-1, 0))

    def __post_init__(self):
        if not 0 < self.delta < 0.2:
            raise ValueError("band radius must lie in (0, 1/5)")
        if len(self.centers) == 0:
            raise ValueError("a band needs at least one centre")
        cs = tuple(tuple(int(v) for v in c) for c in self.centers)
        for c in cs:
            if c not in _CENTERS:
                raise ValueError(f"unsupported band centre {c}")
        object.__setattr__(self, "centers", cs)


def carrier_band(delta: float = DEFAULT_DELTA) -> BandSpec:
    return BandSpec(delta, ((1, 0), (-1, 0)))


def plus_band(delta: float = DEFAULT_DELTA) -> BandSpec:
    return BandSpec(delta, ((1, 0),))


def minus_band(delta: float = DEFAULT_DELTA) -> BandSpec:
    return BandSpec(delta, ((-1, 0),))


def zero_band(delta: float = DEFAULT_DELTA) -> BandSpec:
    return BandSpec(delta, ((0, 0),))


def cutoff(k1, k3, band: BandSpec):
    """Sharp indicator (0/1 float) of the band."""
    k1 = np.asarray(k1, dtype=float)
    k3 = np.asarray(k3, dtype=float)
    inside = np.zeros(np.broadcast(k1, k3).shape, dtype=bool)
    for c1, c3 in band.centers:
        inside |= in_disc(k1 - c1, k3 - c3, band.delta)
    return inside.astype(float)


def cutoff_mask(grid: Grid2D, band: BandSpec) -> np.ndarray:
    K1, K3 = grid.kmesh
    return cutoff(K1, K3, band).astype(bool)


def project(field: SpectralField, band: BandSpec) -> SpectralField:
    """chi_band(D) field."""
    K1, K3 = field.grid.kmesh
    return apply_multiplier(field, cutoff(K1, K3, band))


def project_off(field: SpectralField, band: BandSpec) -> SpectralField:
    """(1 - chi_band(D)) field."""
    K1, K3 = field.grid.kmesh
    return apply_multiplier(field, 1.0 - cutoff(K1, K3, band))


def offband_inverse_symbol(k1, k3, delta: float = DEFAULT_DELTA):
    """(1 - chi)/g with the value 0 wherever chi = 1."""
    chi = cutoff(k1, k3, carrier_band(delta))
    g = symbol_g(k1, k3)
    return np.where(chi > 0, 0.0, 1.0 / np.where(chi > 0, 1.0, g))


def offband_inverse(field: SpectralField, delta: float = DEFAULT_DELTA) -> SpectralField:
    """F^{-1}[(1 - chi(k))/g(k) F[field]] on the carrier band of radius delta."""
    K1, K3 = field.grid.kmesh
    return apply_multiplier(field, offband_inverse_symbol(K1, K3, delta))


def multiplier(name: str):
    """Look up a named symbol (as used in configuration files)."""
    try:
        return SYMBOLS[name]
    except KeyError:
        raise KeyError(f"unknown symbol {name!r}; known: {sorted(SYMBOLS)}") from None


def apply_named(field: SpectralField, name: str) -> SpectralField:
    return apply_multiplier(field, multiplier(name))


def symbol_limit_defect(eps: float, kmax: float = 5.0, n: int = 401) -> float:
    """max_{|K| <= kmax} |eps^-2 g(e+eps K) + 2 f(e+eps K) - (2 + K1^2 + 2 K3^2)|."""
    t = np.linspace(-kmax, kmax, n)
    K1, K3 = np.meshgrid(t, t, indexing="ij")
    inside = K1 ** 2 + K3 ** 2 <= kmax ** 2
    d = np.abs(shifted_symbol(K1, K3, eps) - limit_symbol(K1, K3))
    return float(d[inside].max())


def taylor_defect_constant(eps: float, delta: float = DEFAULT_DELTA, n: int = 401) -> float:
    """Smallest C with |eps^2/(2 eps^2 + g(e+eps K)) - 1/(2+K1^2+2K3^2)| <= C eps |K|^3/(1+|K|^2)^2
    over |K| < delta/eps, sampled on an n x n lattice (K = 0 excluded)."""
    R = delta / eps
    t = np.linspace(-R, R, n)
    K1, K3 = np.meshgrid(t, t, indexing="ij")
    kk = np.hypot(K1, K3)
    inside = (kk < R) & (kk > 0)
    g = symbol_g(1.0 + eps * K1, eps * K3)
    lhs = np.abs(eps ** 2 / (2 * eps ** 2 + g) - 1.0 / limit_symbol(K1, K3))
    rhs = eps * kk ** 3 / (1 + kk ** 2) ** 2
    return float((lhs[inside] / rhs[inside]).max())
