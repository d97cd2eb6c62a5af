import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dws.fdnls import band_project
from dws.reduction import envelope_to_surface
from dws.spectral_core import (
    BandLimitError,
    FieldFormatError,
    Grid2D,
    SpectralField,
    SymbolError,
    WaveParams,
    apply_multiplier,
    band_mask,
    field_from_bytes,
    field_to_bytes,
    inner,
    load_field,
    mask_field,
    padded_product,
    reflect,
    resample,
    save_field,
    scaled_norm,
    sobolev_norm,
    symmetrize,
)

PI_BOX = Grid2D(32, 32, np.pi, np.pi)
SIZES = [(8, 8), (16, 32), (64, 16)]


def random_field(grid, seed, complex_=False, kmax=None):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=grid.shape)
    if complex_:
        v = v + 1j * rng.normal(size=grid.shape)
    f = SpectralField(grid, values=v)
    if kmax is not None:
        f = mask_field(f, grid.kabs < kmax)
    return f


def cos_x(grid, n=1):
    return SpectralField.from_function(grid, lambda x, z: np.cos(n * x) + 0 * z)


class TestGrid:
    def test_lattice(self):
        g = Grid2D(8, 4, 2.0, 1.0)
        assert np.allclose(sorted(g.k1), np.arange(-4, 4) * np.pi / 2)
        assert g.dk3 == pytest.approx(np.pi)
        assert g.x[0] == -2.0 and g.x[-1] == pytest.approx(2.0 - 0.5)

    @pytest.mark.parametrize("bad", [(6, 8, 1, 1), (8, 8, 0, 1), (1, 8, 1, 1)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            Grid2D(*bad)

    def test_fourier_inversion_identity(self):
        g = Grid2D(16, 8, 3.0, 2.0)
        X, Z = g.mesh
        K1, K3 = g.kmesh
        # sum_j e^{i k.x_j} over the lattice vanishes except at k = 0
        j, l = 3, 5
        s = np.sum(np.exp(1j * (K1[j, l] * X + K3[j, l] * Z)))
        assert abs(s) < 1e-12


class TestTransforms:
    @pytest.mark.parametrize("shape", SIZES)
    def test_round_trip(self, shape):
        g = Grid2D(*shape, 3.0, 2.0)
        f = random_field(g, 1, complex_=True)
        back = SpectralField(g, coeffs=f.coeffs.copy(), real=False)
        err = np.abs(back.values - f.values).max() / np.abs(f.values).max()
        assert err < 1e-13

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31), st.sampled_from(SIZES))
    def test_parseval(self, seed, shape):
        g = Grid2D(*shape, 2.5, 1.5)
        f = random_field(g, seed, kmax=0.5 * g.k1.max())
        quad = np.sqrt(np.sum(f.values ** 2) * g.cell_area)
        assert sobolev_norm(f, 0) == pytest.approx(quad, rel=1e-12)

    def test_real_fields_keep_hermitian_coeffs(self):
        g = Grid2D(16, 16, 2.0, 2.0)
        f = random_field(g, 4)
        c = f.coeffs
        mirror = np.roll(c[::-1, ::-1], 1, axis=(0, 1))
        assert np.abs(c - np.conj(mirror)).max() < 1e-12 * np.abs(c).max()


class TestMultiplier:
    def test_identity(self):
        f = random_field(PI_BOX, 0)
        g = apply_multiplier(f, lambda k1, k3: np.ones_like(k1))
        assert np.allclose(g.values, f.values, atol=1e-14)

    @pytest.mark.parametrize("n,expected", [(1, 1.0), (2, 2.0)])
    def test_plane_wave_eigenvalue(self, n, expected):
        f = cos_x(PI_BOX, n)
        sym = lambda k1, k3: np.divide(k1 ** 2, np.hypot(k1, k3), out=np.zeros_like(k1),
                                       where=np.hypot(k1, k3) > 0)
        out = apply_multiplier(f, sym)
        assert np.allclose(out.values, expected * f.values, atol=1e-13)
        assert out.real

    def test_rejects_nonfinite_symbol(self):
        with pytest.raises(SymbolError, match="k = \\(0, 0\\)"), np.errstate(divide="ignore"):
            apply_multiplier(cos_x(PI_BOX), lambda k1, k3: 1.0 / np.hypot(k1, k3))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_real_even_symbol_keeps_realness(self, seed):
        f = random_field(PI_BOX, seed)
        out = apply_multiplier(f, lambda k1, k3: np.exp(-k1 ** 2) + k3 ** 2)
        assert out.real
        raw = np.fft.ifft2(out.coeffs)
        assert np.abs(raw.imag).max() < 1e-12 * sobolev_norm(f, 0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_composition(self, seed):
        f = random_field(PI_BOX, seed, complex_=True)
        m1 = lambda k1, k3: 1 + k1 ** 2
        m2 = lambda k1, k3: np.cos(k3) + 1j * k1
        a = apply_multiplier(apply_multiplier(f, m2), m1)
        b = apply_multiplier(f, lambda k1, k3: m1(k1, k3) * m2(k1, k3))
        assert np.abs(a.values - b.values).max() < 1e-13 * np.abs(b.values).max()


class TestNorms:
    def test_zero(self):
        z = SpectralField.zeros(PI_BOX)
        assert sobolev_norm(z, 2) == 0.0
        assert scaled_norm(z, 0.1) == 0.0

    def test_cos_x_l2_on_pi_box(self):
        # int over [-pi, pi)^2 of cos^2 x = 2 pi^2
        assert sobolev_norm(cos_x(PI_BOX), 0) == pytest.approx(np.sqrt(2 * np.pi ** 2), rel=1e-14)

    def test_h1_of_cos_2x(self):
        f = cos_x(PI_BOX, 2)
        assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(5) * sobolev_norm(f, 0), rel=1e-14)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            sobolev_norm(cos_x(PI_BOX), -1)

    @pytest.mark.parametrize("eps", [0.05, 0.02])
    def test_scaled_norm_of_pure_carrier(self, eps):
        g = Grid2D(64, 16, 8 * np.pi, 4.0)
        f = eps * cos_x(g)
        # constant envelope: weight 1 on the carrier, so scaled norm = L2 norm
        assert scaled_norm(f, eps) == pytest.approx(sobolev_norm(f, 0), rel=1e-14)

    def test_scaled_norm_rejects_leakage(self):
        with pytest.raises(BandLimitError):
            scaled_norm(cos_x(PI_BOX, 2) + cos_x(PI_BOX), 0.1)

    def test_scaled_norm_matches_envelope_h1(self):
        # eta1 = 2 Re[(eps/2) zeta(eps x, eps z) e^{ix}]: the real part splits the
        # envelope mass over two discs, so scaled norm = ||zeta||_1 / sqrt(2)
        eps = 0.05
        env = Grid2D(64, 64, 3 * np.pi, 12.0)
        X, Z = env.mesh
        zeta = band_project(SpectralField(env, values=np.exp(-(X ** 2 + Z ** 2) / 2) + 0j), eps)
        surface = Grid2D(512, 256, env.Lx / eps, env.Lz / eps)
        eta1 = mask_field(envelope_to_surface(zeta, eps, surface), band_mask(surface, 0.15))
        ratio = np.sqrt(2) * scaled_norm(eta1, eps) / sobolev_norm(zeta, 1)
        assert abs(ratio - 1) < 0.02

    def test_inner_is_l2(self):
        f = random_field(PI_BOX, 3)
        assert inner(f, f) == pytest.approx(sobolev_norm(f, 0) ** 2, rel=1e-12)


class TestSymmetry:
    def test_even_even_fixed(self):
        f = SpectralField.from_function(PI_BOX, lambda x, z: np.cos(x) * np.cos(2 * z))
        assert np.allclose(symmetrize(f).values, f.values, atol=1e-15)

    def test_odd_part_annihilated(self):
        f = SpectralField.from_function(PI_BOX, lambda x, z: np.sin(x) * np.cos(z))
        assert np.abs(symmetrize(f, "even-even").values).max() < 1e-15

    def test_reflect_x(self):
        f = SpectralField.from_function(PI_BOX, lambda x, z: np.cos(x) + np.sin(x) + 0 * z)
        want = SpectralField.from_function(PI_BOX, lambda x, z: np.cos(x) - np.sin(x) + 0 * z)
        assert np.allclose(reflect(f, "x").values, want.values, atol=1e-14)

    def test_conjugate_class(self):
        f = random_field(PI_BOX, 5, complex_=True)
        p = symmetrize(f, "conj-x-even-z")
        assert np.allclose(p.values, np.conj(reflect(p, "x").values), atol=1e-15)
        assert np.allclose(p.values, reflect(p, "z").values, atol=1e-15)

    def test_unknown_parity(self):
        with pytest.raises(ValueError):
            symmetrize(cos_x(PI_BOX), "odd")

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31), st.sampled_from(["even-even", "odd-even", "even-odd",
                                                      "odd-odd", "conj-x-even-z"]))
    def test_idempotent(self, seed, parity):
        f = random_field(PI_BOX, seed, complex_=True)
        once = symmetrize(f, parity)
        twice = symmetrize(once, parity)
        assert np.abs(twice.values - once.values).max() < 1e-14


class TestProducts:
    def test_padded_product_is_exact_for_band_limited_input(self):
        g = Grid2D(16, 16, np.pi, np.pi)
        a = SpectralField.from_function(g, lambda x, z: np.cos(3 * x) * np.cos(2 * z))
        b = SpectralField.from_function(g, lambda x, z: np.sin(4 * x) + np.cos(z))
        want = a.values * b.values  # max wavenumber 7 < Nyquist 8
        assert np.allclose(padded_product(a, b).values, want, atol=1e-13)

    def test_cubic_drops_out_of_grid_content(self):
        g = Grid2D(16, 4, np.pi, np.pi)
        a = cos_x(g, 3)
        # cos^3 3x = (3 cos 3x + cos 9x)/4 and 9 exceeds the lattice
        assert np.allclose(padded_product(a, a, a).values, 0.75 * a.values, atol=1e-14)

    def test_conjugated_factor(self):
        g = Grid2D(16, 8, np.pi, np.pi)
        e = SpectralField.from_function(g, lambda x, z: np.exp(1j * x) + 0 * z)
        assert np.allclose(padded_product(e, e, conj=(1,)).values, 1.0, atol=1e-14)

    def test_resample_round_trip(self):
        g = Grid2D(16, 16, 2.0, 2.0)
        f = random_field(g, 2, kmax=0.8 * g.k1.max())
        back = resample(resample(f, 64, 32), 16, 16)
        assert np.allclose(back.values, f.values, atol=1e-13)


class TestBinaryFormat:
    @pytest.mark.parametrize("complex_", [False, True])
    def test_round_trip(self, tmp_path, complex_):
        f = random_field(Grid2D(8, 4, 1.5, 2.5), 0, complex_=complex_)
        path = tmp_path / "f.dwsf"
        save_field(path, f)
        g = load_field(path)
        assert g.grid == f.grid and g.real == f.real
        assert np.array_equal(g.values, f.values)

    def test_layout_is_z_major(self):
        g = Grid2D(4, 2, 1.0, 1.0)
        v = np.arange(8.0).reshape(4, 2)
        data = field_to_bytes(SpectralField(g, values=v))
        payload = np.frombuffer(data[-64:], "<f8")
        assert list(payload[:4]) == list(v[:, 0])
        assert data[:4] == b"DWSF"

    @pytest.mark.parametrize("mutate", [
        lambda d: b"XXXX" + d[4:],
        lambda d: d[:20],
        lambda d: d[:-8],
        lambda d: d[:4] + (7).to_bytes(4, "little") + d[8:],
    ])
    def test_corruption(self, mutate):
        data = field_to_bytes(cos_x(Grid2D(4, 4, np.pi, np.pi)))
        with pytest.raises(FieldFormatError):
            field_from_bytes(mutate(data))

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "f.dwsf"
        path.write_bytes(field_to_bytes(cos_x(Grid2D(4, 4, np.pi, np.pi))) + b"\0")
        with pytest.raises(FieldFormatError):
            load_field(path)


class TestWaveParams:
    def test_speed(self):
        p = WaveParams(0.1)
        assert p.c2 == 2 * (1 - 0.01)

    @pytest.mark.parametrize("kw", [dict(epsilon=0), dict(epsilon=0.1, delta=0.2),
                                    dict(epsilon=0.1, theta=1.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            WaveParams(**kw)
