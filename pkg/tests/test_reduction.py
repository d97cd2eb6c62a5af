from functools import cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dws import dno, reduction as R
from dws.fdnls import band_project, envelope_band
from dws.report import ConvergenceError
from dws.symbols import symbol_g
from dws.spectral_core import (
    BandLimitError,
    Grid2D,
    SpectralField,
    WaveParams,
    apply_multiplier,
    band_mask,
    mask_field,
    padded_product,
    reflect,
    scaled_norm,
    sobolev_norm,
    sup_norm,
)

EPS = 0.05
DELTA = 0.15
ENV = Grid2D(32, 16, 2 * np.pi, 2 * np.pi)  # 2 pi / (pi eps) = 40: exact carrier shift
CARRIER = Grid2D(32, 8, np.pi, np.pi)
PATCH = Grid2D(64, 16, 8 * np.pi, 4 * np.pi)  # several lattice points inside each band disc


def gaussian_envelope(amp, grid=ENV, eps=EPS):
    X, Z = grid.mesh
    f = SpectralField(grid, values=amp * np.exp(-(X ** 2 + Z ** 2)))
    return band_project(f.as_complex(), eps)


@cache
def decomposition(amp=0.5, sign=1.0):
    z = sign * gaussian_envelope(amp)
    return R.reconstruct_surface(z, WaveParams(EPS), R.surface_grid_for(ENV, EPS),
                                 R.ReductionConfig(mode="cheap"))


def band_limited(seed, grid=PATCH, delta=DELTA):
    rng = np.random.default_rng(seed)
    f = SpectralField(grid, values=rng.normal(size=grid.shape))
    f = mask_field(f, band_mask(grid, delta))
    return 0.1 * f / sup_norm(f)


seeds = st.integers(0, 2 ** 16)


class TestGrids:
    def test_surface_grid(self):
        s = R.surface_grid_for(ENV, EPS)
        assert (s.nx, s.nz) == (512, 64)
        assert R.carrier_shift(s) == 40

    def test_incommensurate(self):
        with pytest.raises(R.ResamplingError):
            R.surface_grid_for(Grid2D(32, 16, 2.0, 2.0), EPS)
        with pytest.raises(R.ResamplingError):
            R.envelope_to_surface(gaussian_envelope(1.0), 0.06, R.surface_grid_for(ENV, EPS))

    def test_round_trip(self):
        z = gaussian_envelope(1.0)
        s = R.surface_grid_for(ENV, EPS)
        back = R.zeta_of_eta1(R.envelope_to_surface(z, EPS, s), EPS, ENV)
        assert np.abs(back.coeffs - z.coeffs).max() < 1e-12 * np.abs(z.coeffs).max()

    def test_carrier_profile(self):
        # envelope nodes X_j/eps fall on every 16th x node and every 4th z node
        z = gaussian_envelope(1.0)
        s = R.surface_grid_for(ENV, EPS)
        eta1 = R.envelope_to_surface(z, EPS, s)
        assert (s.nx // ENV.nx, s.nz // ENV.nz) == (16, 4)
        sub = eta1.values[::16, ::4]
        X = ENV.mesh[0] / EPS
        want = EPS * np.real(z.values * np.exp(1j * X))
        assert np.abs(sub - want).max() < 1e-14

    def test_circle_points_outside_in_both_frames(self):
        # K = (3, 0) = (delta/eps, 0) is an envelope lattice point; its surface
        # image k = (1.15, 0) must be classified the same way
        s = R.surface_grid_for(ENV, EPS)
        i = int(np.argmin(np.abs(ENV.k1 - DELTA / EPS)))
        j = int(np.argmin(np.abs(s.k1 - (1 + DELTA))))
        assert ENV.k1[i] == pytest.approx(3.0) and s.k1[j] == pytest.approx(1.15)
        assert not envelope_band(ENV, EPS)[i, 0]
        assert not band_mask(s, DELTA)[j, 0]

    def test_surface_grid_must_resolve_band(self):
        s = Grid2D(64, 64, 40 * np.pi, 40 * np.pi)
        with pytest.raises(R.ResamplingError, match="resolve"):
            R.reconstruct_surface(gaussian_envelope(1.0), WaveParams(EPS), s,
                                  R.ReductionConfig(mode="cheap"))

    def test_envelope_must_be_band_limited(self):
        X, Z = ENV.mesh
        wide = SpectralField(ENV, values=np.exp(-4 * (X ** 2 + Z ** 2)))
        with pytest.raises(BandLimitError):
            R.reconstruct_surface(wide, WaveParams(EPS), cfg=R.ReductionConfig(mode="cheap"))


class TestF:
    @pytest.mark.parametrize("a", [0.01, 0.1])
    def test_cos_x(self, a):
        eta1 = SpectralField.from_function(CARRIER, lambda x, z: a * np.cos(x) + 0 * z)
        want = -a ** 2 * (1 - EPS ** 2) * np.cos(2 * CARRIER.mesh[0])
        assert np.abs(R.F_of_eta1(eta1, EPS).values - want).max() < 1e-15

    def test_zero(self):
        assert not np.any(R.F_of_eta1(SpectralField.zeros(CARRIER), EPS).coeffs)

    def test_requires_band(self):
        f = SpectralField.from_function(CARRIER, lambda x, z: np.cos(2 * x) + 0 * z)
        with pytest.raises(BandLimitError):
            R.F_of_eta1(f, EPS)

    @settings(max_examples=15, deadline=None)
    @given(seeds)
    def test_off_band(self, seed):
        F = R.F_of_eta1(band_limited(seed), EPS)
        inside = mask_field(F, band_mask(PATCH, DELTA)).coeffs
        assert np.abs(inside).max() < 1e-14 * np.abs(F.coeffs).max()

    def test_leading_order_identity(self):
        # measured 1.55e-3, 3.90e-4, 9.66e-5: slope 2 in log10(eps)
        box = Grid2D(32, 32, 1.2 * np.pi, 1.2 * np.pi)
        vals = []
        for e in (0.04, 0.02, 0.01):
            s = R.surface_grid_for(box, e)
            eta1 = mask_field(R.envelope_to_surface(gaussian_envelope(1.0, box, e), e, s),
                              band_mask(s, DELTA))
            p, m = R.plus_part(eta1), R.minus_part(eta1)
            lead = -2 * (padded_product(p, p) + padded_product(m, m))
            vals.append(sobolev_norm(R.F_of_eta1(eta1, e) - lead, 1) / scaled_norm(eta1, e) ** 2)
        slopes = np.diff(np.log10(vals)) / np.diff(np.log10([0.04, 0.02, 0.01]))
        assert np.all(slopes >= 1.0)


class TestEta3:
    def test_zero_envelope(self):
        d = R.reconstruct_surface(SpectralField.zeros(ENV, real=False), WaveParams(EPS),
                                  cfg=R.ReductionConfig(mode="cheap"))
        assert not np.any(d.eta3.coeffs) and not np.any(d.F.coeffs)

    def test_converges_small_amplitude(self):
        d = decomposition()
        rep = d.reports["eta3"]
        assert rep["converged"] and rep["flags"]["mode"] == "cheap"
        assert d.norms["h3_eta3"] > 0

    def test_contraction_floor(self):
        # the map is affine in eta3 through -2 eps^2 K0/g off the band, whose
        # norm 2 eps^2 (1+delta)/delta^2 bounds the measured ratio from below
        floor = 2 * EPS ** 2 * (1 + DELTA) / DELTA ** 2
        measured = decomposition().reports["eta3"]["extra"]["contraction_measured"]
        assert 0.8 * floor <= measured < 0.5

    def test_solves_offband_equation(self):
        d = decomposition()
        N = R.Nonlinearity(d.params.c2, "cheap")
        res = R.offband_equation_residual(d.eta1, d.F, d.eta3, d.params, N)
        assert sobolev_norm(res, 1) < 1e-8 * sobolev_norm(d.eta3, 1)

    def test_fixed_point_and_offband_forms_agree(self):
        d = decomposition()
        N = R.Nonlinearity(d.params.c2, "cheap")
        trial = 0.5 * d.eta3 + 1e-3 * R.F_of_eta1(d.eta1, EPS)
        lhs = R.offband_equation_residual(d.eta1, d.F, trial, d.params, N)
        G = R.eta3_map(d.eta1, d.F, trial, d.params, N)
        rhs = apply_multiplier(trial - G, symbol_g)
        assert sobolev_norm(lhs - rhs, 0) < 1e-12 * sobolev_norm(lhs, 0)

    def test_bookkeeping(self):
        d = decomposition()
        assert all(v["ok"] for v in d.band_bookkeeping().values())
        assert np.array_equal(d.eta2.coeffs, (d.F + d.eta3).coeffs)
        assert d.norms["within_R1"] and d.norms["within_R3"] and d.norms["below_z_ceiling"]

    def test_symmetry_inherited(self):
        d = decomposition()
        for f in (d.eta1, d.F, d.eta3):
            for axis in ("x", "z"):
                assert np.abs(reflect(f, axis).values - f.values).max() < 1e-12 * sup_norm(f)

    def test_depression_wave(self):
        up, down = decomposition(), decomposition(sign=-1.0)
        assert np.array_equal(down.F.coeffs, up.F.coeffs)
        assert sup_norm(up.eta + down.eta) < 0.1 * sup_norm(up.eta)
        centre = (ENV.nx // 2 * 16, ENV.nz // 2 * 4)
        assert up.eta.values[centre] > 0.9 * sup_norm(up.eta)
        assert down.eta.values[centre] < -0.9 * sup_norm(down.eta)

    def test_out_of_regime_aborts(self):
        with pytest.raises(ConvergenceError, match="contraction regime"):
            R.reconstruct_surface(gaussian_envelope(2.0), WaveParams(EPS),
                                  cfg=R.ReductionConfig(mode="cheap"))

    def test_config_validation(self):
        for kw in (dict(mode="exact"), dict(tol=0), dict(abort_contraction=1.0)):
            with pytest.raises(ValueError):
                R.ReductionConfig(**kw)


class TestResidual:
    def test_zero(self):
        r = R.full_residual(SpectralField.zeros(CARRIER), WaveParams(EPS).c2)
        assert r.h1 == 0

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            R.full_residual(SpectralField.zeros(CARRIER), 2.0, mode="fast")

    def test_ordering(self):
        # measured relative residuals 6.7e-3 < 6.8e-3 < 1.4e-2
        d = decomposition()
        c2 = d.params.c2
        full = R.full_residual(d.eta, c2, mode="cheap")
        no_eta3 = R.full_residual(d.eta1 + d.F, c2, mode="cheap")
        bare = R.full_residual(d.eta1, c2, mode="cheap")
        assert full.h1 < no_eta3.h1 < bare.h1
        assert full.offband_h1 < 1e-8 * full.h1

    def test_cheap_matches_full_at_small_amplitude(self):
        eta = decomposition().eta
        c2 = WaveParams(EPS).c2
        a = R.full_residual(eta, c2, mode="cheap")
        b = R.full_residual(eta, c2, dno.DnoConfig())
        assert a.h1 == pytest.approx(b.h1, rel=1e-4)
        # quartic content shows up off the band only in full mode
        assert b.offband_h1 > 1e3 * a.offband_h1


class TestCancellations:
    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_quadratic_misses_band(self, seed):
        assert R.quadratic_band_leak(band_limited(seed)) < 1e-14

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_extra_term(self, seed):
        assert R.extra_term_cancellation(band_limited(seed)) < 1e-14

    def test_cascade_reference(self):
        # for eta1 = a cos x the reference is (a/2)^3 at (1, 0)
        a = 0.1
        eta1 = SpectralField.from_function(CARRIER, lambda x, z: a * np.cos(x) + 0 * z)
        ref = R.cubic_reference(eta1)
        X = CARRIER.mesh[0]
        assert np.allclose(ref.values, (a / 2) ** 3 * np.exp(1j * X), atol=1e-15)

    def test_l1_bounds(self):
        d = decomposition()
        est = R.l1_estimate(d.eta1, EPS)
        assert est["l1"] <= est["bound_sharp"] <= est["bound_2sqrtpi"]


def test_remainder_term_lives_in_envelope_band():
    z = gaussian_envelope(0.5)
    term = R.remainder_coupling(WaveParams(EPS), ENV)
    out = term(z)
    assert term.cache["last_report"].converged
    assert np.all(np.isfinite(out.coeffs))
    assert np.abs(out.coeffs[~(ENV.kabs < DELTA / EPS)]).max() < 1e-12 * np.abs(out.coeffs).max()
    # the coupling is a correction: small next to the cubic it corrects
    cub = band_project(padded_product(z, z, z, conj=(1,)), EPS)
    assert sobolev_norm(out, 0) < sobolev_norm(cub, 0)
