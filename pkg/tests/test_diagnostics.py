import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlsgs.diagnostics import (
    Spectrum,
    energy_spectrum,
    enstrophy_spectrum,
    read_spectrum_csv,
    spectrum_log_error,
    tail_fraction,
    vorticity_pdf,
    write_pdf_csv,
    write_spectrum_csv,
)
from marlsgs.solver import energy, enstrophy, random_vorticity
from marlsgs.spectral import SpectralField, from_physical, make_grid, to_physical


def phys(n, fn):
    g = make_grid(n)
    x, y = g.coords()
    return from_physical(g, fn(x, y))


def spec(values):
    values = np.asarray(values, dtype=float)
    return Spectrum(np.arange(1, len(values) + 1), values)


class TestSpectra:
    def test_sine_enstrophy(self):
        z = enstrophy_spectrum(phys(32, lambda x, y: np.sin(3 * x)))
        assert z.values[2] == pytest.approx(0.25)
        assert np.sum(np.delete(z.values, 2)) == pytest.approx(0, abs=1e-28)

    def test_sine_energy(self):
        w = phys(32, lambda x, y: np.sin(3 * x))
        e = energy_spectrum(w)
        assert e.values[2] == pytest.approx(0.25 / 9)
        assert e.total == pytest.approx(enstrophy_spectrum(w).total / 9)

    def test_zero(self):
        w = SpectralField.zeros(make_grid(16))
        assert np.all(enstrophy_spectrum(w).values == 0) and np.all(energy_spectrum(w).values == 0)

    def test_shells_cover_dealiased_band(self):
        g = make_grid(32)
        z = enstrophy_spectrum(SpectralField.zeros(g))
        assert z.k[0] == 1 and z.k[-1] == g.k_shell_max

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([16, 32, 64]))
    def test_shell_sums_match_totals(self, seed, n):
        w = random_vorticity(make_grid(n), 3, seed)
        assert enstrophy_spectrum(w).total == pytest.approx(float(enstrophy(w)), rel=1e-8)
        assert energy_spectrum(w).total == pytest.approx(float(energy(w)), rel=1e-8)
        x = to_physical(w)
        assert enstrophy_spectrum(w).total == pytest.approx(0.5 * np.mean(x**2), rel=1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_energy_is_enstrophy_over_k2_in_single_shell(self, seed):
        g = make_grid(64)
        m = 10
        w = random_vorticity(g, 8, seed)
        w.coeffs *= g.shell == m
        z, e = enstrophy_spectrum(w).values[m - 1], energy_spectrum(w).values[m - 1]
        assert abs(e - z / m**2) < 0.1 * z / m**2

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), sx=st.integers(0, 31), sy=st.integers(0, 31))
    def test_translation_invariance(self, seed, sx, sy):
        w = random_vorticity(make_grid(32), 4, seed)
        shifted = from_physical(w.grid, np.roll(to_physical(w), (sx, sy), axis=(0, 1)))
        np.testing.assert_allclose(enstrophy_spectrum(shifted).values, enstrophy_spectrum(w).values,
                                   rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(energy_spectrum(shifted).values, energy_spectrum(w).values,
                                   rtol=1e-10, atol=1e-14)

    def test_batched_spectra(self):
        g = make_grid(16)
        a, b = random_vorticity(g, 2, 0), random_vorticity(g, 3, 1)
        both = SpectralField(g, np.stack([a.coeffs, b.coeffs]))
        z = enstrophy_spectrum(both).values
        np.testing.assert_allclose(z[1], enstrophy_spectrum(b).values)


class TestLogError:
    def test_identical(self):
        assert spectrum_log_error(spec([1, 2, 3]), spec([1, 2, 3])) == 0

    def test_uniform_ratio(self):
        a = spec(np.linspace(1, 2, 16))
        b = spec(a.values * np.exp(0.1))
        assert spectrum_log_error(a, b) == pytest.approx(0.16, rel=1e-12)

    def test_one_bin_ratio_e(self):
        a = spec([1.0, 2.0, 3.0])
        b = spec([1.0, 2.0 * np.e, 3.0])
        assert spectrum_log_error(a, b) == pytest.approx(1.0, rel=1e-12)

    def test_bin_mismatch(self):
        with pytest.raises(ValueError):
            spectrum_log_error(spec([1, 2]), spec([1, 2, 3]))

    def test_floor_keeps_empty_shells_finite(self):
        assert np.isfinite(spectrum_log_error(spec([0.0, 1.0]), spec([1.0, 1.0])))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.floats(1e-6, 1e6)),
                    min_size=1, max_size=12))
    def test_symmetry_and_triangle(self, rows):
        a, b, c = (spec(col) for col in zip(*rows))
        ab = spectrum_log_error(a, b)
        assert ab == pytest.approx(spectrum_log_error(b, a))
        lhs = np.sqrt(spectrum_log_error(a, c))
        assert lhs <= np.sqrt(ab) + np.sqrt(spectrum_log_error(b, c)) + 1e-9


class TestPdf:
    def test_zero_field_in_central_bin(self):
        pdf = vorticity_pdf([np.zeros((16, 16))])
        assert pdf.sigma == 0
        mass = pdf.density * np.diff(pdf.bin_edges)
        assert mass[50] == pytest.approx(1.0) and mass.sum() == pytest.approx(1.0)

    def test_sine_sigma_and_arcsine_shape(self):
        x = np.arange(4096) * 2 * np.pi / 4096
        pdf = vorticity_pdf([np.sin(x)[:, None] * np.ones((1, 4))], n_bins=41, range_sigmas=1.5)
        assert pdf.sigma == pytest.approx(1 / np.sqrt(2), rel=1e-12)
        mass = pdf.density * np.diff(pdf.bin_edges)
        assert mass.sum() == pytest.approx(1.0, abs=1e-6)
        c = pdf.centers
        inside = np.abs(c) < 0.8
        # arcsine density 1/(pi sqrt(1 - w^2)), histogram-averaged
        expected = 1 / (np.pi * np.sqrt(1 - c[inside] ** 2))
        np.testing.assert_allclose(pdf.density[inside], expected, rtol=0.05)
        assert pdf.tail_fractions[3.0] == 0.0

    def test_bins_symmetric_and_normalized(self):
        rng = np.random.default_rng(0)
        pdf = vorticity_pdf([rng.standard_normal((64, 64)) for _ in range(3)])
        np.testing.assert_allclose(pdf.bin_edges, -pdf.bin_edges[::-1], atol=1e-12)
        assert np.sum(pdf.density * np.diff(pdf.bin_edges)) == pytest.approx(1.0, abs=1e-6)
        assert pdf.n_samples == 3 * 64 * 64

    def test_empty(self):
        with pytest.raises(ValueError):
            vorticity_pdf([])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), t1=st.floats(0, 6), t2=st.floats(0, 6))
    def test_tail_monotone(self, seed, t1, t2):
        v = np.random.default_rng(seed).standard_t(3, size=2000)
        lo, hi = sorted((t1, t2))
        assert tail_fraction(v, hi) <= tail_fraction(v, lo)


class TestCsv:
    def test_spectrum_round_trip(self, tmp_path):
        s = enstrophy_spectrum(random_vorticity(make_grid(32), 4, 0))
        write_spectrum_csv(tmp_path / "s.csv", s, {"n_les": 32, "closure": "none"}, "enstrophy")
        back, meta = read_spectrum_csv(tmp_path / "s.csv")
        assert np.array_equal(back.k, s.k) and np.array_equal(back.values, s.values)
        assert meta == {"closure": "none", "n_les": "32"}
        assert "k,enstrophy" in (tmp_path / "s.csv").read_text()

    def test_pdf_csv(self, tmp_path):
        pdf = vorticity_pdf([np.random.default_rng(1).standard_normal((32, 32))], n_bins=11)
        write_pdf_csv(tmp_path / "p.csv", pdf, {"closure": "marl"})
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert "omega,density" in lines
        assert any(line.startswith("# tail_fraction_3sigma") for line in lines)
        assert len(lines) - lines.index("omega,density") - 1 == 11
