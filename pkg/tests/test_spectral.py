import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattice_qe.bath import LatticeSpec, dispersion, dos
from lattice_qe.errors import DivergenceError, TailWindowError
from lattice_qe.greens import ComplexEnergy, g00, midband_self_energy_continued, self_energy
from lattice_qe.spectral import (
    EmitterSet,
    analyze_midband,
    amplitude_via_resolvent,
    asymptotic_bath_amplitude,
    band_bound_states,
    fgr_rate,
    four_emitter_residue_numeric,
    four_emitter_steady_population,
    long_time_tail_exponent,
    midband_rate_estimate,
    pole_residue,
    resolvent_e,
    state_self_energy,
    unstable_poles,
)


def single(delta, g):
    return EmitterSet.single(delta, g)


class TestEmitterSet:
    def test_positions_distinct(self):
        with pytest.raises(ValueError):
            EmitterSet([(0, 0), (0, 0)], 0.0, 0.1)

    def test_in_band(self, spec):
        assert single(-3.9, 0.1).in_band(spec)
        assert not single(4.2, 0.1).in_band(spec)


class TestResolvent:
    def test_uncoupled(self, spec):
        assert resolvent_e(spec, single(0.3, 0.0), 1 + 1j) == pytest.approx(1 / (0.7 + 1j))

    def test_far_field(self, spec):
        z = 1e5j
        assert resolvent_e(spec, single(0.0, 0.1), z) == pytest.approx(1 / z, rel=1e-6)

    def test_composition_with_self_energy(self, spec):
        z = 1j
        sigma = complex(self_energy(spec, 0.1, z, tol=1e-12))
        G = resolvent_e(spec, single(0.0, 0.1), z, tol=1e-12)
        assert abs(1 / G - (z - sigma)) < 1e-10

    def test_second_sheet_uses_continuation(self, spec):
        z = ComplexEnergy(0.004 - 0.01j, "second")
        expected = 1 / (z.z - midband_self_energy_continued(spec, 0.1, z))
        assert resolvent_e(spec, single(0.0, 0.1), z) == pytest.approx(expected)

    def test_pattern_self_energy(self, spec):
        em = EmitterSet([(0, 0), (3, 3)], 0.0, 0.1)
        z = 0.3j
        s_minus = state_self_energy(spec, em, z, [1, -1])
        from lattice_qe.greens import sigma_collective_pm

        assert s_minus == pytest.approx(sigma_collective_pm(spec, 0.1, z, (3, 3), -1), abs=1e-12)


class TestFGR:
    def test_outside_band(self, spec):
        assert fgr_rate(spec, 0.1, 4.5) == 0.0

    def test_divergent_at_centre(self, spec):
        with pytest.raises(DivergenceError):
            fgr_rate(spec, 0.1, 0.0)

    def test_uses_histogram_dos(self, spec):
        assert fgr_rate(spec, 0.1, -3.0) == pytest.approx(2 * np.pi * 0.01 * dos(spec, -3.0, 0.01, 16384))

    def test_band_edge_plateau(self, spec):
        assert fgr_rate(spec, 0.1, -3.9) == pytest.approx(0.005, rel=0.05)

    @pytest.mark.parametrize("delta", [-3.0, -2.0, -1.0])
    def test_optical_theorem(self, spec, delta):
        assert fgr_rate(spec, 0.1, delta) == pytest.approx(self_energy(spec, 0.1, delta).rate, rel=0.01)


class TestPoles:
    def test_real_parts(self, spec):
        zp, zm = unstable_poles(spec, 0.1, 0.0)
        assert zp.real == pytest.approx(0.005, rel=0.2)
        assert zm.real == pytest.approx(-0.005, rel=0.2)
        assert zp.sheet == "second"

    def test_particle_hole_symmetry(self, spec):
        zp, zm = unstable_poles(spec, 0.1, 0.0)
        assert abs(complex(zm) + np.conj(complex(zp))) < 1e-10

    def test_roots_solve_second_sheet_equation(self, spec):
        for z in unstable_poles(spec, 0.1, 0.002):
            f = z.z - 0.002 - midband_self_energy_continued(spec, 0.1, z)
            assert abs(f) < 1e-12
            assert z.imag < 0

    @given(st.floats(0.03, 0.3), st.floats(-0.99, 0.99))
    def test_two_pole_regime(self, g, frac):
        spec = LatticeSpec(8)
        delta = frac * g * g / 2
        zp, zm = unstable_poles(spec, g, delta)
        assert zp.real > zm.real
        assert zp.imag < 0 and zm.imag < 0

    def test_outside_regime_rejected(self, spec):
        with pytest.raises(ValueError):
            unstable_poles(spec, 0.1, 0.01)

    def test_leading_log_rate_value(self, spec):
        assert midband_rate_estimate(spec, 0.1) == pytest.approx(0.02933, abs=2e-5)

    def test_population_convention(self, spec):
        zp, _ = unstable_poles(spec, 0.1, 0.0)
        lead = midband_rate_estimate(spec, 0.1)
        assert abs(2 * abs(zp.imag) / lead - 1) < 0.25
        assert abs(abs(zp.imag) / lead - 1) > 0.5

    def test_residue_formula(self, spec):
        zp, _ = unstable_poles(spec, 0.1, 0.0)
        h = 1e-7
        f = lambda z: z - midband_self_energy_continued(spec, 0.1, ComplexEnergy(z, "second"))
        deriv = (f(zp.z + h) - f(zp.z - h)) / (2 * h)
        assert pole_residue(spec, 0.1, zp) == pytest.approx(1 / deriv, rel=1e-6)

    def test_analyze_midband(self, spec):
        res = analyze_midband(spec, 0.1)
        assert res.fgr_rate == math.inf
        assert res.nonperturbative_rate == pytest.approx(2 * abs(res.poles[0][0].imag))
        assert "2 |Im z_pole|" in res.rate_convention


class TestBoundStates:
    def test_strong_coupling_below_band(self, spec):
        states = band_bound_states(spec, 0.5, -3.9)
        lower = [s for s in states if s[0] < 0]
        assert lower
        E, R = lower[0]
        assert E < -4
        assert abs(E + 3.9 - 0.25 * g00(spec, E + 0j, tol=1e-12)) < 1e-9
        assert 0 < R < 1

    def test_residues_bounded(self, spec):
        for delta in (-3.5, -1.0, 0.0, 2.0):
            total = sum(R for _, R in band_bound_states(spec, 0.3, delta))
            assert 0 <= total <= 1


class TestResolventAmplitude:
    def test_normalisation(self, spec):
        for delta in (-3.0, 0.0, 1.0):
            assert abs(amplitude_via_resolvent(spec, single(delta, 0.1), 0.0) - 1) < 1e-6

    def test_uncoupled(self, spec):
        t = np.array([0.0, 1.5, 7.0])
        assert np.allclose(amplitude_via_resolvent(spec, single(0.7, 0.0), t), np.exp(-0.7j * t))

    def test_bounded(self, spec):
        t = np.linspace(0, 300, 31)
        c = amplitude_via_resolvent(spec, single(-0.5, 0.2), t)
        assert np.all(np.abs(c) <= 1 + 1e-9)

    def test_midband_amplitude_real(self, spec):
        c = amplitude_via_resolvent(spec, single(0.0, 0.1), [10.0, 80.0])
        assert np.all(np.abs(c.imag) < 1e-10)

    def test_rejects_negative_time(self, spec):
        with pytest.raises(ValueError):
            amplitude_via_resolvent(spec, single(0.0, 0.1), -1.0)

    def test_golden_rule_regime(self, spec):
        t = np.linspace(20, 120, 6)
        c = amplitude_via_resolvent(spec, single(-1.0, 0.2), t)
        rate = fgr_rate(spec, 0.2, -1.0)
        slope = -np.polyfit(t, np.log(np.abs(c) ** 2), 1)[0]
        assert slope == pytest.approx(rate, rel=0.02)


class TestTail:
    def test_exact_law(self):
        t = np.geomspace(200, 2000, 20)
        p = 3.0 / (t * np.log(16 * t) ** 2) ** 2
        fit = long_time_tail_exponent(t, p)
        assert fit.drift < 1e-10
        assert fit.constant == pytest.approx(3.0)

    def test_exponential_refused(self):
        t = np.geomspace(10, 1000, 20)
        with pytest.raises(TailWindowError):
            long_time_tail_exponent(t, np.exp(-0.05 * t))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            long_time_tail_exponent([1, 2], [0.1, 0.2])


class TestAsymptoticBath:
    def test_completeness(self):
        spec = LatticeSpec(512)
        kx, ky = spec.k_grid()
        amp = asymptotic_bath_amplitude(spec, single(-1.0, 0.3), kx, ky)
        assert np.sum(np.abs(amp) ** 2) / spec.N**2 == pytest.approx(1.0, abs=1e-3)

    def test_directional_at_centre(self):
        spec = LatticeSpec(128)
        kx, ky = spec.k_grid()
        mod = np.abs(asymptotic_bath_amplitude(spec, single(0.0, 0.1), kx, ky))
        i = np.unravel_index(np.argmax(mod), mod.shape)
        # the peak sits at the pole energy ~ g^2/2J, within a grid step of |kx +- ky| = pi
        s, d = abs(kx[i] + ky[i]), abs(kx[i] - ky[i])
        assert min(abs(s - np.pi), abs(d - np.pi)) <= 2 * np.pi / spec.N + 1e-12
        w = np.abs(dispersion(spec, kx, ky))
        assert mod[w < 0.05].mean() > 10 * mod[w > 0.2].mean()

    def test_isotropic_on_contour(self, spec):
        phi = np.linspace(0, 2 * np.pi, 40)
        # points on omega = -3 : cos kx + cos ky = 1.5
        kx = np.arccos(0.5 + 0.5 * (1 + np.cos(phi)) / 2)
        ky = np.arccos(1.5 - np.cos(kx))
        mod = np.abs(asymptotic_bath_amplitude(spec, single(-3.0, 0.1), kx, ky))
        assert np.ptp(mod) < 1e-9 * mod.max()


class TestFourEmitter:
    def test_values(self, spec):
        amp, pop = four_emitter_steady_population(spec, 0.05, 3)
        assert amp == pytest.approx(0.97800, abs=1e-5)
        assert pop == pytest.approx(0.95648, abs=1e-5)

    def test_weak_coupling_limit(self, spec):
        assert four_emitter_steady_population(spec, 1e-9, 3)[0] == pytest.approx(1.0)

    @given(st.floats(0.01, 0.5), st.integers(1, 6), st.floats(1.01, 3))
    def test_decreasing_in_gn(self, g, n, factor):
        spec = LatticeSpec(8)
        assert four_emitter_steady_population(spec, g * factor, n)[1] < four_emitter_steady_population(spec, g, n)[1]

    def test_numeric_residue(self, spec):
        amp, _ = four_emitter_steady_population(spec, 0.05, 3)
        assert four_emitter_residue_numeric(spec, 0.05, 3) == pytest.approx(amp, abs=1e-4)

    def test_invalid_n(self, spec):
        with pytest.raises(ValueError):
            four_emitter_steady_population(spec, 0.05, 0)
