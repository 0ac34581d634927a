import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ems_forge import (Direction, Frequency, IncidentWave, MetaAtomGeometry,
                       PanelConfiguration, PhiCut, StateMatrix, cost_otpems,
                       exhaustive_oracle, ideal_phase_profile,
                       ideal_reference_pattern, pattern_factorized,
                       pattern_metrics, quantize_states, synthesize,
                       two_state_table)
from ems_forge.conventions import TE, wrap_phase
from ems_forge.pattern import UnsupportedPolarizationError
from ems_forge.synthesis import (PhaseProfile, SynthesisSpec, load_states_csv,
                                 pattern_value_at, report_to_json,
                                 save_states_csv, target_sum_coefficients)

from conftest import C0, F0, LAMBDA0, layout_cells

K0 = 2 * np.pi * F0 / C0
GEOM = MetaAtomGeometry.reference()


def make_spec(provider, theta_refl_deg, P=30, Q=30, theta_inc_deg=0.0,
              phase0=0.0, e0=1.0):
    wave = IncidentWave(Frequency(F0),
                        Direction.from_degrees(theta_inc_deg, 0.0),
                        amplitude_e0=e0, phase0=phase0)
    return SynthesisSpec(Direction.from_degrees(theta_refl_deg, 0.0), wave,
                         layout_cells(P, Q), GEOM, provider)


def phase_provider(phi1_deg, phi0_deg, mag1=1.0, mag0=1.0):
    """Provider with intact phase phi1 and burnt phase phi0 (degrees)."""
    return two_state_table(mag1 * np.exp(1j * np.radians(phi1_deg)),
                           mag0 * np.exp(1j * np.radians(phi0_deg)))


class TestIdealPhaseProfile:
    def test_broadside_uniform(self, split145_provider):
        spec = make_spec(split145_provider, 0.0, P=4, Q=4, phase0=0.7)
        xi = ideal_phase_profile(spec).xi
        # compensation of a uniform incident phase: constant -phase0
        assert xi == pytest.approx(np.full((4, 4), -0.7))

    def test_scan_ramp_step(self, split145_provider):
        # steering to -30 deg with 0.45-wavelength spacing: the compensation
        # phase climbs by k*dx*0.5 = 0.45*pi per cell along x
        spec = make_spec(split145_provider, -30.0, P=6, Q=3)
        xi = ideal_phase_profile(spec).xi
        step = wrap_phase(np.diff(xi, axis=0))
        expect = 2 * np.pi * 0.45 * 0.5
        assert expect == pytest.approx(1.413716694, abs=1e-9)
        assert step == pytest.approx(np.full((5, 3), expect))
        assert wrap_phase(np.diff(xi, axis=1)) == pytest.approx(np.zeros((6, 2)))

    def test_specular_doubles_the_ramp(self, split145_provider):
        # theta_inc = theta_refl: incident-phase and steering contributions
        # add, so the compensation ramp is twice the single-sided one
        spec = make_spec(split145_provider, 25.0, P=5, Q=2, theta_inc_deg=25.0)
        xi = ideal_phase_profile(spec).xi
        step = wrap_phase(np.diff(xi, axis=0))
        expect = wrap_phase(-2 * K0 * spec.layout.dx * np.sin(np.radians(25.0)))
        assert step == pytest.approx(np.full((4, 2), expect))

    def test_te_rejected(self, split145_provider):
        wave = IncidentWave(Frequency(F0), Direction(0, 0), polarization=TE)
        with pytest.raises(UnsupportedPolarizationError):
            SynthesisSpec(Direction(0, 0), wave, layout_cells(2, 2), GEOM,
                          split145_provider)


class TestQuantizeStates:
    def test_exact_match_picks_intact(self, f0_wave):
        provider = phase_provider(0.0, 180.0)
        spec = make_spec(provider, 0.0, P=2, Q=2)
        report = quantize_states(spec, PhaseProfile(np.zeros((2, 2))))
        assert np.all(report.states.s == 1)

    def test_wrapped_distance_decision(self):
        # available phases 0 and 145 deg, target 100 deg: distances are
        # 100 vs 45 deg, so the burnt state wins
        provider = phase_provider(0.0, 145.0)
        spec = make_spec(provider, 0.0, P=1, Q=1)
        profile = PhaseProfile(np.full((1, 1), np.radians(100.0)))
        report = quantize_states(spec, profile)
        assert report.states.s[0, 0] == 0
        assert report.residuals[0, 0] == pytest.approx(np.radians(-45.0))

    def test_uniform_profile_uniform_states(self, split145_provider):
        spec = make_spec(split145_provider, 0.0, P=5, Q=4)
        report = quantize_states(spec, ideal_phase_profile(spec))
        assert report.burn_count in (0, 5 * 4)

    def test_tie_breaks_toward_intact(self):
        provider = phase_provider(90.0, -90.0)
        spec = make_spec(provider, 0.0, P=1, Q=1)
        report = quantize_states(spec, PhaseProfile(np.zeros((1, 1))))
        assert report.states.s[0, 0] == 1

    def test_degenerate_atom_warns_all_intact(self):
        provider = phase_provider(40.0, 40.0)
        spec = make_spec(provider, -30.0, P=3, Q=3)
        with pytest.warns(UserWarning, match="degenerate"):
            report = quantize_states(spec, ideal_phase_profile(spec))
        assert report.burn_count == 0

    def test_per_cell_optimality_invariant(self, split145_provider):
        spec = make_spec(split145_provider, -30.0, P=10, Q=10)
        report = quantize_states(spec, ideal_phase_profile(spec))
        xi = report.ideal_profile.xi
        phi1 = np.radians(0.0)
        phi0 = np.radians(145.0)
        other = np.where(report.states.s == 1, phi0, phi1)
        chosen = np.abs(wrap_phase(xi - report.realized_phases))
        alt = np.abs(wrap_phase(xi - other))
        assert np.all(chosen <= alt + 1e-15)

    @settings(max_examples=40, deadline=None)
    @given(split_deg=st.floats(5.0, 180.0), anchor_deg=st.floats(-180, 180),
           seed=st.integers(0, 2 ** 16))
    def test_residual_bound(self, split_deg, anchor_deg, seed):
        provider = phase_provider(anchor_deg, anchor_deg + split_deg)
        spec = make_spec(provider, 0.0, P=3, Q=3)
        rng = np.random.default_rng(seed)
        profile = PhaseProfile(rng.uniform(-np.pi, np.pi, size=(3, 3)))
        report = quantize_states(spec, profile)
        bound = np.pi - np.radians(split_deg) / 2
        assert np.all(np.abs(report.residuals) <= bound + 1e-12)

    def test_global_rotation_keeps_states_away_from_ties(self,
                                                         split145_provider):
        spec = make_spec(split145_provider, -30.0, P=8, Q=8)
        profile = ideal_phase_profile(spec)
        base = quantize_states(spec, profile)
        phi1, phi0 = np.radians(0.0), np.radians(145.0)
        d1 = np.abs(wrap_phase(profile.xi - phi1))
        d0 = np.abs(wrap_phase(profile.xi - phi0))
        margin = np.abs(d1 - d0).min()
        eps = margin / 4
        rotated = two_state_table(np.exp(1j * eps),
                                  np.exp(1j * (np.radians(145.0) + eps)))
        spec_rot = make_spec(rotated, -30.0, P=8, Q=8)
        report_rot = quantize_states(spec_rot, profile)
        assert np.array_equal(base.states.s, report_rot.states.s)

    def test_determinism_bit_for_bit(self, split145_provider):
        spec = make_spec(split145_provider, -30.0, P=12, Q=12)
        a = synthesize(spec)
        b = synthesize(spec)
        assert np.array_equal(a.states.s, b.states.s)
        assert np.array_equal(a.ideal_profile.xi, b.ideal_profile.xi)
        assert a.cost == b.cost


class TestCost:
    def test_reciprocal(self):
        assert cost_otpems(4.0) == pytest.approx(0.25)

    def test_zero_pattern_infinite_cost(self):
        assert cost_otpems(0.0) == float("inf")

    def test_all_zero_gamma_infinite(self, f0_wave):
        provider = two_state_table(0.0 + 0j, 0.0 + 0j)
        layout = layout_cells(3, 3)
        cfg = PanelConfiguration(layout, GEOM, StateMatrix.intact(3, 3),
                                 provider)
        c = cost_otpems(cfg, f0_wave, Direction.from_degrees(-30.0, 0.0))
        assert c == float("inf")

    def test_synthesis_beats_constant_states(self, split145_provider, f0_wave):
        spec = make_spec(split145_provider, -30.0, P=30, Q=30)
        report = synthesize(spec)
        target = spec.direction_refl
        layout = spec.layout
        for const in (StateMatrix.intact(30, 30), StateMatrix.burnt(30, 30)):
            cfg = PanelConfiguration(layout, GEOM, const, split145_provider)
            assert report.cost <= cost_otpems(cfg, f0_wave, target)


class TestIdealReference:
    def test_peak_on_target(self, split145_provider):
        spec = make_spec(split145_provider, -30.0)
        pat = ideal_reference_pattern(spec, PhiCut())
        m = pattern_metrics(pat)
        assert m.peak_theta_deg == pytest.approx(-30.0, abs=0.25)

    def test_no_quantization_lobe(self, split145_provider):
        spec = make_spec(split145_provider, -30.0)
        pat = ideal_reference_pattern(spec, PhiCut())
        s = pat.samples()
        db = pat.peak_normalized_db()
        window = (s.theta_deg >= 28.0) & (s.theta_deg <= 32.0)
        assert db[window].max() <= -10.0

    def test_uniform_profile_equals_uniform_aperture(self, f0_wave):
        provider = phase_provider(0.0, 180.0)
        spec = make_spec(provider, 0.0, P=6, Q=6)
        ideal = ideal_reference_pattern(spec, PhiCut())
        cfg = PanelConfiguration(spec.layout, GEOM, StateMatrix.intact(6, 6),
                                 provider)
        uniform = pattern_factorized(cfg, f0_wave, PhiCut())
        assert ideal.values == pytest.approx(uniform.values, rel=1e-9)


class TestExhaustiveOracle:
    def test_size_refused(self, split145_provider):
        spec = make_spec(split145_provider, -30.0, P=5, Q=4)
        with pytest.raises(ValueError, match="refused"):
            exhaustive_oracle(spec)

    def test_one_by_two_agrees_with_quantizer(self, f0_wave):
        provider = phase_provider(0.0, 180.0)
        spec = make_spec(provider, -20.0, P=1, Q=2)
        best = exhaustive_oracle(spec)
        report = synthesize(spec, image_guard=False)
        f_oracle = pattern_value_at(
            PanelConfiguration(spec.layout, GEOM, best, provider), f0_wave,
            spec.direction_refl)
        assert 1.0 / report.cost == pytest.approx(f_oracle, rel=1e-9)

    def test_two_by_two_uniform_maximizer(self, f0_wave):
        provider = phase_provider(0.0, 180.0)
        spec = make_spec(provider, 0.0, P=2, Q=2)
        best = exhaustive_oracle(spec)
        f_best = pattern_value_at(
            PanelConfiguration(spec.layout, GEOM, best, provider), f0_wave,
            spec.direction_refl)
        uniform = pattern_value_at(
            PanelConfiguration(spec.layout, GEOM, StateMatrix.intact(2, 2),
                               provider), f0_wave, spec.direction_refl)
        assert f_best == pytest.approx(uniform, rel=1e-12)

    def test_three_by_three_gap_small(self, f0_wave, split145_provider):
        spec = make_spec(split145_provider, -30.0, P=3, Q=3)
        best = exhaustive_oracle(spec)
        report = synthesize(spec, image_guard=False)
        f_oracle = pattern_value_at(
            PanelConfiguration(spec.layout, GEOM, best, split145_provider),
            f0_wave, spec.direction_refl)
        f_quant = 1.0 / report.cost
        assert f_oracle >= f_quant - 1e-9
        assert (f_oracle - f_quant) / f_oracle <= 0.05


class TestSynthesizedBeams:
    @pytest.mark.parametrize("theta_inc,theta_refl",
                             [(0.0, -30.0), (10.0, -20.0), (20.0, -10.0),
                              (0.0, -10.0), (0.0, -40.0)])
    def test_beam_lands_on_target(self, split145_provider, theta_inc,
                                  theta_refl):
        spec = make_spec(split145_provider, theta_refl,
                         theta_inc_deg=theta_inc)
        report = synthesize(spec)
        cfg = PanelConfiguration(spec.layout, GEOM, report.states,
                                 split145_provider)
        m = pattern_metrics(pattern_factorized(cfg, spec.wave, PhiCut()))
        assert abs(m.peak_theta_deg - theta_refl) <= 1.0


class TestStateIo:
    def test_states_csv_roundtrip(self):
        rng = np.random.default_rng(0)
        states = StateMatrix(rng.integers(0, 2, size=(4, 7)))
        buf = io.StringIO()
        save_states_csv(states, buf)
        text = buf.getvalue()
        assert text.splitlines()[0].count(",") == 6
        back = load_states_csv(io.StringIO(text))
        assert np.array_equal(back.s, states.s)

    def test_report_json_contract(self, split145_provider):
        spec = make_spec(split145_provider, -30.0, P=3, Q=4)
        report = synthesize(spec)
        payload = json.loads(report_to_json(report, spec))
        for key in ("states", "xi_deg", "realized_deg", "residual_deg",
                    "cost", "burn_count", "spec"):
            assert key in payload
        assert len(payload["states"]) == 3
        assert len(payload["states"][0]) == 4
        assert payload["spec"]["theta_refl_deg"] == pytest.approx(30.0)
        assert payload["spec"]["phi_refl_deg"] == pytest.approx(180.0)
        assert payload["burn_count"] == int(
            np.sum(np.array(payload["states"]) == 0))
        assert len(payload["burn_sequence"]) == payload["burn_count"]

    def test_target_sum_coefficients_align_with_profile(self,
                                                        split145_provider):
        # the compensation profile is the negated phase of the target-sum
        # coefficients by construction
        spec = make_spec(split145_provider, -25.0, P=4, Q=3,
                         theta_inc_deg=15.0)
        xi = ideal_phase_profile(spec).xi
        c = target_sum_coefficients(spec)
        assert wrap_phase(xi + np.angle(c)) == pytest.approx(
            np.zeros_like(xi), abs=1e-9)
