import io

import numpy as np
import pytest

from ems_forge import (Direction, Frequency, IncidentWave, MadCostConfig,
                       MetaAtomGeometry, SurrogateProvider, SwarmConfig,
                       cost_mad, delta_gamma, design_meta_atom,
                       frequency_response, swarm_minimize, two_state_table)
from ems_forge.conventions import TE, TM
from ems_forge.madopt import (MAX_ITERATIONS, STAGNATION,
                              frequency_response_csv)
from ems_forge.reflection import load_reflection_table, TabulatedProvider

from conftest import F0

GEOM = MetaAtomGeometry.reference()


def make_wave():
    return IncidentWave(Frequency(F0), Direction.from_degrees(0.0, 0.0))


def split_provider(phi1_deg, phi0_deg, mag1=1.0, mag0=1.0):
    return two_state_table(mag1 * np.exp(1j * np.radians(phi1_deg)),
                           mag0 * np.exp(1j * np.radians(phi0_deg)))


class TestDeltaGamma:
    def test_antipodal(self):
        provider = split_provider(0.0, 180.0)
        assert delta_gamma(GEOM, make_wave(), provider) == pytest.approx(np.pi)

    def test_paper_operating_point(self):
        provider = split_provider(10.0, 155.0)
        expect = np.radians(145.0)
        assert delta_gamma(GEOM, make_wave(), provider) == pytest.approx(expect)

    def test_identical_phases(self):
        provider = split_provider(42.0, 42.0)
        assert delta_gamma(GEOM, make_wave(), provider) == pytest.approx(0.0)

    def test_range(self):
        provider = split_provider(-170.0, 170.0)  # wraps to 20 degrees
        d = delta_gamma(GEOM, make_wave(), provider)
        assert d == pytest.approx(np.radians(20.0))
        assert 0.0 <= d <= np.pi


class TestCostMad:
    def test_ideal_atom_costs_four_beta2(self):
        provider = split_provider(0.0, 180.0)
        cfg = MadCostConfig(wave=make_wave(), provider=provider, beta1=2.0,
                            beta2=0.3)
        assert cost_mad(GEOM, cfg) == pytest.approx(4 * 0.3)

    def test_paper_point_arithmetic(self):
        # 145 deg split on both polarizations, unit magnitudes:
        # 2*beta1*(35*pi/180) + 4*beta2
        provider = split_provider(0.0, 145.0)
        cfg = MadCostConfig(wave=make_wave(), provider=provider, beta1=1.0,
                            beta2=1.0)
        phase_term = 2 * np.radians(35.0)
        assert phase_term == pytest.approx(1.2217304764, abs=1e-6)
        assert cost_mad(GEOM, cfg) == pytest.approx(phase_term + 4.0)

    def test_magnitude_floor_keeps_cost_finite(self):
        provider = split_provider(0.0, 180.0, mag0=0.0)
        cfg = MadCostConfig(wave=make_wave(), provider=provider, beta1=0.0,
                            beta2=1.0, magnitude_floor=1e-6)
        c = cost_mad(GEOM, cfg)
        assert np.isfinite(c)
        assert c == pytest.approx(2.0 + 2.0 / 1e-6)

    def test_phase_only_with_beta2_zero(self):
        a = split_provider(0.0, 170.0, mag1=1.0, mag0=1.0)
        b = split_provider(0.0, 170.0, mag1=0.4, mag0=0.9)
        cfg = dict(wave=make_wave(), beta1=1.0, beta2=0.0)
        assert cost_mad(GEOM, MadCostConfig(provider=a, **cfg)) == \
            pytest.approx(cost_mad(GEOM, MadCostConfig(provider=b, **cfg)))

    def test_magnitude_only_with_beta1_zero(self):
        a = split_provider(0.0, 170.0, mag1=0.5, mag0=0.8)
        b = split_provider(90.0, 30.0, mag1=0.5, mag0=0.8)
        cfg = dict(wave=make_wave(), beta1=0.0, beta2=1.0)
        assert cost_mad(GEOM, MadCostConfig(provider=a, **cfg)) == \
            pytest.approx(cost_mad(GEOM, MadCostConfig(provider=b, **cfg)))

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            MadCostConfig(wave=make_wave(), provider=None, beta1=0.0,
                          beta2=0.0)


def sphere(x):
    return float(np.sum((x - 0.3) ** 2))


class TestSwarm:
    def test_sphere_benchmark(self):
        swarm = SwarmConfig(population=20, max_iterations=200, rng_seed=7,
                            stagnation_window=200)
        res = swarm_minimize(sphere, np.zeros(4), np.ones(4), swarm)
        assert res.cost <= 1e-6
        assert res.x_opt == pytest.approx(np.full(4, 0.3), abs=1e-3)

    def test_history_non_increasing(self):
        swarm = SwarmConfig(population=8, max_iterations=60, rng_seed=3)
        res = swarm_minimize(sphere, np.zeros(4), np.ones(4), swarm)
        assert all(a >= b for a, b in zip(res.history, res.history[1:]))

    def test_seed_determinism(self):
        swarm = SwarmConfig(population=10, max_iterations=40, rng_seed=99)
        r1 = swarm_minimize(sphere, np.zeros(3), np.ones(3), swarm)
        r2 = swarm_minimize(sphere, np.zeros(3), np.ones(3), swarm)
        assert np.array_equal(r1.x_opt, r2.x_opt)
        assert r1.cost == r2.cost
        assert r1.history == r2.history

    def test_two_particles_one_dimension(self):
        swarm = SwarmConfig(population=2, max_iterations=50, rng_seed=1)
        res = swarm_minimize(lambda x: float((x[0] - 0.4) ** 2),
                             np.zeros(1), np.ones(1), swarm)
        assert all(a >= b for a, b in zip(res.history, res.history[1:]))
        assert res.termination in (MAX_ITERATIONS, STAGNATION)

    def test_invalid_bounds_rejected_before_evaluation(self):
        calls = []

        def spy(x):
            calls.append(x)
            return 0.0

        swarm = SwarmConfig(population=4, max_iterations=5, rng_seed=0)
        with pytest.raises(ValueError):
            swarm_minimize(spy, np.ones(2), np.zeros(2), swarm)
        assert calls == []

    def test_bound_safety_audit(self):
        lo = np.array([0.1, -2.0])
        hi = np.array([0.9, 3.0])
        seen = []

        def audited(x):
            seen.append(x.copy())
            return float(np.sum(x ** 2))

        swarm = SwarmConfig(population=12, max_iterations=50, rng_seed=5)
        swarm_minimize(audited, lo, hi, swarm)
        pts = np.array(seen)
        assert np.all(pts >= lo - 1e-12)
        assert np.all(pts <= hi + 1e-12)

    def test_history_length_is_iteration_count(self):
        swarm = SwarmConfig(population=2, max_iterations=1, rng_seed=0,
                            stagnation_window=10)
        res = swarm_minimize(sphere, np.zeros(2), np.ones(2), swarm)
        assert len(res.history) == 1
        assert res.termination == MAX_ITERATIONS

    def test_stagnation_stops_early(self):
        swarm = SwarmConfig(population=4, max_iterations=500, rng_seed=2,
                            stagnation_window=10, stagnation_tol=1e-6)
        res = swarm_minimize(lambda x: 1.0, np.zeros(2), np.ones(2), swarm)
        assert res.termination == STAGNATION
        assert len(res.history) < 500

    def test_beats_random_baseline(self):
        wave = make_wave()
        provider = SurrogateProvider()
        cfg = MadCostConfig(wave=wave, provider=provider, beta1=1.0, beta2=0.1)
        swarm = SwarmConfig(population=20, max_iterations=60, rng_seed=7)
        res = design_meta_atom(cfg, swarm, GEOM)
        lo, hi = GEOM.bounds()
        rng = np.random.default_rng(7)
        samples = lo + rng.uniform(size=(20 * 60, lo.size)) * (hi - lo)
        baseline = min(cost_mad(GEOM.with_values(v), cfg) for v in samples)
        assert res.cost <= baseline


class TestDesignRun:
    def test_surrogate_reaches_wide_split(self):
        wave = make_wave()
        provider = SurrogateProvider()
        cfg = MadCostConfig(wave=wave, provider=provider, beta1=1.0, beta2=0.1)
        swarm = SwarmConfig(population=20, max_iterations=60, rng_seed=7)
        res = design_meta_atom(cfg, swarm, GEOM)
        split = np.degrees(delta_gamma(res.g_opt, wave, provider, TM))
        assert split >= 120.0
        lo, hi = GEOM.bounds()
        assert np.all(res.g_opt.values() >= lo)
        assert np.all(res.g_opt.values() <= hi)

    def test_result_json_fields(self):
        wave = make_wave()
        cfg = MadCostConfig(wave=wave, provider=SurrogateProvider(),
                            beta1=1.0, beta2=0.1)
        swarm = SwarmConfig(population=2, max_iterations=1, rng_seed=0)
        res = design_meta_atom(cfg, swarm, GEOM)
        d = res.to_json_dict()
        assert set(d) == {"g_opt", "cost", "history", "termination", "seed"}
        assert set(d["g_opt"]) == {"patch_edge", "pin_radius", "strip_length",
                                   "cell_spacing"}


class TestFrequencyResponse:
    def test_single_frequency_rows(self):
        provider = split_provider(0.0, 145.0)
        rows = frequency_response(GEOM, provider, [F0], make_wave())
        assert len(rows) == 4  # two polarizations x two states
        assert {(r.pol, r.state) for r in rows} == {
            (TE, 0), (TE, 1), (TM, 0), (TM, 1)}
        for r in rows:
            assert r.delta_gamma_deg == pytest.approx(145.0)

    def test_tabulated_roundtrip_bit_exact(self):
        csv = ("freq_hz,state,component,mag,phase_deg\n"
               "5e9,0,TM,0.91,171.25\n5e9,1,TM,0.87,22.5\n"
               "5.5e9,0,TM,0.95,145.0\n5.5e9,1,TM,0.93,0.0\n"
               "6e9,0,TM,0.9,120.0\n6e9,1,TM,0.88,-20.0\n")
        provider = TabulatedProvider(load_reflection_table(csv))
        rows = frequency_response(GEOM, provider, [5e9, 5.5e9, 6e9],
                                  make_wave())
        tm_rows = {(r.freq_hz, r.state): r for r in rows if r.pol == TM}
        assert tm_rows[(5.5e9, 0)].mag_db == pytest.approx(
            20 * np.log10(0.95))
        assert tm_rows[(5.5e9, 0)].phase_deg == pytest.approx(145.0)
        assert tm_rows[(6e9, 1)].phase_deg == pytest.approx(-20.0)

    def test_out_of_band_skipped_with_warning(self):
        provider = split_provider(0.0, 145.0)  # single-frequency table
        with pytest.warns(UserWarning, match="skipping"):
            rows = frequency_response(GEOM, provider, [F0, 9e9], make_wave())
        assert {r.freq_hz for r in rows} == {F0}

    def test_surrogate_efficiency_at_f0(self):
        rows = frequency_response(GEOM, SurrogateProvider(), [F0], make_wave())
        for r in rows:
            assert r.mag_db >= -3.0

    def test_csv_header(self):
        rows = frequency_response(GEOM, split_provider(0.0, 145.0), [F0],
                                  make_wave())
        buf = io.StringIO()
        frequency_response_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "freq_hz,pol,state,mag_db,phase_deg,delta_gamma_deg"
        assert len(lines) == 5
