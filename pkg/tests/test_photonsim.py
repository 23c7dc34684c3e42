import math

import numpy as np
import pytest
from scipy import stats

from bellsim import coincidence, photonsim as ps, quantum
from bellsim.errors import CausalityViolationError, ConfigurationError, InputError
from bellsim.randomness import Periodic, QuantumToggle, SettingSource, sample_settings
from bellsim.spacetime import ScenarioGeometry


def _clean_config(**overrides):
    """Lossless, noiseless configuration used by statistical oracles."""
    defaults = dict(
        pair_rate_local_hz=500.0,
        alice_channel=ps.ChannelConfig(delay_s=29.6e-6, attenuation_db=0.0),
        bob_channel=ps.ChannelConfig(delay_s=479e-6, attenuation_db=0.0),
        dark_rate_alice_hz=0.0,
        dark_rate_bob_hz=0.0,
        source_visibility_hv=1.0,
        source_visibility_diag=1.0,
        analyzer_visibility=1.0,
        fiber_visibility=1.0,
        gating=ps.GatingConfig(discard_window_s=0.0, rise_time_s=0.0),
        run_duration_s=20.0,
    )
    defaults.update(overrides)
    return ps.ScenarioConfig(**defaults)


class TestEmission:
    def test_poisson_count(self):
        times = ps.emit_pairs(2.5e6, 1.0, seed=1)
        assert abs(len(times) - 2.5e6) < 4 * math.sqrt(2.5e6)
        assert np.all(np.diff(times) >= 0)
        assert times.min() >= 0 and times.max() <= 1.0

    def test_zero_rate_is_empty(self):
        assert len(ps.emit_pairs(0.0, 1.0, seed=1)) == 0
        assert len(ps.emit_pairs(1e6, 0.0, seed=1)) == 0

    def test_interarrival_times_are_exponential(self):
        rate = 1e5
        times = ps.emit_pairs(rate, 1.0, seed=2)
        gaps = np.diff(times)
        result = stats.kstest(gaps, "expon", args=(0, 1.0 / rate))
        assert result.pvalue > 0.01


class TestPropagate:
    def test_survival_fraction(self):
        times = np.linspace(0, 1, 1_000_000)
        survivors = ps.propagate(times, ps.ChannelConfig(0.0, 20.0), seed=3)
        assert abs(len(survivors) - 1e4) < 400

    def test_lossless_channel_is_pure_delay(self):
        times = np.linspace(0, 1, 1000)
        out = ps.propagate(times, ps.ChannelConfig(29.6e-6, 0.0), seed=4)
        assert np.allclose(out, times + 29.6e-6)

    def test_attenuations_compose(self):
        times = np.linspace(0, 1, 200_000)
        first = ps.propagate(times, ps.ChannelConfig(0.0, 7.0), seed=5)
        second = ps.propagate(first, ps.ChannelConfig(0.0, 3.0), seed=6)
        expected = len(times) * 10 ** (-1.0)
        assert abs(len(second) - expected) < 5 * math.sqrt(expected)


class TestActiveSetting:
    def test_duty_cycle_fraction(self):
        gating = ps.GatingConfig()
        assert gating.duty_cycle == pytest.approx(1 - 35e-9 * 1e6)
        source = SettingSource(QuantumToggle(), 1e6)
        stream = sample_settings(source, 1e-3, seed=7)
        rng = np.random.default_rng(8)
        times = rng.uniform(0, 1e-3, 200_000)
        invalid = sum(
            1 for t in times if not ps.active_setting(stream, gating, t)[1]
        )
        assert invalid / len(times) == pytest.approx(0.035, abs=0.002)

    def test_interval_midpoint_is_valid(self):
        source = SettingSource(QuantumToggle(), 1e6)
        stream = sample_settings(source, 1e-5, seed=9)
        bit, valid = ps.active_setting(stream, ps.GatingConfig(), 3.5e-6)
        assert valid
        assert bit in (0, 1)

    def test_zero_discard_keeps_everything(self):
        source = SettingSource(QuantumToggle(), 1e6)
        stream = sample_settings(source, 1e-5, seed=10)
        gating = ps.GatingConfig(discard_window_s=0.0, rise_time_s=0.0)
        for t in (0.0, 1e-9, 4.9999e-6):
            assert ps.active_setting(stream, gating, t)[1]

    def test_out_of_stream_time_rejected(self):
        source = SettingSource(QuantumToggle(), 1e6)
        stream = sample_settings(source, 1e-5, seed=11)
        with pytest.raises(InputError):
            ps.active_setting(stream, ps.GatingConfig(), 2e-5)


class TestLhvStrategies:
    def test_sixteen_deterministic_strategies(self):
        strategies = ps.all_deterministic_strategies()
        assert len(strategies) == 16
        values = [s.expected_chsh() for s in strategies]
        assert max(values) == pytest.approx(2.0, abs=1e-12)
        assert ps.best_deterministic_strategy().expected_chsh() == pytest.approx(2.0)

    def test_random_stochastic_strategies_respect_bound(self):
        for seed in range(300):
            strategy = ps.random_stochastic_strategy(seed)
            assert strategy.expected_chsh() <= 2.0 + 1e-9

    def test_strategy_validation(self):
        with pytest.raises(InputError):
            ps.LhvStrategy(
                weights=np.array([0.5, 0.4]),
                alice_plus=np.zeros((2, 2)),
                bob_plus=np.zeros((2, 2)),
            )
        with pytest.raises(InputError):
            ps.deterministic_strategy(1, 1, 1, 2)


class TestMeasurePair:
    def test_quantum_equal_angles_anticorrelate(self):
        rho = quantum.werner(1.0)
        for seed in range(100):
            a, b = ps.measure_pair(
                ps.HiddenVariableMode.QUANTUM, rho, 0, 0, seed,
                alice_angles_deg=(30.0, 30.0), bob_angles_deg=(30.0, 30.0),
            )
            assert a == -b

    def test_deterministic_strategy_is_deterministic(self):
        strategy = ps.deterministic_strategy(1, -1, 1, 1)
        for seed in range(20):
            a, b = ps.measure_pair(
                ps.HiddenVariableMode.LOCAL_DETERMINISTIC, strategy, 1, 0, seed
            )
            assert (a, b) == (-1, 1)

    def test_setting_aware_source_saturates_chsh(self):
        rng_tallies = np.zeros((2, 2))
        for seed in range(200):
            a_bit = seed % 2
            b_bit = (seed // 2) % 2
            a, b = ps.measure_pair(
                ps.HiddenVariableMode.SETTING_AWARE_SOURCE, None, a_bit, b_bit, seed
            )
            reported_a = a * (1 if a_bit == 0 else -1)
            reported_b = -b
            sign = 1 if (a_bit, b_bit) != (1, 1) else -1
            assert reported_a * reported_b == sign
            rng_tallies[a_bit, b_bit] += 1
        assert rng_tallies.min() > 0


class TestExploitGates:
    def test_setting_aware_needs_freedom_open(self):
        cfg = ps.ScenarioConfig(
            hidden_variable_mode=ps.HiddenVariableMode.SETTING_AWARE_SOURCE,
            run_duration_s=0.1,
        )
        with pytest.raises(CausalityViolationError):
            ps.run_experiment(cfg, seed=0)

    def test_setting_aware_allowed_in_open_geometry(self):
        cfg = _clean_config(
            geometry=ScenarioGeometry(choice_arrangement="source_future"),
            hidden_variable_mode=ps.HiddenVariableMode.SETTING_AWARE_SOURCE,
            run_duration_s=5.0,
        )
        result = ps.run_experiment(cfg, seed=1)
        assert not result.verdict.freedom_closed
        analysis = coincidence.analyze_streams(
            result.alice, result.bob, compensate=False
        )
        assert analysis.estimate.s_value == pytest.approx(4.0, abs=0.05)

    def test_signaling_needs_locality_open(self):
        cfg = ps.ScenarioConfig(
            hidden_variable_mode=ps.HiddenVariableMode.SIGNALING,
            signaling_speed_m_s=ps.C_M_PER_S,
            run_duration_s=0.1,
        )
        with pytest.raises(CausalityViolationError):
            ps.run_experiment(cfg, seed=0)

    def test_signaling_needs_a_reachable_path(self):
        geometry = ScenarioGeometry(choice_arrangement="past")
        cfg = _clean_config(
            geometry=geometry,
            hidden_variable_mode=ps.HiddenVariableMode.SIGNALING,
            signaling_speed_m_s=1.0,
            run_duration_s=0.1,
        )
        with pytest.raises(ConfigurationError):
            ps.run_experiment(cfg, seed=0)

    def test_signaling_runs_when_reachable(self):
        geometry = ScenarioGeometry(choice_arrangement="past")
        cfg = _clean_config(
            geometry=geometry,
            hidden_variable_mode=ps.HiddenVariableMode.SIGNALING,
            signaling_speed_m_s=ps.C_M_PER_S,
            run_duration_s=2.0,
        )
        result = ps.run_experiment(cfg, seed=2)
        assert len(result.alice) > 0

    def test_superluminal_signaling_rejected(self):
        with pytest.raises(ConfigurationError):
            ps.ScenarioConfig(
                hidden_variable_mode=ps.HiddenVariableMode.SIGNALING,
                signaling_speed_m_s=2 * ps.C_M_PER_S,
            )

    def test_setting_dependent_strategy_blocked_when_closed(self):
        strategy = ps.LhvStrategy(
            weights=np.array([1.0]),
            alice_plus=np.array([[1.0, 0.0]]),
            bob_plus=np.array([[1.0, 0.0]]),
            setting_dependent=True,
        )
        cfg = ps.ScenarioConfig(
            hidden_variable_mode=ps.HiddenVariableMode.LOCAL_DETERMINISTIC,
            lhv_strategy=strategy,
            run_duration_s=0.1,
        )
        with pytest.raises(CausalityViolationError):
            ps.run_experiment(cfg, seed=0)


class TestRunExperiment:
    def test_zero_duration_gives_empty_streams(self):
        cfg = ps.ScenarioConfig(run_duration_s=0.0)
        result = ps.run_experiment(cfg, seed=0)
        assert len(result.alice) == 0
        assert len(result.bob) == 0
        assert result.verdict.locality_closed

    def test_seed_reproducibility(self):
        cfg = _clean_config(run_duration_s=2.0)
        one = ps.run_experiment(cfg, seed=7)
        two = ps.run_experiment(cfg, seed=7)
        other = ps.run_experiment(cfg, seed=8)
        assert np.array_equal(one.alice.time_ps, two.alice.time_ps)
        assert np.array_equal(one.alice.channel, two.alice.channel)
        assert np.array_equal(one.bob.setting, two.bob.setting)
        assert not np.array_equal(one.alice.time_ps, other.alice.time_ps)

    def test_streams_are_sorted(self):
        cfg = ps.ScenarioConfig(run_duration_s=1.0)
        result = ps.run_experiment(cfg, seed=3)
        for stream in (result.alice, result.bob):
            assert np.all(np.diff(stream.time_ps) >= 0)

    def test_rate_budget(self):
        cfg = _clean_config(
            pair_rate_local_hz=1e5,
            alice_channel=ps.ChannelConfig(delay_s=29.6e-6, attenuation_db=5.0),
            bob_channel=ps.ChannelConfig(delay_s=479e-6, attenuation_db=5.0),
            run_duration_s=10.0,
        )
        result = ps.run_experiment(cfg, seed=5)
        analysis = coincidence.analyze_streams(
            result.alice, result.bob, compensate=False
        )
        expected = 1e5 * 10 ** (-1.0) * 10.0
        assert abs(analysis.coincidences.total - expected) / expected < 0.05

    def test_duty_cycle_budget(self):
        cfg = ps.ScenarioConfig(run_duration_s=2.0)
        seeds = np.random.SeedSequence(17).spawn(1)
        rng = np.random.default_rng(seeds[0])
        times = rng.uniform(0, 2.0, 1_000_000)
        _, valid = ps._settings_and_gate(cfg, "alice", times, setting_seed=99)
        discarded = 1.0 - valid.mean()
        expected = cfg.gating.discard_window_s * cfg.gating.toggle_rate_hz
        assert abs(discarded - expected) < 0.005

    def test_ideal_limit_reaches_tsirelson(self):
        cfg = _clean_config(run_duration_s=20.0)
        result = ps.run_experiment(cfg, seed=11)
        analysis = coincidence.analyze_streams(
            result.alice, result.bob, compensate=False
        )
        est = analysis.estimate
        assert analysis.coincidences.total > 5000
        assert abs(est.s_value - 2 * math.sqrt(2)) < 4 * est.sigma_s

    def test_local_strategies_respect_classical_bound(self):
        for strategy in (ps.best_deterministic_strategy(),
                         ps.random_stochastic_strategy(5)):
            cfg = _clean_config(
                hidden_variable_mode=ps.HiddenVariableMode.LOCAL_DETERMINISTIC,
                lhv_strategy=strategy,
                run_duration_s=20.0,
            )
            result = ps.run_experiment(cfg, seed=13)
            analysis = coincidence.analyze_streams(
                result.alice, result.bob, compensate=False
            )
            est = analysis.estimate
            assert est.s_value <= 2.0 + 4 * est.sigma_s

    def test_fiber_drift_ramp_reduces_visibility(self):
        cfg = _clean_config(fiber_visibility_end=None)
        assert cfg.state_visibility_at(10.0) == pytest.approx(cfg.state_visibility)
        drifting = _clean_config(fiber_visibility=0.97, fiber_visibility_end=0.87,
                                 run_duration_s=600.0)
        start = drifting.state_visibility_at(0.0)
        end = drifting.state_visibility_at(600.0)
        assert start == pytest.approx(0.97)
        assert end == pytest.approx(0.87)

    def test_table_one_sign_pattern(self):
        cfg = _clean_config(run_duration_s=20.0)
        result = ps.run_experiment(cfg, seed=19)
        analysis = coincidence.analyze_streams(
            result.alice, result.bob, compensate=False
        )
        rows = analysis.estimate.rows()
        signs = [math.copysign(1, e) for _, _, e, _, _ in rows]
        assert signs == [1.0, 1.0, 1.0, -1.0]


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ConfigurationError):
            ps.ScenarioConfig(pair_rate_local_hz=-1.0)
        with pytest.raises(ConfigurationError):
            ps.ScenarioConfig(coincidence_window_s=0.0)
        with pytest.raises(ConfigurationError):
            ps.ScenarioConfig(fiber_visibility=1.2)
        with pytest.raises(ConfigurationError):
            ps.ChannelConfig(delay_s=-1.0, attenuation_db=0.0)
        with pytest.raises(ConfigurationError):
            ps.GatingConfig(rise_time_s=20e-9, discard_window_s=10e-9)

    def test_gating_and_source_rates_must_agree(self):
        with pytest.raises(ConfigurationError):
            ps.ScenarioConfig(
                alice_source=SettingSource(QuantumToggle(), 2e6),
            )


class TestTagStream:
    def test_unsorted_stream_rejected(self):
        with pytest.raises(InputError):
            ps.TagStream(
                np.array([10, 5], dtype=np.int64),
                np.zeros(2, dtype=np.uint8),
                np.zeros(2, dtype=np.uint8),
            )

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            ps.TagStream(
                np.array([1, 2], dtype=np.int64),
                np.zeros(1, dtype=np.uint8),
                np.zeros(2, dtype=np.uint8),
            )

    def test_indexing_yields_tags(self):
        stream = ps.TagStream.from_arrays([5, 1], [0, 1], [1, 0])
        tag = stream[0]
        assert tag == ps.TimeTag(time_ps=1, channel=ps.Channel.REFLECTED, setting_bit=0)
        assert len(stream) == 2
