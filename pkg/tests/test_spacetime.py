import math

import numpy as np
import pytest

from bellsim import spacetime as st
from bellsim.errors import (
    ConfigurationError,
    InputError,
    InvalidFrameError,
    NoSimultaneousFrameError,
)

C = st.C_M_PER_S

MEAS_A = st.make_event(st.LABEL_MEASUREMENT_A, 29.6e-6, 0.0)
MEAS_B = st.make_event(st.LABEL_MEASUREMENT_B, 479e-6, 143.6e3)
EMISSION = st.make_event(st.LABEL_EMISSION, 0.0, 0.0)


class TestIntervalClass:
    def test_measurement_pair_is_spacelike(self):
        cls = st.interval_class(MEAS_A, MEAS_B)
        assert cls.kind is st.IntervalKind.SPACELIKE
        # c * 449.4 us = 134.73 km of light travel against 143.6 km.
        assert cls.margin_m == pytest.approx(143.6e3 - C * 449.4e-6, abs=20.0)

    def test_colocated_events_are_timelike(self):
        cls = st.interval_class(EMISSION, MEAS_A)
        assert cls.kind is st.IntervalKind.TIMELIKE
        assert cls.margin_m < 0

    def test_photon_world_line_is_lightlike_within_rounding(self):
        # The published coordinates are rounded to 0.1 us / 0.1 km, so the
        # emission-to-remote-detection line needs a metre-scale tolerance.
        cls = st.interval_class(EMISSION, MEAS_B, lightlike_tol_m=1.0)
        assert cls.kind is st.IntervalKind.LIGHTLIKE
        assert abs(143.6e3 - C * 479e-6) < 1.0

    def test_duration_padding_can_flip_marginal_pairs(self):
        e1 = st.SpacetimeEvent("x", 0.0, 0.0, duration=1e-6)
        e2 = st.SpacetimeEvent("y", 0.0, 200.0, duration=0.0)
        assert st.interval_class(e1, e2).kind is st.IntervalKind.TIMELIKE
        e1_short = st.SpacetimeEvent("x", 0.0, 0.0, duration=0.0)
        assert st.interval_class(e1_short, e2).kind is st.IntervalKind.SPACELIKE

    def test_slack_adds_padding(self):
        e1 = st.SpacetimeEvent("x", 0.0, 0.0)
        e2 = st.SpacetimeEvent("y", 0.0, 50.0)
        assert st.interval_class(e1, e2).spacelike
        assert not st.interval_class(e1, e2, slack_s=0.3e-6).spacelike

    def test_negative_duration_rejected(self):
        with pytest.raises(InputError):
            st.SpacetimeEvent("x", 0.0, 0.0, duration=-1e-9)

    def test_non_finite_coordinates_rejected(self):
        with pytest.raises(InputError):
            st.SpacetimeEvent("x", float("nan"), 0.0)


class TestBoost:
    def test_zero_boost_is_identity(self):
        out = st.boost(MEAS_B, 0.0)
        assert out.t == MEAS_B.t and out.x == MEAS_B.x
        assert out.duration == MEAS_B.duration

    def test_round_trip_recovers_coordinates(self):
        v = 0.7 * C
        out = st.boost(st.boost(MEAS_B, v), -v)
        assert out.t == pytest.approx(MEAS_B.t, rel=1e-9)
        assert out.x == pytest.approx(MEAS_B.x, rel=1e-9)

    def test_superluminal_frame_rejected(self):
        with pytest.raises(InvalidFrameError):
            st.boost(MEAS_A, C)
        with pytest.raises(InvalidFrameError):
            st.gamma(-1.1 * C)

    def test_duration_dilates(self):
        v = 0.938 * C
        out = st.boost(MEAS_A, v)
        assert out.duration == pytest.approx(MEAS_A.duration * st.gamma(v))

    def test_gamma_basics(self):
        assert st.gamma(0.0) == 1.0
        for v in np.linspace(-0.99, 0.99, 21) * C:
            assert st.gamma(v) >= 1.0


class TestSimultaneityFrame:
    def test_reference_frame_velocity_and_contraction(self):
        v = st.simultaneity_frame(MEAS_A, MEAS_B)
        assert v / C == pytest.approx(0.938, abs=1e-3)
        g = st.gamma(v)
        assert g == pytest.approx(2.89, abs=0.01)
        assert 143.6e3 / g == pytest.approx(49.7e3, abs=0.2e3)

    def test_boosting_makes_events_simultaneous(self):
        v = st.simultaneity_frame(MEAS_A, MEAS_B)
        dt = st.boost(MEAS_B, v).t - st.boost(MEAS_A, v).t
        assert abs(dt) < 1e-12
        # Also within the duration tolerance of the events themselves.
        assert abs(dt) < MEAS_A.duration

    def test_already_simultaneous_pair_gives_zero(self):
        e1 = st.SpacetimeEvent("x", 1e-6, 0.0)
        e2 = st.SpacetimeEvent("y", 1e-6, 1e3)
        assert st.simultaneity_frame(e1, e2) == 0.0

    def test_timelike_pair_has_no_frame(self):
        with pytest.raises(NoSimultaneousFrameError):
            st.simultaneity_frame(EMISSION, MEAS_A)
        with pytest.raises(NoSimultaneousFrameError):
            st.simultaneity_frame(EMISSION, MEAS_B)


class TestScenarioEvents:
    def test_default_geometry_reproduces_reference_coordinates(self):
        events = st.build_scenario_events(st.ScenarioGeometry())
        by_label = {e.label: e for e in events}
        assert by_label["A"].t == pytest.approx(29.6e-6)
        assert by_label["A"].x == 0.0
        assert by_label["B"].t == pytest.approx(479e-6)
        assert by_label["B"].x == pytest.approx(143.6e3)
        choice_a = by_label["a"]
        assert abs(choice_a.t) <= 0.5e-6
        assert choice_a.x == pytest.approx(-1.2e3)
        choice_b = by_label["b"]
        assert choice_b.t == pytest.approx(479e-6 - 0.6e-6 - 24.6e-6 - 0.5e-6)

    def test_source_future_choices_sit_inside_forward_cone(self):
        geometry = st.ScenarioGeometry(choice_arrangement="source_future")
        events = st.build_scenario_events(geometry)
        by_label = {e.label: e for e in events}
        for label in ("a", "b"):
            choice = by_label[label]
            assert choice.t > abs(choice.x) / C
            assert st.interval_class(by_label["E"], choice).kind is st.IntervalKind.TIMELIKE

    def test_degenerate_geometry_leaves_nothing_spacelike(self):
        geometry = st.ScenarioGeometry(
            link_distance_m=0.0, alice_delay_s=0.0, bob_delay_s=0.0,
            qrng_alice_position_m=0.0,
        )
        events = st.build_scenario_events(geometry)
        for i, e1 in enumerate(events):
            for e2 in events[i + 1:]:
                kind = st.interval_class(e1, e2).kind
                assert kind in (st.IntervalKind.TIMELIKE, st.IntervalKind.LIGHTLIKE)

    def test_choice_after_arrival_is_a_configuration_error(self):
        geometry = st.ScenarioGeometry(
            alice_delay_s=1e-6, radio_link_s=0.0, electronics_s=0.0,
            electronic_delay_s=0.0, setting_interval_s=1e-6,
        )
        # Choice time 0.5 us before arrival works; pushing arrival earlier
        # than the signal path fails.
        st.build_scenario_events(geometry)
        with pytest.raises(ConfigurationError):
            st.build_scenario_events(
                st.ScenarioGeometry(choice_arrangement="past", choice_past_time_s=-1e-7)
            )

    def test_negative_distances_rejected(self):
        with pytest.raises(ConfigurationError):
            st.ScenarioGeometry(link_distance_m=-1.0)
        with pytest.raises(ConfigurationError):
            st.ScenarioGeometry(electronic_delay_s=-1e-6)


def _default_events():
    return st.build_scenario_events(st.ScenarioGeometry())


class TestVerdicts:
    def test_flagship_arrangement_closes_both(self):
        verdict = st.verdicts(_default_events(), settings_stochastic=True,
                              slack_s=0.3e-6)
        assert verdict.locality_closed
        assert verdict.freedom_closed
        assert len(verdict.pair_report) == 5

    def test_past_choices_leave_both_open(self):
        geometry = st.ScenarioGeometry(choice_arrangement="past")
        verdict = st.verdicts(st.build_scenario_events(geometry),
                              settings_stochastic=False)
        assert not verdict.locality_closed
        assert not verdict.freedom_closed

    def test_deterministic_settings_open_both_despite_geometry(self):
        verdict = st.verdicts(_default_events(), settings_stochastic=False)
        assert not verdict.locality_closed
        assert not verdict.freedom_closed

    def test_missing_and_duplicate_labels_rejected(self):
        events = _default_events()
        with pytest.raises(InputError):
            st.verdicts(events[:4], settings_stochastic=True)
        with pytest.raises(InputError):
            st.verdicts(events + [events[0]], settings_stochastic=True)


class TestLorentzInvariance:
    def test_interval_class_preserved_under_boosts(self):
        rng = np.random.default_rng(12345)
        for _ in range(2000):
            e1 = st.SpacetimeEvent("p", rng.uniform(-1e-3, 1e-3),
                                   rng.uniform(-2e5, 2e5))
            e2 = st.SpacetimeEvent("q", rng.uniform(-1e-3, 1e-3),
                                   rng.uniform(-2e5, 2e5))
            v = rng.uniform(-0.99, 0.99) * C
            before = st.interval_class(e1, e2).kind
            after = st.interval_class(st.boost(e1, v), st.boost(e2, v)).kind
            assert before is after

    def test_verdicts_preserved_under_boosts(self):
        rng = np.random.default_rng(999)
        arrangements = ("delayed", "past", "source_future")
        for arrangement in arrangements:
            events = st.build_scenario_events(
                st.ScenarioGeometry(choice_arrangement=arrangement)
            )
            reference = st.verdicts(events, settings_stochastic=True)
            for _ in range(40):
                v = rng.uniform(-0.99, 0.99) * C
                boosted = [st.boost(e, v) for e in events]
                moved = st.verdicts(boosted, settings_stochastic=True)
                assert moved.locality_closed == reference.locality_closed
                assert moved.freedom_closed == reference.freedom_closed

    def test_spacelike_margin_shrinks_but_survives_at_extreme_boost(self):
        events = _default_events()
        v = 0.99 * C
        boosted = [st.boost(e, v) for e in events]
        verdict = st.verdicts(boosted, settings_stochastic=True)
        assert verdict.locality_closed and verdict.freedom_closed
