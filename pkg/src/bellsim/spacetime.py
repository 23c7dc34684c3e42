"""Events in 1+1-dimensional Minkowski space and loophole-closure verdicts.

Positions live on a single spatial axis running from the source site toward
the remote receiver.  Times are seconds in the source rest frame.  Interval
classification is conservative: each event is widened by its finite duration
(plus an optional geometry slack) before an interval is called space-like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    ConfigurationError,
    InputError,
    InvalidFrameError,
    NoSimultaneousFrameError,
)

C_M_PER_S = 299_792_458.0

LABEL_EMISSION = "E"
LABEL_MEASUREMENT_A = "A"
LABEL_MEASUREMENT_B = "B"
LABEL_CHOICE_A = "a"
LABEL_CHOICE_B = "b"

# Default temporal extents: pump coherence for the emission, detector
# breakdown for measurements, random-generator autocorrelation for choices.
DEFAULT_DURATIONS_S = {
    LABEL_EMISSION: 1e-9,
    LABEL_MEASUREMENT_A: 10e-9,
    LABEL_MEASUREMENT_B: 10e-9,
    LABEL_CHOICE_A: 1.0 / (2 * 30e6),
    LABEL_CHOICE_B: 1.0 / (2 * 30e6),
}

# Allowance for the 1-D approximation of the real geometry, seconds.
DEFAULT_GEOMETRY_SLACK_S = 0.3e-6

LIGHTLIKE_TOL_M = 1e-6


class IntervalKind(Enum):
    SPACELIKE = "space-like"
    TIMELIKE = "time-like"
    LIGHTLIKE = "light-like"


@dataclass(frozen=True)
class SpacetimeEvent:
    """A labeled point (t, x) with a finite duration on the link axis."""

    label: str
    t: float
    x: float
    duration: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and math.isfinite(self.x)):
            raise InputError(f"event {self.label!r} has non-finite coordinates")
        if self.duration < 0:
            raise InputError(f"event {self.label!r} has negative duration")


def make_event(label: str, t: float, x: float, duration: float | None = None) -> SpacetimeEvent:
    """Build an event using the default duration for its label."""
    if duration is None:
        duration = DEFAULT_DURATIONS_S.get(label, 0.0)
    return SpacetimeEvent(label=label, t=t, x=x, duration=duration)


@dataclass(frozen=True)
class IntervalClass:
    """Causal class of an event pair plus the space-like margin in metres.

    ``margin_m = |dx| - c * (|dt| + duration padding + slack)``; the pair is
    space-like exactly when the margin is positive.
    """

    kind: IntervalKind
    margin_m: float

    @property
    def spacelike(self) -> bool:
        return self.kind is IntervalKind.SPACELIKE


@dataclass(frozen=True)
class LoopholeVerdict:
    locality_closed: bool
    freedom_closed: bool
    pair_report: tuple[tuple[str, str, IntervalClass], ...]
    settings_stochastic: bool


def interval_class(
    e1: SpacetimeEvent,
    e2: SpacetimeEvent,
    *,
    slack_s: float = 0.0,
    lightlike_tol_m: float = LIGHTLIKE_TOL_M,
) -> IntervalClass:
    """Classify the causal interval between two events.

    Events are widened by their durations plus ``slack_s`` before the
    space-like test, so a positive margin survives the worst-case alignment
    of the two event windows.  The light-like band applies to the unpadded
    interval; its default width (1 um) is far below any modeled distance.
    """
    dt = abs(e2.t - e1.t)
    dx = abs(e2.x - e1.x)
    raw_m = dx - C_M_PER_S * dt
    padding_s = e1.duration + e2.duration + slack_s
    margin_m = dx - C_M_PER_S * (dt + padding_s)
    if abs(raw_m) <= lightlike_tol_m:
        return IntervalClass(IntervalKind.LIGHTLIKE, margin_m)
    if margin_m > 0:
        return IntervalClass(IntervalKind.SPACELIKE, margin_m)
    return IntervalClass(IntervalKind.TIMELIKE, margin_m)


def gamma(v_m_per_s: float) -> float:
    """Lorentz factor; raises InvalidFrameError for |v| >= c."""
    beta = v_m_per_s / C_M_PER_S
    if abs(beta) >= 1.0:
        raise InvalidFrameError(f"|v| = {abs(v_m_per_s):.6g} m/s is not below c")
    return 1.0 / math.sqrt(1.0 - beta * beta)


def boost(e: SpacetimeEvent, v_m_per_s: float) -> SpacetimeEvent:
    """Lorentz-boost an event to a frame moving at ``v`` along the axis.

    ``t' = gamma (t - v x / c^2)``, ``x' = gamma (x - v t)``; the duration
    dilates by gamma.
    """
    g = gamma(v_m_per_s)
    t_new = g * (e.t - v_m_per_s * e.x / (C_M_PER_S * C_M_PER_S))
    x_new = g * (e.x - v_m_per_s * e.t)
    return SpacetimeEvent(label=e.label, t=t_new, x=x_new, duration=g * e.duration)


def simultaneity_frame(e1: SpacetimeEvent, e2: SpacetimeEvent) -> float:
    """Velocity of the frame in which two space-like events are simultaneous.

    Returns ``v = c^2 dt / dx`` with |v| < c.  Raises
    NoSimultaneousFrameError for time-like or light-like pairs.
    """
    dt = e2.t - e1.t
    dx = e2.x - e1.x
    if abs(dx) <= C_M_PER_S * abs(dt) + LIGHTLIKE_TOL_M:
        raise NoSimultaneousFrameError(
            f"events {e1.label!r}, {e2.label!r} are not space-like separated"
        )
    return C_M_PER_S * C_M_PER_S * dt / dx


@dataclass(frozen=True)
class ScenarioGeometry:
    """Space-time layout of one experiment scenario.

    The remote receiver sits at ``link_distance_m``; the source and the local
    analyzer sit at x = 0.  Setting-choice events are placed according to
    ``choice_arrangement``:

    * ``"delayed"``: choices are radio-relayed and electronically delayed so
      that the local choice is simultaneous with the emission and the remote
      choice happens before any light-speed signal from the source arrives.
    * ``"past"``: both choices are fixed long before the emission.
    * ``"source_future"``: both choices happen near the source shortly after
      the emission, inside its forward light cone.  The delivery of the
      remote setting to the distant analyzer is not modeled in this
      arrangement; it exists to represent the open-loophole geometry.
    """

    link_distance_m: float = 143.6e3
    alice_delay_s: float = 29.6e-6
    bob_delay_s: float = 479e-6
    qrng_alice_position_m: float = -1.2e3
    radio_link_s: float = 3.9e-6
    electronics_s: float = 0.6e-6
    electronic_delay_s: float = 24.6e-6
    setting_interval_s: float = 1e-6
    slack_s: float = DEFAULT_GEOMETRY_SLACK_S
    choice_arrangement: str = "delayed"
    choice_past_time_s: float = -1e-3

    def __post_init__(self) -> None:
        if self.link_distance_m < 0:
            raise ConfigurationError("link distance must be non-negative")
        for name in ("alice_delay_s", "bob_delay_s", "radio_link_s",
                     "electronics_s", "electronic_delay_s"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.setting_interval_s <= 0:
            raise ConfigurationError("setting interval must be positive")
        if self.choice_arrangement not in ("delayed", "past", "source_future"):
            raise ConfigurationError(
                f"unknown choice arrangement {self.choice_arrangement!r}"
            )


def build_scenario_events(geometry: ScenarioGeometry) -> list[SpacetimeEvent]:
    """Place the five key events (E, A, B, a, b) for a scenario.

    The emission is at the origin.  Measurement times equal the channel
    delays.  In the ``delayed`` arrangement the local choice time is
    back-computed from the signal path (radio link, electronics, electronic
    delay, half a setting interval) so that it coincides with the emission;
    the remote choice gets the same electronic delay.
    """
    g = geometry
    emission = make_event(LABEL_EMISSION, 0.0, 0.0)
    meas_a = make_event(LABEL_MEASUREMENT_A, g.alice_delay_s, 0.0)
    meas_b = make_event(LABEL_MEASUREMENT_B, g.bob_delay_s, g.link_distance_m)
    half_interval = 0.5 * g.setting_interval_s

    if g.choice_arrangement == "delayed":
        t_choice_a = g.alice_delay_s - (
            g.radio_link_s + g.electronics_s + g.electronic_delay_s + half_interval
        )
        x_choice_a = g.qrng_alice_position_m
        t_choice_b = g.bob_delay_s - (
            g.electronics_s + g.electronic_delay_s + half_interval
        )
        x_choice_b = g.link_distance_m
    elif g.choice_arrangement == "past":
        t_choice_a = g.choice_past_time_s
        x_choice_a = g.qrng_alice_position_m
        t_choice_b = g.choice_past_time_s
        x_choice_b = g.link_distance_m
        max_past = -max(abs(x_choice_a), abs(x_choice_b)) / C_M_PER_S
        if t_choice_a >= max_past:
            raise ConfigurationError(
                "past arrangement requires choices inside the backward light cone"
            )
    else:  # source_future
        t_choice_a = g.alice_delay_s - (
            g.radio_link_s + g.electronics_s + half_interval
        )
        x_choice_a = g.qrng_alice_position_m
        t_choice_b = t_choice_a
        x_choice_b = abs(g.qrng_alice_position_m)

    choice_a = make_event(LABEL_CHOICE_A, t_choice_a, x_choice_a)
    choice_b = make_event(LABEL_CHOICE_B, t_choice_b, x_choice_b)

    if choice_a.t > meas_a.t:
        raise ConfigurationError("local setting choice falls after photon arrival")
    if choice_b.t > meas_b.t:
        raise ConfigurationError("remote setting choice falls after photon arrival")

    return [emission, meas_a, meas_b, choice_a, choice_b]


LOCALITY_PAIRS = (
    (LABEL_MEASUREMENT_A, LABEL_MEASUREMENT_B),
    (LABEL_MEASUREMENT_A, LABEL_CHOICE_B),
    (LABEL_MEASUREMENT_B, LABEL_CHOICE_A),
)
FREEDOM_PAIRS = (
    (LABEL_CHOICE_A, LABEL_EMISSION),
    (LABEL_CHOICE_B, LABEL_EMISSION),
)


def verdicts(
    events: list[SpacetimeEvent],
    settings_stochastic: bool,
    *,
    slack_s: float = 0.0,
) -> LoopholeVerdict:
    """Loophole-closure verdict for the five key events.

    Locality needs (A,B), (A,b) and (B,a) space-like; freedom of choice needs
    (a,E) and (b,E) space-like.  Deterministic setting sources leave both
    loopholes open regardless of geometry, because predetermined settings
    have no creation point that geometry could isolate.
    """
    by_label: dict[str, SpacetimeEvent] = {}
    for event in events:
        if event.label in by_label:
            raise InputError(f"duplicate event label {event.label!r}")
        by_label[event.label] = event
    required = (LABEL_EMISSION, LABEL_MEASUREMENT_A, LABEL_MEASUREMENT_B,
                LABEL_CHOICE_A, LABEL_CHOICE_B)
    missing = [lbl for lbl in required if lbl not in by_label]
    if missing:
        raise InputError(f"missing event labels: {missing}")

    report = []
    classes = {}
    for l1, l2 in LOCALITY_PAIRS + FREEDOM_PAIRS:
        cls = interval_class(by_label[l1], by_label[l2], slack_s=slack_s)
        classes[(l1, l2)] = cls
        report.append((l1, l2, cls))

    locality = settings_stochastic and all(
        classes[p].spacelike for p in LOCALITY_PAIRS
    )
    freedom = settings_stochastic and all(
        classes[p].spacelike for p in FREEDOM_PAIRS
    )
    return LoopholeVerdict(
        locality_closed=locality,
        freedom_closed=freedom,
        pair_report=tuple(report),
        settings_stochastic=settings_stochastic,
    )
