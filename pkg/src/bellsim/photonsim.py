"""Monte Carlo generation of time-tagged detection streams.

The pipeline draws pair emissions as a Poisson process, thins each arm by
its channel transmission, looks up the active analyzer setting at arrival,
applies the switching-gate discard, samples outcomes (quantum statistics or
a pluggable local-hidden-variable strategy) and injects dark counts.  The
two returned streams are what the time-tagging units would have written.

Photons that lose their partner carry no usable correlation, so the three
populations (both survive / only one side survives) are generated directly
at their exact Poisson rates instead of materializing every emitted pair;
this is what makes multi-thousand-second runs tractable.

Port labeling: the physical outcome +1 means the transmitted port of the
analyzer.  The recorded channel applies the instrument's wiring convention
(the remote side's ports are swapped, and the local side's ports are swapped
in its second basis), which fixes the sign pattern of the reported
correlations without affecting |S|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import quantum
from .errors import CausalityViolationError, ConfigurationError, InputError
from .randomness import (
    QuantumToggle,
    SettingSource,
    SettingStream,
    bits_at_intervals,
)
from .spacetime import (
    C_M_PER_S,
    LABEL_CHOICE_A,
    LABEL_CHOICE_B,
    LABEL_MEASUREMENT_A,
    LABEL_MEASUREMENT_B,
    LoopholeVerdict,
    ScenarioGeometry,
    SpacetimeEvent,
    build_scenario_events,
    verdicts,
)

PS_PER_S = 1e12

# Analyzer angle (degrees) selected by each setting bit.
ALICE_ANGLES_DEG = (22.5, 67.5)
BOB_ANGLES_DEG = (0.0, 45.0)

_BOB_PORT_SIGN = -1


def _alice_port_sign(a_bits: np.ndarray) -> np.ndarray:
    """Port relabeling on the local side: swapped in the 67.5 degree basis."""
    return 1 - 2 * np.asarray(a_bits, dtype=np.int8)


def _chsh_sign(a_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    """Sign of each setting combination in the CHSH sum (minus at (1, 1))."""
    return 1 - 2 * (np.asarray(a_bits, dtype=np.int8) & np.asarray(b_bits, dtype=np.int8))


class Channel(IntEnum):
    TRANSMITTED = 0
    REFLECTED = 1


@dataclass(frozen=True)
class TimeTag:
    """One detection record."""

    time_ps: int
    channel: Channel
    setting_bit: int


@dataclass(frozen=True)
class TagStream:
    """Column-oriented detection records, non-decreasing in time."""

    time_ps: np.ndarray
    channel: np.ndarray
    setting: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.time_ps) == len(self.channel) == len(self.setting)):
            raise InputError("tag stream arrays must have equal lengths")
        if len(self.time_ps) > 1 and np.any(self.time_ps[1:] < self.time_ps[:-1]):
            raise InputError("tag stream times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.time_ps)

    def __getitem__(self, i: int) -> TimeTag:
        return TimeTag(
            time_ps=int(self.time_ps[i]),
            channel=Channel(int(self.channel[i])),
            setting_bit=int(self.setting[i]),
        )

    @classmethod
    def from_arrays(cls, time_ps, channel, setting) -> "TagStream":
        time_ps = np.asarray(time_ps, dtype=np.int64)
        channel = np.asarray(channel, dtype=np.uint8)
        setting = np.asarray(setting, dtype=np.uint8)
        order = np.argsort(time_ps, kind="stable")
        return cls(time_ps[order], channel[order], setting[order])

    @classmethod
    def empty(cls) -> "TagStream":
        return cls(
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.uint8),
            np.empty(0, dtype=np.uint8),
        )


@dataclass(frozen=True)
class ChannelConfig:
    """One quantum channel: propagation delay and total attenuation."""

    delay_s: float
    attenuation_db: float

    def __post_init__(self) -> None:
        if self.delay_s < 0:
            raise ConfigurationError("channel delay must be non-negative")
        if self.attenuation_db < 0:
            raise ConfigurationError("channel attenuation must be non-negative")

    @property
    def survival(self) -> float:
        return 10.0 ** (-self.attenuation_db / 10.0)


@dataclass(frozen=True)
class GatingConfig:
    """Analyzer switching gate: photons inside the discard window after a
    setting boundary are dropped (the modulator is still settling)."""

    rise_time_s: float = 15e-9
    discard_window_s: float = 35e-9
    toggle_rate_hz: float = 1e6

    def __post_init__(self) -> None:
        if self.rise_time_s < 0 or self.discard_window_s < 0:
            raise ConfigurationError("gating times must be non-negative")
        if self.discard_window_s < self.rise_time_s:
            raise ConfigurationError("discard window must cover the rise time")
        if self.toggle_rate_hz <= 0:
            raise ConfigurationError("gating toggle rate must be positive")

    @property
    def duty_cycle(self) -> float:
        return 1.0 - self.discard_window_s * self.toggle_rate_hz


class HiddenVariableMode(Enum):
    QUANTUM = "quantum"
    LOCAL_DETERMINISTIC = "local_deterministic"
    SETTING_AWARE_SOURCE = "setting_aware_source"
    SIGNALING = "signaling"


@dataclass(frozen=True)
class LhvStrategy:
    """Local response model: a mixture over hidden values of per-side
    response probabilities.  Columns index the setting bit.

    With both exploit flags off this is a valid local model (outcomes
    factorize and the hidden distribution ignores the settings), so its CHSH
    value cannot exceed 2.
    """

    weights: np.ndarray
    alice_plus: np.ndarray
    bob_plus: np.ndarray
    setting_dependent: bool = False
    signaling_speed_m_s: float | None = None
    name: str = "lhv"

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        alice = np.asarray(self.alice_plus, dtype=float)
        bob = np.asarray(self.bob_plus, dtype=float)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "alice_plus", alice)
        object.__setattr__(self, "bob_plus", bob)
        if weights.ndim != 1 or abs(weights.sum() - 1.0) > 1e-9 or weights.min() < 0:
            raise InputError("hidden-value weights must be a distribution")
        k = len(weights)
        if alice.shape != (k, 2) or bob.shape != (k, 2):
            raise InputError("response tables must have shape (n_hidden, 2)")
        for table in (alice, bob):
            if table.min() < 0 or table.max() > 1:
                raise InputError("response probabilities must lie in [0, 1]")

    def expected_correlation(self, a_bit: int, b_bit: int) -> float:
        ea = 2.0 * self.alice_plus[:, a_bit] - 1.0
        eb = 2.0 * self.bob_plus[:, b_bit] - 1.0
        return float(np.sum(self.weights * ea * eb))

    def expected_chsh(self) -> float:
        e = self.expected_correlation
        return abs(e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1))


def deterministic_strategy(a0: int, a1: int, b0: int, b1: int) -> LhvStrategy:
    """Deterministic local model: fixed +-1 outcome per setting."""
    for value in (a0, a1, b0, b1):
        if value not in (-1, 1):
            raise InputError("deterministic outcomes must be +1 or -1")
    to_prob = lambda v: (1.0 + v) / 2.0
    return LhvStrategy(
        weights=np.array([1.0]),
        alice_plus=np.array([[to_prob(a0), to_prob(a1)]]),
        bob_plus=np.array([[to_prob(b0), to_prob(b1)]]),
        name=f"det({a0:+d}{a1:+d}{b0:+d}{b1:+d})",
    )


def all_deterministic_strategies() -> tuple[LhvStrategy, ...]:
    """All 16 deterministic local strategies."""
    values = (-1, 1)
    return tuple(
        deterministic_strategy(a0, a1, b0, b1)
        for a0 in values for a1 in values for b0 in values for b1 in values
    )


def best_deterministic_strategy() -> LhvStrategy:
    """The deterministic strategy maximizing the CHSH value (reaches 2)."""
    return max(all_deterministic_strategies(), key=lambda s: s.expected_chsh())


def random_stochastic_strategy(seed: int, n_hidden: int = 8) -> LhvStrategy:
    """Random mixture of random local response functions."""
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(n_hidden))
    return LhvStrategy(
        weights=weights,
        alice_plus=rng.random((n_hidden, 2)),
        bob_plus=rng.random((n_hidden, 2)),
        name=f"stochastic(seed={seed})",
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulated experiment run."""

    name: str = "d"
    pair_rate_local_hz: float = 2.5e6
    alice_channel: ChannelConfig = field(
        default_factory=lambda: ChannelConfig(delay_s=29.6e-6, attenuation_db=20.0)
    )
    bob_channel: ChannelConfig = field(
        default_factory=lambda: ChannelConfig(delay_s=479e-6, attenuation_db=35.0)
    )
    coincidence_window_s: float = 1.5e-9
    dark_rate_alice_hz: float = 500.0
    dark_rate_bob_hz: float = 12_400.0
    source_visibility_hv: float = 0.99
    source_visibility_diag: float = 0.98
    analyzer_visibility: float = 0.99
    fiber_visibility: float = 0.97
    fiber_visibility_end: float | None = None
    alice_source: SettingSource = field(
        default_factory=lambda: SettingSource(QuantumToggle())
    )
    bob_source: SettingSource = field(
        default_factory=lambda: SettingSource(QuantumToggle())
    )
    gating: GatingConfig = field(default_factory=GatingConfig)
    geometry: ScenarioGeometry = field(default_factory=ScenarioGeometry)
    hidden_variable_mode: HiddenVariableMode = HiddenVariableMode.QUANTUM
    lhv_strategy: LhvStrategy | None = None
    signaling_speed_m_s: float | None = None
    run_duration_s: float = 2400.0

    def __post_init__(self) -> None:
        if self.pair_rate_local_hz < 0:
            raise ConfigurationError("pair rate must be non-negative")
        if self.coincidence_window_s <= 0:
            raise ConfigurationError("coincidence window must be positive")
        if self.dark_rate_alice_hz < 0 or self.dark_rate_bob_hz < 0:
            raise ConfigurationError("dark rates must be non-negative")
        for name in ("source_visibility_hv", "source_visibility_diag",
                     "analyzer_visibility", "fiber_visibility"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.fiber_visibility_end is not None and not 0.0 <= self.fiber_visibility_end <= 1.0:
            raise ConfigurationError("fiber_visibility_end must lie in [0, 1]")
        if self.run_duration_s < 0:
            raise ConfigurationError("run duration must be non-negative")
        if self.hidden_variable_mode is HiddenVariableMode.SIGNALING:
            speed = self.signaling_speed_m_s
            if speed is None or not 0 < speed <= C_M_PER_S:
                raise ConfigurationError(
                    "signaling mode needs a physical signal speed in (0, c]"
                )
        for side, source in (("alice", self.alice_source), ("bob", self.bob_source)):
            if not math.isclose(
                source.sample_rate_hz, self.gating.toggle_rate_hz, rel_tol=1e-9
            ):
                raise ConfigurationError(
                    f"{side} setting sample rate {source.sample_rate_hz:g} Hz "
                    f"differs from the gating toggle rate "
                    f"{self.gating.toggle_rate_hz:g} Hz"
                )

    @property
    def source_visibility_mean(self) -> float:
        return 0.5 * (self.source_visibility_hv + self.source_visibility_diag)

    @property
    def state_visibility(self) -> float:
        """Werner visibility of the effective optical state (start of run)."""
        return self.source_visibility_mean * self.analyzer_visibility * self.fiber_visibility

    def state_visibility_at(self, t_s: np.ndarray | float) -> np.ndarray | float:
        """State visibility including the optional linear fiber drift ramp."""
        if self.fiber_visibility_end is None or self.run_duration_s == 0:
            return self.state_visibility * np.ones_like(np.asarray(t_s, dtype=float))
        fiber = self.fiber_visibility + (
            self.fiber_visibility_end - self.fiber_visibility
        ) * np.asarray(t_s, dtype=float) / self.run_duration_s
        return self.source_visibility_mean * self.analyzer_visibility * fiber


@dataclass(frozen=True)
class RunResult:
    alice: TagStream
    bob: TagStream
    verdict: LoopholeVerdict
    events: list[SpacetimeEvent]
    config: ScenarioConfig
    seed: int


def emit_pairs(rate_hz: float, duration_s: float, seed: int) -> np.ndarray:
    """Homogeneous Poisson emission times, sorted, in seconds."""
    if rate_hz < 0 or duration_s < 0:
        raise InputError("rate and duration must be non-negative")
    return _poisson_times(np.random.default_rng(seed), rate_hz, duration_s)


def propagate(times_s: np.ndarray, channel: ChannelConfig, seed: int) -> np.ndarray:
    """Thin a photon stream by the channel attenuation and add its delay."""
    times_s = np.asarray(times_s, dtype=float)
    rng = np.random.default_rng(seed)
    survived = rng.random(len(times_s)) < channel.survival
    return times_s[survived] + channel.delay_s


def active_setting(
    stream: SettingStream, gating: GatingConfig, t_s: float
) -> tuple[int, bool]:
    """Setting bit active at time t and whether the detection is usable
    (outside the discard window after the interval boundary)."""
    interval = int(math.floor(t_s * stream.sample_rate_hz))
    if interval < 0 or interval >= len(stream.bits):
        raise InputError(f"time {t_s} s is outside the sampled setting stream")
    boundary = interval / stream.sample_rate_hz
    valid = (t_s - boundary) >= gating.discard_window_s
    return int(stream.bits[interval]), valid


def measure_pair(
    mode: HiddenVariableMode,
    state_or_strategy,
    a_bit: int,
    b_bit: int,
    seed: int,
    *,
    alice_angles_deg: tuple[float, float] = ALICE_ANGLES_DEG,
    bob_angles_deg: tuple[float, float] = BOB_ANGLES_DEG,
) -> tuple[int, int]:
    """Sample one pair of raw +-1 outcomes for the given setting bits.

    Quantum mode draws from the joint outcome distribution of the supplied
    density matrix at the angles the bits select; LHV modes draw a hidden
    value and then the two local responses.
    """
    rng = np.random.default_rng(seed)
    a_bits = np.array([a_bit])
    b_bits = np.array([b_bit])
    if mode is HiddenVariableMode.QUANTUM:
        probs = quantum.outcome_probabilities(
            state_or_strategy, alice_angles_deg[a_bit], bob_angles_deg[b_bit]
        ).reshape(-1)
        probs = np.clip(probs, 0.0, None)
        idx = int(rng.choice(4, p=probs / probs.sum()))
        return (1 if idx < 2 else -1, 1 if idx % 2 == 0 else -1)
    if mode is HiddenVariableMode.LOCAL_DETERMINISTIC:
        outcomes_a, outcomes_b = _sample_lhv_outcomes(
            state_or_strategy, a_bits, b_bits, rng
        )
        return int(outcomes_a[0]), int(outcomes_b[0])
    if mode in (HiddenVariableMode.SETTING_AWARE_SOURCE, HiddenVariableMode.SIGNALING):
        outcomes_a, outcomes_b = _sample_exploit_outcomes(a_bits, b_bits, rng)
        return int(outcomes_a[0]), int(outcomes_b[0])
    raise InputError(f"unknown hidden-variable mode {mode!r}")


def run_experiment(config: ScenarioConfig, seed: int) -> RunResult:
    """Full pipeline from emissions to two sorted, gated tag streams."""
    events = build_scenario_events(config.geometry)
    stochastic = config.alice_source.stochastic and config.bob_source.stochastic
    verdict = verdicts(events, stochastic, slack_s=config.geometry.slack_s)
    _enforce_exploit_gate(config, verdict, events)

    seeds = np.random.SeedSequence(seed).spawn(11)
    rngs = [np.random.default_rng(s) for s in seeds[:8]]
    (rng_joint_t, rng_joint_o, rng_a_t, rng_a_o,
     rng_b_t, rng_b_o, rng_a_dark, rng_b_dark) = rngs
    alice_setting_seed = int(seeds[8].generate_state(1, dtype=np.uint64)[0])
    bob_setting_seed = int(seeds[9].generate_state(1, dtype=np.uint64)[0])
    rng_lhv = np.random.default_rng(seeds[10])

    duration = config.run_duration_s
    rate = config.pair_rate_local_hz
    p_alice = config.alice_channel.survival
    p_bob = config.bob_channel.survival

    # Pairs where both photons survive: the only correlated population.
    emissions = _poisson_times(rng_joint_t, rate * p_alice * p_bob, duration)
    arrivals_a = emissions + config.alice_channel.delay_s
    arrivals_b = emissions + config.bob_channel.delay_s
    bits_a, valid_a = _settings_and_gate(
        config, "alice", arrivals_a, alice_setting_seed
    )
    bits_b, valid_b = _settings_and_gate(config, "bob", arrivals_b, bob_setting_seed)
    out_a, out_b = _sample_pair_outcomes(
        config, bits_a, bits_b, emissions, rng_joint_o, rng_lhv, events
    )

    # Lone survivors and dark counts carry fair-coin outcomes.
    alice_parts = [
        (arrivals_a[valid_a], out_a[valid_a], bits_a[valid_a]),
        _singles_block(config, "alice", rate * p_alice * (1.0 - p_bob),
                       config.alice_channel.delay_s, duration, rng_a_t, rng_a_o,
                       alice_setting_seed),
        _dark_block(config, "alice", 2.0 * config.dark_rate_alice_hz, duration,
                    rng_a_dark, alice_setting_seed),
    ]
    bob_parts = [
        (arrivals_b[valid_b], out_b[valid_b], bits_b[valid_b]),
        _singles_block(config, "bob", rate * p_bob * (1.0 - p_alice),
                       config.bob_channel.delay_s, duration, rng_b_t, rng_b_o,
                       bob_setting_seed),
        _dark_block(config, "bob", 2.0 * config.dark_rate_bob_hz, duration,
                    rng_b_dark, bob_setting_seed),
    ]

    alice = _merge_stream(alice_parts, side="alice")
    bob = _merge_stream(bob_parts, side="bob")
    return RunResult(alice=alice, bob=bob, verdict=verdict, events=events,
                     config=config, seed=seed)


# --- internals -------------------------------------------------------------


def _poisson_times(rng: np.random.Generator, rate_hz: float, duration_s: float) -> np.ndarray:
    if rate_hz <= 0 or duration_s <= 0:
        return np.empty(0)
    count = rng.poisson(rate_hz * duration_s)
    times = rng.uniform(0.0, duration_s, count)
    times.sort()
    return times


def _source_for(config: ScenarioConfig, side: str) -> SettingSource:
    return config.alice_source if side == "alice" else config.bob_source


def _settings_and_gate(
    config: ScenarioConfig, side: str, times_s: np.ndarray, setting_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Active setting bit and gate validity for each detection time."""
    source = _source_for(config, side)
    rate = source.sample_rate_hz
    intervals = np.floor(times_s * rate).astype(np.int64)
    bits = bits_at_intervals(source, intervals, setting_seed)
    valid = (times_s - intervals / rate) >= config.gating.discard_window_s
    return bits, valid


def _singlet_outcome_cdf() -> np.ndarray:
    """Per setting combination, the outcome distribution of the pure singlet
    at the bit-selected angles; rows indexed by a_bit * 2 + b_bit, columns by
    outcome (+,+), (+,-), (-,+), (-,-)."""
    table = np.empty((4, 4))
    pure = quantum.singlet()
    for a_bit in (0, 1):
        for b_bit in (0, 1):
            probs = quantum.outcome_probabilities(
                pure, ALICE_ANGLES_DEG[a_bit], BOB_ANGLES_DEG[b_bit]
            )
            table[a_bit * 2 + b_bit] = probs.reshape(-1)
    return table


_SINGLET_OUTCOME_TABLE = _singlet_outcome_cdf()


def _sample_pair_outcomes(
    config: ScenarioConfig,
    a_bits: np.ndarray,
    b_bits: np.ndarray,
    emission_times_s: np.ndarray,
    rng: np.random.Generator,
    rng_lhv: np.random.Generator,
    events: list[SpacetimeEvent],
) -> tuple[np.ndarray, np.ndarray]:
    """Raw +-1 outcome pairs for jointly surviving pairs."""
    n = len(a_bits)
    mode = config.hidden_variable_mode
    if mode is HiddenVariableMode.QUANTUM:
        visibility = np.asarray(config.state_visibility_at(emission_times_s))
        combo = a_bits.astype(np.int64) * 2 + b_bits
        probs = (
            visibility[:, None] * _SINGLET_OUTCOME_TABLE[combo]
            + (1.0 - visibility[:, None]) * 0.25
        )
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(n)
        idx = (u[:, None] > cdf).sum(axis=1)
        np.clip(idx, 0, 3, out=idx)
        out_a = np.where(idx < 2, 1, -1).astype(np.int8)
        out_b = np.where(idx % 2 == 0, 1, -1).astype(np.int8)
        return out_a, out_b
    if mode is HiddenVariableMode.LOCAL_DETERMINISTIC:
        strategy = config.lhv_strategy or best_deterministic_strategy()
        return _sample_lhv_outcomes(strategy, a_bits, b_bits, rng, rng_lhv)
    if mode is HiddenVariableMode.SETTING_AWARE_SOURCE:
        return _sample_exploit_outcomes(a_bits, b_bits, rng)
    if mode is HiddenVariableMode.SIGNALING:
        _require_signal_path(config, events)
        return _sample_exploit_outcomes(a_bits, b_bits, rng)
    raise ConfigurationError(f"unknown hidden-variable mode {mode!r}")


def _sample_lhv_outcomes(
    strategy: LhvStrategy,
    a_bits: np.ndarray,
    b_bits: np.ndarray,
    rng: np.random.Generator,
    rng_lhv: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(strategy, LhvStrategy):
        raise InputError("local-deterministic mode needs an LhvStrategy")
    rng_lambda = rng_lhv if rng_lhv is not None else rng
    n = len(a_bits)
    hidden = rng_lambda.choice(len(strategy.weights), size=n, p=strategy.weights)
    p_a = strategy.alice_plus[hidden, a_bits]
    p_b = strategy.bob_plus[hidden, b_bits]
    out_a = np.where(rng.random(n) < p_a, 1, -1).astype(np.int8)
    out_b = np.where(rng.random(n) < p_b, 1, -1).astype(np.int8)
    return out_a, out_b


def _sample_exploit_outcomes(
    a_bits: np.ndarray, b_bits: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes of a source that knows both settings: every CHSH term is
    saturated after port relabeling, so the long-run value approaches 4."""
    n = len(a_bits)
    out_a = (1 - 2 * rng.integers(0, 2, n)).astype(np.int8)
    reported_target = _chsh_sign(a_bits, b_bits)
    flip_product = (_alice_port_sign(a_bits) * _BOB_PORT_SIGN).astype(np.int8)
    out_b = (out_a * reported_target * flip_product).astype(np.int8)
    return out_a, out_b


def _enforce_exploit_gate(
    config: ScenarioConfig, verdict: LoopholeVerdict, events: list[SpacetimeEvent]
) -> None:
    mode = config.hidden_variable_mode
    if mode is HiddenVariableMode.SETTING_AWARE_SOURCE and verdict.freedom_closed:
        raise CausalityViolationError(
            "a setting-aware source needs the freedom-of-choice loophole open, "
            "but this geometry closes it"
        )
    if mode is HiddenVariableMode.SIGNALING:
        if verdict.locality_closed:
            raise CausalityViolationError(
                "signaling between the stations needs the locality loophole "
                "open, but this geometry closes it"
            )
        _require_signal_path(config, events)
    strategy = config.lhv_strategy
    if strategy is not None and strategy.setting_dependent and verdict.freedom_closed:
        raise CausalityViolationError(
            "a setting-dependent hidden-variable distribution needs the "
            "freedom-of-choice loophole open, but this geometry closes it"
        )


def _require_signal_path(config: ScenarioConfig, events: list[SpacetimeEvent]) -> None:
    """A signaling exploit must physically connect one side's choice to the
    other side's measurement at the configured speed."""
    speed = config.signaling_speed_m_s
    by_label = {e.label: e for e in events}
    pairs = (
        (by_label[LABEL_CHOICE_A], by_label[LABEL_MEASUREMENT_B]),
        (by_label[LABEL_CHOICE_B], by_label[LABEL_MEASUREMENT_A]),
    )
    for choice, measurement in pairs:
        dt = measurement.t - choice.t
        if dt > 0 and abs(measurement.x - choice.x) <= speed * dt:
            return
    raise ConfigurationError(
        f"a signal at {speed:.3g} m/s cannot reach either remote measurement "
        "from the opposite setting choice in this geometry"
    )


def _marginal_outcomes(
    config: ScenarioConfig, side: str, bits: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Outcomes for photons whose partner was lost.

    The reduced state of either photon is maximally mixed for every mode
    used here, so lone detections are fair coins; LHV strategies use their
    per-side marginal response instead.
    """
    n = len(bits)
    mode = config.hidden_variable_mode
    if mode is HiddenVariableMode.LOCAL_DETERMINISTIC:
        strategy = config.lhv_strategy or best_deterministic_strategy()
        hidden = rng.choice(len(strategy.weights), size=n, p=strategy.weights)
        table = strategy.alice_plus if side == "alice" else strategy.bob_plus
        p_plus = table[hidden, bits]
        return np.where(rng.random(n) < p_plus, 1, -1).astype(np.int8)
    return (1 - 2 * rng.integers(0, 2, n)).astype(np.int8)


def _singles_block(
    config: ScenarioConfig, side: str, rate_hz: float, delay_s: float,
    duration_s: float, rng_t: np.random.Generator, rng_o: np.random.Generator,
    setting_seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = _poisson_times(rng_t, rate_hz, duration_s) + delay_s
    bits, valid = _settings_and_gate(config, side, times, setting_seed)
    times, bits = times[valid], bits[valid]
    outcomes = _marginal_outcomes(config, side, bits, rng_o)
    return times, outcomes, bits


def _dark_block(
    config: ScenarioConfig, side: str, rate_hz: float, duration_s: float,
    rng: np.random.Generator, setting_seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = _poisson_times(rng, rate_hz, duration_s)
    bits, valid = _settings_and_gate(config, side, times, setting_seed)
    times, bits = times[valid], bits[valid]
    outcomes = (1 - 2 * rng.integers(0, 2, len(times))).astype(np.int8)
    return times, outcomes, bits


def _merge_stream(
    parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]], side: str
) -> TagStream:
    """Concatenate (times, raw outcomes, bits), relabel ports, sort, and
    quantize to picoseconds."""
    times = np.concatenate([p[0] for p in parts])
    outcomes = np.concatenate([p[1] for p in parts]).astype(np.int8)
    bits = np.concatenate([p[2] for p in parts]).astype(np.uint8)
    if side == "alice":
        reported = outcomes * _alice_port_sign(bits)
    else:
        reported = outcomes * _BOB_PORT_SIGN
    channel = (reported < 0).astype(np.uint8)
    time_ps = np.round(times * PS_PER_S).astype(np.int64)
    order = np.argsort(time_ps, kind="stable")
    return TagStream(time_ps[order], channel[order], bits[order])
