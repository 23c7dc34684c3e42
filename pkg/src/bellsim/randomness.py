"""Setting-choice sources: quantum toggle, function generator, fixed lists.

The quantum source is a symmetric two-state continuous-time Markov chain
(a flip-flop toggled by beam-splitter detection events).  Sampling it at a
fixed rate gives a two-state discrete Markov chain with flip probability
``(1 - exp(-2 R tau)) / 2`` per step, which is what ``sample_settings``
implements; at the default 30 MHz toggle rate and 1 MHz sampling the bits
are fair coins to within 1e-26.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InputError

DEFAULT_TOGGLE_RATE_HZ = 30e6
DEFAULT_SAMPLE_RATE_HZ = 1e6

# Below this deviation of the per-step flip probability from 1/2 the sampled
# chain is indistinguishable from independent fair coins in float64, and
# random access through a counter-based hash becomes exact.
_IID_FLIP_EPS = 1e-15


@dataclass(frozen=True)
class QuantumToggle:
    """Flip-flop driven by beam-splitter detections; stochastic by assumption."""

    toggle_rate_hz: float = DEFAULT_TOGGLE_RATE_HZ

    def __post_init__(self) -> None:
        if self.toggle_rate_hz <= 0:
            raise InputError("toggle rate must be positive")


@dataclass(frozen=True)
class Periodic:
    """Function generator: deterministic square wave, phase in cycles."""

    frequency_hz: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.frequency_hz <= 0:
            raise InputError("frequency must be positive")


@dataclass(frozen=True)
class Predetermined:
    """Fixed bit list; deterministic and exhaustible."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise InputError("predetermined bits must be 0 or 1")


SettingMode = Union[QuantumToggle, Periodic, Predetermined]


@dataclass(frozen=True)
class SettingSource:
    mode: SettingMode
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise InputError("sample rate must be positive")
        if isinstance(self.mode, QuantumToggle):
            ratio = self.mode.toggle_rate_hz / self.sample_rate_hz
            if ratio < 10:
                warnings.warn(
                    f"toggle rate is only {ratio:.1f}x the sample rate; "
                    "sampled bits will be correlated",
                    stacklevel=2,
                )

    @property
    def stochastic(self) -> bool:
        return isinstance(self.mode, QuantumToggle)


@dataclass(frozen=True)
class SettingStream:
    """Sampled bits with their timestamps (uniform spacing)."""

    bits: np.ndarray
    timestamps: np.ndarray
    stochastic: bool
    sample_rate_hz: float

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class ToggleTrajectory:
    """State changes of the flip-flop: times and the state after each change."""

    initial_state: int
    change_times: np.ndarray
    states: np.ndarray
    duration_s: float

    def state_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.change_times, t, side="right"))
        return self.initial_state if idx == 0 else int(self.states[idx - 1])


def toggle_process(toggle_rate_hz: float, duration_s: float, seed: int) -> ToggleTrajectory:
    """Simulate the flip-flop: exponential holding times at the toggle rate
    in each direction, starting from the stationary distribution."""
    if toggle_rate_hz <= 0:
        raise InputError("toggle rate must be positive")
    if duration_s < 0:
        raise InputError("duration must be non-negative")
    rng = np.random.default_rng(seed)
    initial = int(rng.integers(0, 2))
    if duration_s == 0:
        empty = np.empty(0)
        return ToggleTrajectory(initial, empty, empty.astype(np.int8), 0.0)

    mean = toggle_rate_hz * duration_s
    chunks: list[np.ndarray] = []
    total = 0.0
    while total <= duration_s:
        n = int(mean + 6 * math.sqrt(mean + 1)) + 16
        gaps = rng.exponential(1.0 / toggle_rate_hz, n)
        chunk = total + np.cumsum(gaps)
        chunks.append(chunk)
        total = float(chunk[-1])
    times = np.concatenate(chunks)
    times = times[times <= duration_s]
    states = (initial + 1 + np.arange(len(times))) % 2
    return ToggleTrajectory(initial, times, states.astype(np.int8), duration_s)


def _flip_probability(toggle_rate_hz: float, sample_period_s: float) -> float:
    return 0.5 * (1.0 - math.exp(-2.0 * toggle_rate_hz * sample_period_s))


def _hash_bits(indices: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic fair bit per interval index (splitmix64 finalizer)."""
    with np.errstate(over="ignore"):
        x = indices.astype(np.uint64) + np.uint64((seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return (x & np.uint64(1)).astype(np.uint8)


def _markov_bits(n: int, flip_prob: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    first = rng.integers(0, 2, dtype=np.uint8)
    flips = (rng.random(max(n - 1, 0)) < flip_prob).astype(np.uint8)
    bits = np.empty(n, dtype=np.uint8)
    bits[0] = first
    if n > 1:
        bits[1:] = (first + np.cumsum(flips)) % 2
    return bits


def bits_at_intervals(source: SettingSource, indices: np.ndarray, seed: int) -> np.ndarray:
    """Setting bit for each sampling-interval index, random access.

    Quantum sources in the fast-toggle regime are served by a counter-based
    hash so arbitrarily late intervals cost O(1); slower toggles materialize
    the Markov chain up to the largest requested index.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and indices.min() < 0:
        raise InputError("interval indices must be non-negative")
    mode = source.mode
    if isinstance(mode, QuantumToggle):
        p = _flip_probability(mode.toggle_rate_hz, 1.0 / source.sample_rate_hz)
        if 0.5 - p < _IID_FLIP_EPS:
            return _hash_bits(indices, seed)
        if indices.size == 0:
            return np.empty(0, dtype=np.uint8)
        chain = _markov_bits(int(indices.max()) + 1, p, seed)
        return chain[indices]
    if isinstance(mode, Periodic):
        t = indices / source.sample_rate_hz
        return (np.floor(t * mode.frequency_hz + mode.phase).astype(np.int64) % 2).astype(np.uint8)
    if isinstance(mode, Predetermined):
        if indices.size and indices.max() >= len(mode.bits):
            raise InputError(
                f"predetermined bit list exhausted: need index {int(indices.max())}, "
                f"have {len(mode.bits)} bits"
            )
        table = np.asarray(mode.bits, dtype=np.uint8)
        return table[indices] if indices.size else np.empty(0, dtype=np.uint8)
    raise InputError(f"unknown setting mode {mode!r}")


def sample_settings(source: SettingSource, duration_s: float, seed: int) -> SettingStream:
    """Sample the source at its sample rate for the given duration."""
    if duration_s < 0:
        raise InputError("duration must be non-negative")
    n = int(math.floor(duration_s * source.sample_rate_hz))
    indices = np.arange(n, dtype=np.int64)
    mode = source.mode
    if isinstance(mode, QuantumToggle):
        p = _flip_probability(mode.toggle_rate_hz, 1.0 / source.sample_rate_hz)
        if 0.5 - p < _IID_FLIP_EPS:
            bits = _hash_bits(indices, seed)
        else:
            bits = _markov_bits(n, p, seed) if n else np.empty(0, dtype=np.uint8)
    else:
        bits = bits_at_intervals(source, indices, seed)
    timestamps = indices / source.sample_rate_hz
    return SettingStream(
        bits=bits,
        timestamps=timestamps,
        stochastic=source.stochastic,
        sample_rate_hz=source.sample_rate_hz,
    )


def autocorrelation(bits: np.ndarray, lag: int) -> float:
    """Sample Pearson correlation of a bit sequence with its lagged self.

    Returns NaN for a constant sequence (zero variance is undefined).
    """
    bits = np.asarray(bits, dtype=float)
    if lag < 0:
        raise InputError("lag must be non-negative")
    if lag >= len(bits):
        raise InputError(f"lag {lag} is not below the sequence length {len(bits)}")
    if lag == 0:
        if np.var(bits) == 0:
            return float("nan")
        return 1.0
    head = bits[:-lag]
    tail = bits[lag:]
    if np.var(head) == 0 or np.var(tail) == 0:
        return float("nan")
    return float(np.corrcoef(head, tail)[0, 1])


def autocorrelation_time(toggle_rate_hz: float) -> float:
    """1 / (2 R): decay time of the flip-flop state autocovariance."""
    if toggle_rate_hz <= 0:
        raise InputError("toggle rate must be positive")
    return 1.0 / (2.0 * toggle_rate_hz)


def write_bit_file(stream: SettingStream, path: str | Path) -> None:
    """One byte per bit (0x00 / 0x01), for external randomness test suites."""
    np.asarray(stream.bits, dtype=np.uint8).tofile(str(path))
