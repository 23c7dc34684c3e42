"""Coincidence analysis of two time-tag streams.

Offset discovery builds a cross-correlation histogram of pairwise time
differences, drift compensation re-estimates the offset per time block, and
matching runs a greedy two-pointer sweep: Bob tags are processed in time
order and each takes the nearest still-unmatched Alice tag within the
window, ties breaking toward the earlier Alice tag.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InputError, InsufficientDataError, NoSignalError
from .photonsim import ALICE_ANGLES_DEG, BOB_ANGLES_DEG, TagStream

PS_PER_S = 1e12

DEFAULT_WINDOW_S = 1.5e-9
DEFAULT_SEARCH_RANGE_S = 2.5e-3
DEFAULT_BIN_WIDTH_S = 1e-9

# Cap on enumerated candidate pairs during offset discovery; a contiguous
# prefix of the second stream is used when the full product would exceed it.
_MAX_SEARCH_PAIRS = 30_000_000


@dataclass(frozen=True)
class CoincidenceSet:
    """Matched pairs plus per-setting outcome tallies.

    ``tallies[a_bit, b_bit, i, j]`` counts pairs with Alice outcome index i
    and Bob outcome index j (0 means +1, the transmitted port).
    """

    alice_indices: np.ndarray
    bob_indices: np.ndarray
    tallies: np.ndarray
    total: int
    estimated_accidentals: float

    def __post_init__(self) -> None:
        if int(self.tallies.sum()) != self.total:
            raise InputError("tallies do not sum to the total pair count")


@dataclass(frozen=True)
class BellEstimate:
    """Four correlations with uncertainties and the CHSH combination.

    ``correlations[a_bit, b_bit]`` uses the multinomial estimate
    (N++ + N-- - N+- - N-+)/N; its standard error is sqrt((1-E^2)/N).
    The CHSH sum carries a minus sign on the (1, 1) combination and is
    reported as an absolute value.
    """

    correlations: np.ndarray
    sigmas: np.ndarray
    counts: np.ndarray
    s_value: float
    sigma_s: float
    sigma_above_2: float

    def rows(self) -> list[tuple[float, float, float, float, int]]:
        """Report rows (a_deg, b_deg, E, sigma, n) ordered by the label grid."""
        out = []
        for b_bit in (0, 1):
            for a_bit in (0, 1):
                out.append(
                    (
                        BOB_ANGLES_DEG[b_bit],
                        ALICE_ANGLES_DEG[a_bit],
                        float(self.correlations[a_bit, b_bit]),
                        float(self.sigmas[a_bit, b_bit]),
                        int(self.counts[a_bit, b_bit]),
                    )
                )
        return out


@dataclass(frozen=True)
class DriftDiagnostics:
    block_starts_ps: np.ndarray
    corrections_ps: np.ndarray
    pair_counts: np.ndarray
    clamped: np.ndarray
    low_statistics: np.ndarray


def _window_pair_diffs(
    a_times: np.ndarray, b_times: np.ndarray, lo_ps: int, hi_ps: int
) -> np.ndarray:
    """All differences b - a with values in [lo_ps, hi_ps], flattened."""
    left = np.searchsorted(a_times, b_times - hi_ps)
    right = np.searchsorted(a_times, b_times - lo_ps)
    counts = right - left
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(left, counts)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(
        np.concatenate(([0], np.cumsum(counts)[:-1])), counts
    )
    a_idx = starts + offsets
    return np.repeat(b_times, counts) - a_times[a_idx]


def _peak_threshold(histogram: np.ndarray, peak_bin: int, min_peak_sigma: float) -> float:
    """Count a peak must reach to be significant against the noise floor.

    Combines the requested sigma level with a multiple-comparisons bound:
    searching millions of bins makes large Poisson excursions routine, so
    the exact Poisson tail at a family-wise error of 1e-3 is also enforced.
    """
    from scipy import stats

    mask = np.ones(len(histogram), dtype=bool)
    mask[max(peak_bin - 2, 0): peak_bin + 3] = False
    noise = histogram[mask]
    mu = float(noise.mean()) if noise.size else 0.0
    sigma = max(float(noise.std()), math.sqrt(max(mu, 0.0)), 1.0)
    n_bins = max(len(histogram), 2)
    gaussian = mu + min_peak_sigma * sigma
    poisson_tail = float(stats.poisson.isf(1e-3 / n_bins, max(mu, 1e-3))) + 1.0
    return max(gaussian, poisson_tail)


def find_offset(
    alice: TagStream,
    bob: TagStream,
    search_range_s: float = DEFAULT_SEARCH_RANGE_S,
    bin_width_s: float = DEFAULT_BIN_WIDTH_S,
    *,
    min_peak_sigma: float = 5.0,
) -> int:
    """Clock offset (bob minus alice, picoseconds) of the correlation peak.

    Pair differences are accumulated into the histogram chunk by chunk and
    the scan stops as soon as the peak is significant, so long runs with a
    strong correlation are cheap while weak signals use up to the full
    pair budget.  Raises NoSignalError when no significant peak emerges.
    """
    if len(alice) == 0 or len(bob) == 0:
        raise InputError("cannot search for an offset with an empty stream")
    range_ps = int(round(search_range_s * PS_PER_S))
    bin_ps = max(1, int(round(bin_width_s * PS_PER_S)))
    a_times = alice.time_ps
    b_times = bob.time_ps

    # Candidate density from a prefix sample sets the tag chunk size.
    probe = b_times[: min(len(b_times), 10_000)]
    probe_pairs = int(
        (np.searchsorted(a_times, probe + range_ps)
         - np.searchsorted(a_times, probe - range_ps)).sum()
    )
    density = max(probe_pairs / len(probe), 1e-6)
    chunk_tags = max(int(5_000_000 / density), 1_000)

    n_bins = 2 * range_ps // bin_ps + 1
    histogram = np.zeros(n_bins, dtype=np.int64)
    start = 0
    processed = 0
    peak_bin = 0
    threshold = math.inf
    while start < len(b_times):
        stop = min(start + chunk_tags, len(b_times))
        diffs = _window_pair_diffs(a_times, b_times[start:stop], -range_ps, range_ps)
        if diffs.size:
            histogram += np.bincount((diffs + range_ps) // bin_ps, minlength=n_bins)
        processed += int(diffs.size)
        start = stop
        peak_bin = int(np.argmax(histogram))
        threshold = _peak_threshold(histogram, peak_bin, min_peak_sigma)
        if histogram[peak_bin] >= threshold or processed >= _MAX_SEARCH_PAIRS:
            break

    if histogram[peak_bin] == 0:
        raise NoSignalError("no candidate pairs inside the search range")
    if histogram[peak_bin] < threshold:
        raise NoSignalError(
            f"largest histogram bin ({int(histogram[peak_bin])}) is below the "
            f"significance threshold ({threshold:.1f})"
        )
    # Refine inside the peak band over the scanned prefix, then once more
    # tightly around the first-pass mean to shed the uniform background.
    lo = -range_ps + (peak_bin - 1) * bin_ps
    hi = -range_ps + (peak_bin + 2) * bin_ps - 1
    peak_diffs = _window_pair_diffs(a_times, b_times[:start], lo, hi)
    if peak_diffs.size == 0:
        raise NoSignalError("correlation peak vanished during refinement")
    center = float(peak_diffs.mean())
    tight = peak_diffs[np.abs(peak_diffs - center) <= bin_ps / 2]
    if tight.size:
        center = float(tight.mean())
    return int(round(center))


@njit(cache=True)
def _greedy_match(a_times, b_shifted, half_window_ps):  # pragma: no cover
    n_a = len(a_times)
    n_b = len(b_shifted)
    out = np.full(n_b, -1, dtype=np.int64)
    claimed = np.zeros(n_a, dtype=np.bool_)
    lo = 0
    for j in range(n_b):
        t = b_shifted[j]
        while lo < n_a and a_times[lo] < t - half_window_ps:
            lo += 1
        best = -1
        best_d = half_window_ps + 1
        i = lo
        while i < n_a and a_times[i] <= t + half_window_ps:
            if not claimed[i]:
                d = a_times[i] - t
                if d < 0:
                    d = -d
                if d < best_d:
                    best_d = d
                    best = i
            i += 1
        if best >= 0:
            claimed[best] = True
            out[j] = best
    return out


def match(
    alice: TagStream,
    bob: TagStream,
    offset_ps: int,
    window_s: float = DEFAULT_WINDOW_S,
) -> CoincidenceSet:
    """Pair the two streams with a greedy sweep at the given offset.

    The window is the total width: a pair requires
    ``|t_bob - t_alice - offset| <= window / 2``.
    """
    half_ps = int(round(window_s * PS_PER_S / 2.0))
    shifted = bob.time_ps - np.int64(offset_ps)
    matched = _greedy_match(alice.time_ps, shifted, np.int64(half_ps))
    bob_idx = np.nonzero(matched >= 0)[0]
    alice_idx = matched[bob_idx]

    a_bits = alice.setting[alice_idx].astype(np.int64)
    b_bits = bob.setting[bob_idx].astype(np.int64)
    a_out = alice.channel[alice_idx].astype(np.int64)
    b_out = bob.channel[bob_idx].astype(np.int64)
    combined = ((a_bits << 3) | (b_bits << 2) | (a_out << 1) | b_out)
    tallies = np.bincount(combined, minlength=16).reshape(2, 2, 2, 2)

    acc = _estimate_accidentals(alice, bob, window_s)
    return CoincidenceSet(
        alice_indices=alice_idx,
        bob_indices=bob_idx,
        tallies=tallies,
        total=int(len(bob_idx)),
        estimated_accidentals=acc,
    )


def _estimate_accidentals(alice: TagStream, bob: TagStream, window_s: float) -> float:
    """Expected accidental pairs from the singles rates and the window."""
    if len(alice) < 2 or len(bob) < 2:
        return 0.0
    span_a = (alice.time_ps[-1] - alice.time_ps[0]) / PS_PER_S
    span_b = (bob.time_ps[-1] - bob.time_ps[0]) / PS_PER_S
    if span_a <= 0 or span_b <= 0:
        return 0.0
    overlap = min(span_a, span_b)
    rate_a = len(alice) / span_a
    rate_b = len(bob) / span_b
    return accidental_rate(rate_a, rate_b, window_s) * overlap


def accidental_rate(singles_a_hz: float, singles_b_hz: float, window_s: float) -> float:
    """Accidental coincidence rate of two uncorrelated streams."""
    return singles_a_hz * singles_b_hz * window_s


def compensate_drift(
    tags: TagStream,
    reference: TagStream,
    max_drift_s: float = 10e-9,
    block_s: float = 60.0,
    *,
    offset_ps: int | None = None,
) -> tuple[TagStream, DriftDiagnostics]:
    """Remove slow clock drift of ``tags`` against ``reference``.

    The pair offset is re-estimated for each block of ``block_s`` from the
    correlation peak of candidate pairs near the global offset, and the
    per-block corrections are applied as a piecewise-linear function of
    time anchored at the block centroids (a block-constant correction
    would leave a sawtooth residual of half the per-block drift).
    Corrections beyond ``max_drift_s`` are clamped and flagged.
    """
    if len(tags) == 0 or len(reference) == 0:
        return tags, DriftDiagnostics(
            np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64),
            np.empty(0, bool), np.empty(0, bool),
        )
    if offset_ps is None:
        offset_ps = find_offset(reference, tags)
    max_drift_ps = int(round(max_drift_s * PS_PER_S))
    block_ps = int(round(block_s * PS_PER_S))
    # Search wide enough that an out-of-spec drift is still found (and then
    # clamped) rather than silently lost.
    search_ps = 3 * max_drift_ps + 2_000

    t0 = int(tags.time_ps[0])
    block_index = (tags.time_ps - t0) // block_ps
    n_blocks = int(block_index[-1]) + 1
    corrections = np.zeros(n_blocks, dtype=np.int64)
    centroids = (t0 + (np.arange(n_blocks, dtype=np.int64) * block_ps)
                 + block_ps // 2).astype(np.float64)
    counts = np.zeros(n_blocks, dtype=np.int64)
    clamped = np.zeros(n_blocks, dtype=bool)
    low_stats = np.zeros(n_blocks, dtype=bool)

    boundaries = np.searchsorted(block_index, np.arange(n_blocks + 1))
    for b in range(n_blocks):
        chunk = tags.time_ps[boundaries[b]: boundaries[b + 1]]
        if len(chunk) == 0:
            low_stats[b] = True
            continue
        # The block offset needs only a statistical sample of the pairs.
        if len(chunk) > 200_000:
            chunk = chunk[:: len(chunk) // 200_000 + 1]
        # Pre-slice the reference to the block's reach so each block costs
        # O(block) instead of O(full reference).
        ref_lo = np.searchsorted(
            reference.time_ps, chunk[0] - offset_ps - 2 * search_ps
        )
        ref_hi = np.searchsorted(
            reference.time_ps, chunk[-1] - offset_ps + 2 * search_ps
        )
        reference_slice = reference.time_ps[ref_lo:ref_hi]
        if len(reference_slice) == 0:
            low_stats[b] = True
            continue
        diffs = _window_pair_diffs(
            reference_slice, chunk, offset_ps - search_ps, offset_ps + search_ps
        )
        counts[b] = len(diffs)
        if len(diffs) < 5:
            low_stats[b] = True
            continue
        # Accidentals can outnumber true pairs inside the search band, so
        # locate the block's pair peak with a fine histogram and average
        # only the differences near it.
        rel = diffs - (offset_ps - search_ps)
        bin_ps = 500
        histogram = np.bincount(rel // bin_ps, minlength=2 * search_ps // bin_ps + 1)
        peak = int(np.argmax(histogram))
        near_peak = np.abs(rel // bin_ps - peak) <= 1
        correction = int(round(float(diffs[near_peak].mean()))) - offset_ps
        centroids[b] = float(chunk.mean())
        if abs(correction) > max_drift_ps:
            clamped[b] = True
            correction = int(np.sign(correction)) * max_drift_ps
        corrections[b] = correction

    if clamped.any():
        warnings.warn(
            f"{int(clamped.sum())} drift block(s) exceeded the "
            f"{max_drift_s * 1e9:.0f} ns bound and were clamped",
            stacklevel=2,
        )

    usable = ~low_stats
    if usable.any():
        applied = np.interp(
            tags.time_ps.astype(np.float64),
            centroids[usable],
            corrections[usable].astype(np.float64),
        )
        new_times = tags.time_ps - np.round(applied).astype(np.int64)
    else:
        new_times = tags.time_ps
    corrected = TagStream.from_arrays(new_times, tags.channel, tags.setting)
    block_starts = t0 + np.arange(n_blocks, dtype=np.int64) * block_ps
    return corrected, DriftDiagnostics(
        block_starts_ps=block_starts,
        corrections_ps=corrections,
        pair_counts=counts,
        clamped=clamped,
        low_statistics=low_stats,
    )


def estimate(coincidences: CoincidenceSet) -> BellEstimate:
    """Correlations, their multinomial errors and the CHSH combination."""
    tallies = coincidences.tallies
    counts = tallies.sum(axis=(2, 3))
    correlations = np.zeros((2, 2))
    sigmas = np.zeros((2, 2))
    for a_bit in (0, 1):
        for b_bit in (0, 1):
            n = counts[a_bit, b_bit]
            if n == 0:
                raise InsufficientDataError(
                    f"setting combination (a={BOB_ANGLES_DEG[b_bit]:g} deg, "
                    f"b={ALICE_ANGLES_DEG[a_bit]:g} deg) has no coincidences"
                )
            t = tallies[a_bit, b_bit]
            e = (t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0]) / n
            correlations[a_bit, b_bit] = e
            sigmas[a_bit, b_bit] = math.sqrt(max(1.0 - e * e, 0.0) / n)
    s_signed = (
        correlations[0, 0] + correlations[1, 0]
        + correlations[0, 1] - correlations[1, 1]
    )
    s_value = abs(s_signed)
    sigma_s = float(np.sqrt((sigmas ** 2).sum()))
    sigma_above = (s_value - 2.0) / sigma_s if sigma_s > 0 else math.inf
    return BellEstimate(
        correlations=correlations,
        sigmas=sigmas,
        counts=counts,
        s_value=float(s_value),
        sigma_s=sigma_s,
        sigma_above_2=float(sigma_above),
    )


@dataclass(frozen=True)
class AnalysisResult:
    estimate: BellEstimate
    coincidences: CoincidenceSet
    offset_ps: int
    drift: DriftDiagnostics | None


def analyze_streams(
    alice: TagStream,
    bob: TagStream,
    *,
    window_s: float = DEFAULT_WINDOW_S,
    search_range_s: float = DEFAULT_SEARCH_RANGE_S,
    bin_width_s: float = DEFAULT_BIN_WIDTH_S,
    compensate: bool = True,
    drift_block_s: float = 60.0,
    max_drift_s: float = 10e-9,
) -> AnalysisResult:
    """Offset discovery, optional drift compensation, matching, estimation."""
    offset = find_offset(alice, bob, search_range_s, bin_width_s)
    drift = None
    corrected = bob
    if compensate:
        corrected, drift = compensate_drift(
            bob, alice, max_drift_s, drift_block_s, offset_ps=offset
        )
    coincidences = match(alice, corrected, offset, window_s)
    bell = estimate(coincidences)
    return AnalysisResult(
        estimate=bell, coincidences=coincidences, offset_ps=offset, drift=drift
    )


def delta_histogram(
    alice: TagStream,
    bob: TagStream,
    offset_ps: int,
    span_s: float = 100e-9,
    bin_width_s: float = 0.5e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of arrival-time differences around the offset, for plotting.

    Returns (bin centers in ps relative to the offset, counts).
    """
    span_ps = int(round(span_s * PS_PER_S))
    bin_ps = max(1, int(round(bin_width_s * PS_PER_S)))
    diffs = _window_pair_diffs(
        alice.time_ps, bob.time_ps, offset_ps - span_ps, offset_ps + span_ps
    )
    rel = diffs - offset_ps
    bins = (rel + span_ps) // bin_ps
    n_bins = 2 * span_ps // bin_ps + 1
    histogram = np.bincount(bins, minlength=n_bins)
    centers = np.arange(n_bins) * bin_ps - span_ps + bin_ps // 2
    return centers, histogram
