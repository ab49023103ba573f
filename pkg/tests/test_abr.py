import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swipesim.abr import (
    PlannedChunk,
    QoeWeights,
    ThroughputEstimator,
    assignment_qoe,
    harmonic_mean,
    select_bitrates,
)
from swipesim.domain import BitrateLadder, ChunkId, CompletedDownload
from swipesim.rebuffer import curve_from_watchcount
from swipesim.swipes import WatchCountDistribution


def dl(mbps, k=0):
    """A completed download with the given average rate."""
    size = 1_000_000
    secs = size * 8.0 / (mbps * 1e6)
    return CompletedDownload(ChunkId(1, 1), 0, size, 10.0 * k, 10.0 * k + secs)


class TestHarmonicMean:
    def test_constant(self):
        assert harmonic_mean([1.0] * 5) == pytest.approx(1.0)

    def test_two_values(self):
        assert harmonic_mean([1.0, 2.0]) == pytest.approx(4.0 / 3.0)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            harmonic_mean([])

    @given(
        xs=st.lists(
            st.floats(min_value=0.01, max_value=100.0), min_size=1, max_size=8
        )
    )
    def test_at_most_arithmetic_mean(self, xs):
        hm = harmonic_mean(xs)
        am = math.fsum(xs) / len(xs)
        assert hm <= am + 1e-9
        if max(xs) - min(xs) > 1e-9:
            assert hm < am

    def test_equality_iff_all_equal(self):
        xs = [2.5] * 4
        assert harmonic_mean(xs) == pytest.approx(math.fsum(xs) / len(xs))


class TestEstimator:
    def test_window_of_equal_rates(self):
        est = ThroughputEstimator.from_history([dl(1.0, k) for k in range(5)])
        assert est.estimate_mbps() == pytest.approx(1.0)

    def test_perturbation_factor(self):
        est = ThroughputEstimator.from_history(
            [dl(1.0, 0), dl(2.0, 1), dl(4.0, 2)], perturbation=1.5
        )
        assert est.estimate_mbps() == pytest.approx(1.5 * 3 / (1 + 0.5 + 0.25))

    def test_window_caps_at_five(self):
        history = [dl(10.0, k) for k in range(3)] + [dl(2.0, k + 3) for k in range(5)]
        est = ThroughputEstimator.from_history(history)
        assert est.estimate_mbps() == pytest.approx(2.0)

    def test_empty_window_bootstrap(self):
        est = ThroughputEstimator.from_history([], bootstrap_mbps=0.75)
        assert est.estimate_mbps() == pytest.approx(0.75)

    def test_robust_discount_only_when_rates_vary(self):
        steady = ThroughputEstimator.from_history(
            [dl(2.0, k) for k in range(5)], robust_discount=True
        )
        assert steady.estimate_mbps() == pytest.approx(2.0)
        shaky = ThroughputEstimator.from_history(
            [dl(2.0, 0), dl(1.0, 1), dl(2.0, 2)], robust_discount=True
        )
        plain = ThroughputEstimator.from_history([dl(2.0, 0), dl(1.0, 1), dl(2.0, 2)])
        assert shaky.estimate_mbps() < plain.estimate_mbps()


# --- bitrate selection ------------------------------------------------------------


def planned(chunk, sizes, duration, reach, dist_mass, T=5.0, origin=0.0, prev=None):
    curve = curve_from_watchcount(
        WatchCountDistribution(target=chunk, mass=dist_mass), T, origin_s=origin
    )
    return PlannedChunk(
        chunk=chunk,
        size_per_level=tuple(sizes),
        duration_s=duration,
        reach=reach,
        curve=curve,
        prev_level=prev,
    )


def naive_select(chunks, est, weights, ladder, now):
    """Unpruned exhaustive search; first-encountered (lexicographic) optimum."""
    best = None
    for levels in itertools.product(range(len(ladder)), repeat=len(chunks)):
        q = assignment_qoe(
            chunks, levels, ladder=ladder, est_mbps=est, weights=weights, now_s=now
        )
        if best is None or q > best[0]:
            best = (q, levels)
    return list(best[1])


def cbr_sizes(ladder, seconds):
    return [int(r * 1e6 * seconds / 8) for r in ladder.levels_mbps]


class TestSelectBitrates:
    def test_fast_network_all_top(self):
        ladder = BitrateLadder((1.0, 2.0, 4.0))
        sizes = cbr_sizes(ladder, 5.0)
        chunks = [
            planned(ChunkId(1, j), sizes, 5.0, 1.0, {j + 3: 1.0}) for j in (1, 2, 3)
        ]
        got = select_bitrates(chunks, 1000.0, QoeWeights(), ladder, now_s=0.0)
        assert got == [2, 2, 2]

    def test_starved_network_all_lowest(self):
        ladder = BitrateLadder((1.0, 2.0, 4.0))
        sizes = cbr_sizes(ladder, 5.0)
        chunks = [
            planned(ChunkId(1, j), sizes, 5.0, 1.0, {0: 1.0}) for j in (1, 2, 3)
        ]
        got = select_bitrates(chunks, 0.1, QoeWeights(), ladder, now_s=0.0)
        assert got == [0, 0, 0]

    def test_two_chunk_hand_case_matches_enumeration(self):
        ladder = BitrateLadder((1.0, 2.0))
        sizes = cbr_sizes(ladder, 5.0)
        chunks = [
            planned(ChunkId(1, 1), sizes, 5.0, 1.0, {0: 0.5, 1: 0.5}),
            planned(ChunkId(1, 2), sizes, 5.0, 0.5, {1: 0.25, 2: 0.25}),
        ]
        got = select_bitrates(chunks, 2.0, QoeWeights(), ladder, now_s=0.0)
        assert got == naive_select(chunks, 2.0, QoeWeights(), ladder, 0.0)

    def test_pruning_lossless_on_random_sequences(self):
        rng = np.random.default_rng(5)
        ladder = BitrateLadder((1.0, 1.75, 2.5, 4.3))
        for _ in range(40):
            n = int(rng.integers(1, 5))
            chunks = []
            video, j = 1, 1
            for _ in range(n):
                if rng.random() < 0.4:
                    video += 1
                    j = 1
                dur = float(rng.uniform(2.0, 5.0))
                sizes = cbr_sizes(ladder, dur)
                support = sorted(
                    {int(rng.integers(0, 5)) for _ in range(int(rng.integers(1, 4)))}
                )
                raw = rng.random(len(support)) + 1e-3
                total = raw.sum() / float(rng.uniform(0.3, 1.0))
                mass = {k: float(v / total) for k, v in zip(support, raw)}
                prev = int(rng.integers(0, 4)) if (j > 1 and rng.random() < 0.5) else None
                chunks.append(
                    planned(
                        ChunkId(video, j),
                        sizes,
                        dur,
                        sum(mass.values()),
                        mass,
                        origin=float(rng.uniform(0, 10)),
                        prev=prev,
                    )
                )
                j += 1
            est = float(rng.uniform(0.3, 8.0))
            got = select_bitrates(chunks, est, QoeWeights(), ladder, now_s=0.0)
            want = naive_select(chunks, est, QoeWeights(), ladder, 0.0)
            assert got == want

    def test_monotone_in_estimate_on_fixture(self):
        ladder = BitrateLadder((1.0, 2.0, 4.0))
        sizes = cbr_sizes(ladder, 5.0)
        chunks = [
            planned(ChunkId(1, 1), sizes, 5.0, 1.0, {0: 0.3, 1: 0.7}),
            planned(ChunkId(1, 2), sizes, 5.0, 0.8, {1: 0.4, 2: 0.4}),
            planned(ChunkId(2, 1), sizes, 5.0, 1.0, {1: 0.5, 2: 0.5}),
        ]
        prev_levels = None
        for est in (0.5, 1.0, 2.0, 4.0, 8.0):
            levels = select_bitrates(chunks, est, QoeWeights(), ladder, now_s=0.0)
            if prev_levels is not None:
                assert all(b >= a for a, b in zip(prev_levels, levels))
            prev_levels = levels

    def test_smoothness_charged_within_video_only(self):
        ladder = BitrateLadder((1.0, 4.0))
        sizes = cbr_sizes(ladder, 5.0)
        # same video: switching is penalized against the buffered predecessor
        within = [planned(ChunkId(1, 2), sizes, 5.0, 1.0, {5: 1.0}, prev=0)]
        across = [planned(ChunkId(2, 1), sizes, 5.0, 1.0, {5: 1.0}, prev=None)]
        w = QoeWeights(mu=4.3, eta=100.0)  # make switches dominate
        assert select_bitrates(within, 100.0, w, ladder, 0.0) == [0]
        assert select_bitrates(across, 100.0, w, ladder, 0.0) == [1]

    def test_empty_sequence(self):
        ladder = BitrateLadder((1.0, 2.0))
        assert select_bitrates([], 1.0, QoeWeights(), ladder, 0.0) == []
