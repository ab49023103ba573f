"""Throughput estimation and horizon bitrate assignment.

The estimator is a harmonic mean over the last five completed chunk
downloads, optionally discounted by the worst recent relative prediction
error, and optionally multiplied by a perturbation factor for
error-injection experiments.

Bitrate selection walks the already-ordered buffer sequence and searches
ladder assignments maximizing expected horizon QoE: reach-weighted bitrate
reward, minus the rebuffer weight times each chunk's expected stall at its
projected finish, minus within-video level switches. The search is a
depth-first enumeration with a lossless dominance prune (equal results to
plain enumeration, lexicographically-smallest optimum returned).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .domain import (
    MBIT,
    BitrateLadder,
    ChunkId,
    CompletedDownload,
    Manifest,
    chunk_bytes,
)
from .rebuffer import RebufferCurve

ESTIMATOR_WINDOW = 5


@dataclass(frozen=True)
class QoeWeights:
    """QoE = bitrate reward - mu * rebuffer seconds - eta * level switches."""

    mu: float = 4.3
    eta: float = 1.0

    def __post_init__(self) -> None:
        if self.mu < 0 or self.eta < 0:
            raise ValueError("QoE weights must be nonnegative")


def harmonic_mean(xs: Sequence[float]) -> float:
    if not xs:
        raise ValueError("harmonic mean of empty sequence")
    if any(x <= 0 for x in xs):
        raise ValueError("harmonic mean needs positive values")
    return len(xs) / math.fsum(1.0 / x for x in xs)


@dataclass(frozen=True)
class ThroughputEstimator:
    """Harmonic-mean predictor over the trailing download window.

    ``perturbation`` multiplies the estimate (network error injection);
    ``robust_discount`` divides it by one plus the worst relative error the
    predictor made across the window, when enough history exists.
    """

    window: tuple[CompletedDownload, ...] = ()
    perturbation: float = 1.0
    robust_discount: bool = False
    bootstrap_mbps: float = 1.0

    @classmethod
    def from_history(
        cls,
        history: Sequence[CompletedDownload],
        *,
        perturbation: float = 1.0,
        robust_discount: bool = False,
        bootstrap_mbps: float = 1.0,
    ) -> "ThroughputEstimator":
        return cls(
            window=tuple(history[-ESTIMATOR_WINDOW:]),
            perturbation=perturbation,
            robust_discount=robust_discount,
            bootstrap_mbps=bootstrap_mbps,
        )

    def estimate_mbps(self) -> float:
        if not self.window:
            return self.bootstrap_mbps * self.perturbation
        est = harmonic_mean([d.mbps for d in self.window])
        if self.robust_discount:
            est /= 1.0 + self._max_relative_error()
        return est * self.perturbation

    def _max_relative_error(self) -> float:
        """Largest |predicted - actual| / predicted over the window, where
        each prediction is the harmonic mean of the downloads before it."""
        worst = 0.0
        rates = [d.mbps for d in self.window]
        for k in range(1, len(rates)):
            pred = harmonic_mean(rates[max(0, k - ESTIMATOR_WINDOW) : k])
            worst = max(worst, abs(pred - rates[k]) / pred)
        return worst


def throughput_estimate(est: ThroughputEstimator) -> float:
    return est.estimate_mbps()


# --- MPC-style bitrate assignment --------------------------------------------------


@dataclass(frozen=True)
class PlannedChunk:
    """One slot of a buffer sequence as seen by the bitrate search."""

    chunk: ChunkId
    size_per_level: tuple[int, ...]
    duration_s: float
    reach: float
    curve: RebufferCurve
    prev_level: int | None  # level of the already-buffered (i, j-1), if any


def planned_chunks(
    order: Sequence[ChunkId],
    manifest: Manifest,
    curves: Mapping[ChunkId, RebufferCurve],
    reaches: Mapping[ChunkId, float],
    buffered_levels: Mapping[ChunkId, int],
) -> list[PlannedChunk]:
    ladder = manifest.ladder
    out = []
    for c in order:
        video = manifest.video(c.video)
        prev = None
        if c.chunk > 1:
            prev = buffered_levels.get(ChunkId(c.video, c.chunk - 1))
        out.append(
            PlannedChunk(
                chunk=c,
                size_per_level=tuple(
                    chunk_bytes(video, c.chunk, lvl, ladder) for lvl in range(len(ladder))
                ),
                duration_s=video.chunk_seconds(c.chunk),
                reach=reaches.get(c, curves[c].terminal_slope),
                curve=curves[c],
                prev_level=prev,
            )
        )
    return out


def _slot_gain(
    pc: PlannedChunk,
    lvl: int,
    cum_bits: float,
    prev_level: int | None,
    *,
    ladder: BitrateLadder,
    bits_per_s: float,
    weights: QoeWeights,
    now_s: float,
) -> float:
    """QoE contribution of scheduling ``pc`` at ``lvl`` after ``cum_bits``
    queued bits. Shared by the pruned search and the plain enumerator so both
    produce bit-identical totals."""
    finish = now_s + (cum_bits + pc.size_per_level[lvl] * 8.0) / bits_per_s
    rate = ladder.rate(lvl)
    gain = pc.reach * rate * pc.duration_s
    gain -= weights.mu * pc.curve.eval(finish)
    if prev_level is not None:
        gain -= weights.eta * abs(rate - ladder.rate(prev_level))
    return gain


def assignment_qoe(
    chunks: Sequence[PlannedChunk],
    levels: Sequence[int],
    *,
    ladder: BitrateLadder,
    est_mbps: float,
    weights: QoeWeights,
    now_s: float,
) -> float:
    """Expected horizon QoE of one complete ladder assignment."""
    bits_per_s = est_mbps * MBIT
    cum_bits = 0.0
    last: dict[int, tuple[int, int]] = {}  # video -> (chunk index, level)
    total = 0.0
    for pc, lvl in zip(chunks, levels):
        prev = _adjacent_prev_level(pc, last.get(pc.chunk.video))
        total += _slot_gain(
            pc, lvl, cum_bits, prev,
            ladder=ladder, bits_per_s=bits_per_s, weights=weights, now_s=now_s,
        )
        cum_bits += pc.size_per_level[lvl] * 8.0
        last[pc.chunk.video] = (pc.chunk.chunk, lvl)
    return total


def _adjacent_prev_level(
    pc: PlannedChunk, last_assigned: tuple[int, int] | None
) -> int | None:
    """Level the smoothness term compares against: the sequence's own (i, j-1)
    if assigned earlier, else the already-buffered (i, j-1), else nothing."""
    if last_assigned is not None and last_assigned[0] == pc.chunk.chunk - 1:
        return last_assigned[1]
    return pc.prev_level


def select_bitrates(
    chunks: Sequence[PlannedChunk],
    est_mbps: float,
    weights: QoeWeights,
    ladder: BitrateLadder,
    now_s: float,
) -> list[int]:
    """Ladder assignment maximizing expected horizon QoE for a fixed order.

    Exhaustive over ladder^len with a dominance prune: two partial
    assignments that agree on every level still visible to future smoothness
    terms compare by (cumulative bits, partial QoE); a partial that is no
    lighter and no better (and not lexicographically earlier) cannot lead to
    the reported optimum, because future terms only degrade with extra queued
    bits. Ties in final QoE resolve to the lexicographically smallest
    assignment, matching plain enumeration order.
    """
    if not chunks:
        return []
    if est_mbps <= 0:
        raise ValueError("throughput estimate must be positive")
    bits_per_s = est_mbps * MBIT
    # last slot index per video, to know which boundary levels stay visible
    last_slot_of_video: dict[int, int] = {}
    for idx, pc in enumerate(chunks):
        last_slot_of_video[pc.chunk.video] = idx

    # key = ((video, last chunk index, level), ...) for videos with a later slot
    states: dict[tuple, list[tuple[float, float, tuple[int, ...]]]] = {
        (): [(0.0, 0.0, ())]
    }
    for idx, pc in enumerate(chunks):
        nxt: dict[tuple, list[tuple[float, float, tuple[int, ...]]]] = {}
        for key, bucket in states.items():
            open_chunks = {video: (j, lvl) for video, j, lvl in key}
            for cum_bits, partial, levels in bucket:
                for lvl in range(len(ladder)):
                    prev = _adjacent_prev_level(pc, open_chunks.get(pc.chunk.video))
                    gain = _slot_gain(
                        pc, lvl, cum_bits, prev,
                        ladder=ladder, bits_per_s=bits_per_s,
                        weights=weights, now_s=now_s,
                    )
                    new_open = dict(open_chunks)
                    if last_slot_of_video[pc.chunk.video] > idx:
                        new_open[pc.chunk.video] = (pc.chunk.chunk, lvl)
                    else:
                        new_open.pop(pc.chunk.video, None)
                    new_key = tuple(
                        (video, j, l) for video, (j, l) in sorted(new_open.items())
                    )
                    _insert_pruned(
                        nxt.setdefault(new_key, []),
                        (
                            cum_bits + pc.size_per_level[lvl] * 8.0,
                            partial + gain,
                            levels + (lvl,),
                        ),
                    )
        states = nxt
    best: tuple[float, tuple[int, ...]] | None = None
    for bucket in states.values():
        for _, qoe, levels in bucket:
            if best is None or qoe > best[0] or (qoe == best[0] and levels < best[1]):
                best = (qoe, levels)
    assert best is not None
    return list(best[1])


def _insert_pruned(
    bucket: list[tuple[float, float, tuple[int, ...]]],
    cand: tuple[float, float, tuple[int, ...]],
) -> None:
    """Keep only partial states that might still become the lex-min optimum.

    ``a`` is dominated by ``b`` when b is no heavier, no worse, and not
    lexicographically later; dropping such ``a`` is lossless because any
    completion of ``a`` is matched or beaten by the same completion of ``b``.
    """
    bits_c, qoe_c, lev_c = cand
    keep = []
    for entry in bucket:
        bits_e, qoe_e, lev_e = entry
        if bits_e <= bits_c and qoe_e >= qoe_c and lev_e <= lev_c:
            return  # candidate dominated
        if not (bits_c <= bits_e and qoe_c >= qoe_e and lev_c <= lev_e):
            keep.append(entry)  # entry survives
    keep.append(cand)
    bucket[:] = keep
