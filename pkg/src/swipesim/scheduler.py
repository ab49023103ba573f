"""Swipe-aware prebuffer scheduling over a lookahead horizon.

At every decision point the scheduler rebuilds, conditioned on what the
viewer has already done, the watch-count distribution of every chunk it
might download, turns those into expected-rebuffer curves, keeps the chunks
whose expected stall at the end of a 25-second horizon clears a threshold,
assigns them greedily to download slots by marginal stall penalty, and hands
the ordered sequence to the bitrate search.

Conditioning: the distributions describe a fresh session, so mid-session the
current video's swipe pmf is restricted to the outcomes still possible (the
viewer is committed to the chunk now playing) and renormalized; completed
videos contribute nothing; the time origin is the end of the chunk now
playing (or "now" while stalled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .abr import (
    QoeWeights,
    ThroughputEstimator,
    planned_chunks,
    select_bitrates,
)
from .domain import ChunkId, Manifest, PlayerState, chunk_bytes, MBIT
from .rebuffer import RebufferCurve, curve_from_watchcount
from .simulator import DownloadAction, Idle, SchedulerBase
from .swipes import SwipePmf, WatchCountDistribution, convolve


@dataclass(frozen=True)
class SchedulerConfig:
    """Knobs for the horizon scheduler.

    ``candidate_threshold_s`` defaults to 1/mu, the inverse of the rebuffer
    weight in the QoE objective. ``reach_cutoff`` bounds how far down the
    playlist distributions are built: videos whose first chunk has less than
    this probability of starting within the horizon are ignored.
    """

    horizon_s: float = 25.0
    candidate_threshold_s: float | None = None
    reach_cutoff: float = 1e-3
    max_slots: int = 8
    throughput_perturbation: float = 1.0
    robust_discount: bool = False
    qoe: QoeWeights = field(default_factory=QoeWeights)

    def threshold_s(self) -> float:
        if self.candidate_threshold_s is not None:
            return self.candidate_threshold_s
        return 1.0 / self.qoe.mu

    def __post_init__(self) -> None:
        if self.horizon_s <= 0:
            raise ValueError("horizon must be positive")
        if self.candidate_threshold_s is not None and self.candidate_threshold_s < 0:
            raise ValueError("candidate threshold must be nonnegative")


@dataclass(frozen=True)
class Slot:
    chunk: ChunkId
    level: int
    start_s: float
    finish_s: float


@dataclass(frozen=True)
class BufferSequence:
    """Priority-ordered download plan for one horizon; the first slot is the
    immediate action."""

    slots: tuple[Slot, ...] = ()

    def __len__(self) -> int:
        return len(self.slots)

    def chunks(self) -> list[ChunkId]:
        return [s.chunk for s in self.slots]

    def first(self) -> Slot | None:
        return self.slots[0] if self.slots else None


def _common_chunk_duration(manifest: Manifest) -> float:
    durations = {v.chunk_duration_s for v in manifest.videos}
    if len(durations) != 1:
        raise ValueError("horizon scheduling needs one chunk duration across the playlist")
    return durations.pop()


def conditioned_watch_dists(
    manifest: Manifest,
    pmfs: Sequence[SwipePmf],
    state: PlayerState,
    horizon_s: float,
    reach_cutoff: float = 1e-3,
) -> tuple[float, dict[ChunkId, WatchCountDistribution]]:
    """Watch-count distributions of future chunks given playback so far.

    Returns ``(origin_s, dists)``: a chunk with ``n`` prior future chunks
    starts playing at ``origin_s + n * T``. Only chunks that could start
    within the horizon (plus one chunk of slack) are materialized.
    """
    t0 = state.now_s
    out: dict[ChunkId, WatchCountDistribution] = {}
    va = state.current_video
    if va is None:
        return t0, out
    T = _common_chunk_duration(manifest)
    horizon_end = state.now_s + horizon_s

    video = manifest.video(va)
    j_cur = state.current_chunk
    if state.stalled:
        j_next = j_cur
    else:
        j_next = j_cur + 1
        t0 = state.now_s + (video.chunk_end_s(j_cur) - video.chunk_start_s(j_cur) - state.offset_s)
    pmf_a = pmfs[va - 1]
    committed = pmf_a.survival(j_cur)
    if committed <= 0:
        committed = 1.0  # ground truth contradicts the pmf; keep forecasting

    def in_horizon(n_min: int) -> bool:
        return t0 + n_min * T <= horizon_end

    # remaining chunks of the anchor video: deterministic offsets, decaying reach
    for j in range(j_next, video.num_chunks + 1):
        n = j - j_next
        if not in_horizon(n):
            break
        reach = pmf_a.survival(j) / committed
        if reach > 0:
            out[ChunkId(va, j)] = WatchCountDistribution(
                target=ChunkId(va, j), mass={n: reach}
            )

    # videos after the anchor: convolution chain seeded by the anchor's
    # conditioned remaining-chunk count
    remaining = {
        k - (j_next - 1): p / committed
        for k, p in enumerate(pmf_a.mass, start=1)
        if k >= j_cur and p > 0
    }
    base = remaining
    for i in range(va + 1, len(manifest) + 1):
        if i > va + 1:
            base = convolve(base, pmfs[i - 2].as_mass())
        if not base:
            break
        min_n = min(base)
        if not in_horizon(min_n):
            break
        reach_in_horizon = math.fsum(
            p for n, p in base.items() if in_horizon(n)
        )
        if reach_in_horizon < reach_cutoff:
            break
        vid = manifest.video(i)
        out[ChunkId(i, 1)] = WatchCountDistribution(target=ChunkId(i, 1), mass=base)
        pmf_i = pmfs[i - 1]
        for j in range(2, vid.num_chunks + 1):
            if not in_horizon(min_n + j - 1):
                break
            survival = pmf_i.survival(j)
            if survival <= 0:
                break
            mass = {n + (j - 1): p * survival for n, p in base.items()}
            out[ChunkId(i, j)] = WatchCountDistribution(target=ChunkId(i, j), mass=mass)
    return t0, out


def candidate_set(
    state: PlayerState,
    curves: Mapping[ChunkId, RebufferCurve],
    cfg: SchedulerConfig,
) -> set[ChunkId]:
    """Unbuffered chunks whose expected stall at the end of the horizon is at
    least the threshold, closed under within-video prerequisites."""
    horizon_end = state.now_s + cfg.horizon_s
    threshold = cfg.threshold_s()
    in_flight = state.in_flight.chunk if state.in_flight else None

    def downloadable(c: ChunkId) -> bool:
        return not state.is_buffered(c) and c != in_flight

    cands = {
        c
        for c, curve in curves.items()
        if downloadable(c) and curve.eval(horizon_end) >= threshold
    }
    # prerequisite closure: pull in unbuffered predecessors we have curves for
    for c in sorted(cands):
        j = c.chunk - 1
        while j >= 1:
            prev = ChunkId(c.video, j)
            if prev not in curves or not downloadable(prev) or prev in cands:
                break
            cands.add(prev)
            j -= 1
    return cands


def uniform_feasible_bitrate(
    candidates: set[ChunkId],
    throughput_est_mbps: float,
    manifest: Manifest,
    horizon_s: float,
) -> int:
    """Highest ladder level at which every candidate finishes downloading
    within the horizon at the estimated rate; the lowest level if none fits
    (or there is nothing to download)."""
    if throughput_est_mbps <= 0:
        raise ValueError("throughput estimate must be positive")
    ladder = manifest.ladder
    if not candidates:
        return ladder.lowest
    for level in range(ladder.highest, ladder.lowest, -1):
        bits = sum(
            chunk_bytes(manifest.video(c.video), c.chunk, level, ladder) * 8.0
            for c in candidates
        )
        if bits / (throughput_est_mbps * MBIT) <= horizon_s:
            return level
    return ladder.lowest


def greedy_order(
    candidates: set[ChunkId],
    curves: Mapping[ChunkId, RebufferCurve],
    uniform_level: int,
    throughput_est_mbps: float,
    state: PlayerState,
    manifest: Manifest,
    cfg: SchedulerConfig,
) -> list[ChunkId]:
    """Fill download slots left to right; each slot takes the eligible chunk
    whose expected stall grows the most if pushed one slot later. Slot widths
    are the chunks' own projected download times at the uniform level; ties
    break toward the earlier (video, chunk)."""
    ladder = manifest.ladder
    bits_per_s = throughput_est_mbps * MBIT

    def width(c: ChunkId) -> float:
        return chunk_bytes(manifest.video(c.video), c.chunk, uniform_level, ladder) * 8.0 / bits_per_s

    remaining = set(candidates)
    placed: set[ChunkId] = set()
    order: list[ChunkId] = []
    finish_at = state.now_s
    horizon_end = state.now_s + cfg.horizon_s
    while remaining and len(order) < cfg.max_slots and finish_at < horizon_end:
        best: tuple[float, ChunkId] | None = None
        for c in sorted(remaining):
            prev = ChunkId(c.video, c.chunk - 1) if c.chunk > 1 else None
            if prev is not None and not (state.is_buffered(prev) or prev in placed):
                continue
            w = width(c)
            marginal = curves[c].eval(finish_at + 2 * w) - curves[c].eval(finish_at + w)
            if best is None or marginal > best[0]:
                best = (marginal, c)
        if best is None:
            break
        c = best[1]
        order.append(c)
        placed.add(c)
        remaining.remove(c)
        finish_at += width(c)
    return order


class SwipeAwareScheduler(SchedulerBase):
    """Session adapter: expected-rebuffer candidate selection, greedy slot
    ordering, then per-chunk bitrate search on the ordered sequence."""

    name = "swipeaware"

    def __init__(
        self,
        manifest: Manifest,
        pmfs: Sequence[SwipePmf],
        config: SchedulerConfig | None = None,
    ):
        super().__init__(manifest)
        self.config = config or SchedulerConfig()
        if len(pmfs) < len(manifest):
            raise ValueError(f"need one swipe pmf per video, got {len(pmfs)}")
        for i, pmf in enumerate(pmfs, start=1):
            if pmf.num_chunks != manifest.video(i).num_chunks:
                raise ValueError(
                    f"pmf for video {i} has {pmf.num_chunks} entries, "
                    f"video has {manifest.video(i).num_chunks} chunks"
                )
        self.pmfs = list(pmfs)
        self._chunk_duration = _common_chunk_duration(manifest)

    def estimate_mbps(self, state: PlayerState) -> float:
        est = ThroughputEstimator.from_history(
            state.download_history,
            perturbation=self.config.throughput_perturbation,
            robust_discount=self.config.robust_discount,
            bootstrap_mbps=self.manifest.ladder.rate(self.manifest.ladder.lowest),
        )
        return est.estimate_mbps()

    def plan(self, state: PlayerState) -> BufferSequence:
        """Full buffer sequence for the current horizon (deterministic in the
        state; scheduling twice on an unchanged state yields the same plan)."""
        cfg = self.config
        est = self.estimate_mbps(state)
        t0, dists = conditioned_watch_dists(
            self.manifest, self.pmfs, state, cfg.horizon_s, cfg.reach_cutoff
        )
        curves = {
            c: curve_from_watchcount(d, self._chunk_duration, origin_s=t0)
            for c, d in dists.items()
        }
        cands = candidate_set(state, curves, cfg)
        if not cands:
            return BufferSequence(())
        level = uniform_feasible_bitrate(cands, est, self.manifest, cfg.horizon_s)
        order = greedy_order(cands, curves, level, est, state, self.manifest, cfg)
        if not order:
            return BufferSequence(())
        buffered_levels = {c: b.level for c, b in state.buffered.items()}
        planned = planned_chunks(
            order,
            self.manifest,
            curves,
            {c: dists[c].total() for c in order},
            buffered_levels,
        )
        levels = select_bitrates(
            planned, est, cfg.qoe, self.manifest.ladder, state.now_s
        )
        slots = []
        finish = state.now_s
        for c, lvl in zip(order, levels):
            size = chunk_bytes(self.manifest.video(c.video), c.chunk, lvl, self.manifest.ladder)
            start = finish
            finish = start + size * 8.0 / (est * MBIT)
            slots.append(Slot(chunk=c, level=lvl, start_s=start, finish_s=finish))
        return BufferSequence(tuple(slots))

    def next_action(self, state: PlayerState) -> DownloadAction | Idle:
        seq = self.plan(state)
        slot = seq.first()
        if slot is None:
            return Idle("buffer_full")
        size = chunk_bytes(
            self.manifest.video(slot.chunk.video),
            slot.chunk.chunk,
            slot.level,
            self.manifest.ladder,
        )
        return DownloadAction(
            chunk=slot.chunk,
            level=slot.level,
            size_bytes=size,
            target_finish_s=slot.finish_s,
        )


def schedule(
    manifest: Manifest,
    pmfs: Sequence[SwipePmf],
    state: PlayerState,
    config: SchedulerConfig | None = None,
) -> BufferSequence:
    """One-shot planning entry point (builds a scheduler and plans once)."""
    return SwipeAwareScheduler(manifest, pmfs, config).plan(state)
