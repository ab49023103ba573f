"""Deterministic event-driven session engine.

The engine replays a piecewise-constant throughput trace and one session's
ground-truth view times against any download scheduler. Playback consumes
chunks strictly sequentially within a video; a swipe (or the video ending)
jumps to the next video's first chunk, stalling if it is not fully
downloaded. Exactly one download is in flight at a time and downloads are
never aborted; the scheduler is consulted whenever the connection is idle
(after every event), which subsumes re-invocation at completions, swipes,
chunk boundaries, and deadline callbacks.

Everything is a pure function of its inputs: identical inputs produce a
byte-identical :class:`SessionLog`.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .domain import (
    MBIT,
    BufferedChunk,
    ChunkId,
    CompletedDownload,
    InFlightDownload,
    Manifest,
    PlayerState,
    VideoSpec,
    validate_manifest,
)

DEFAULT_RTT_S = 0.006
MIN_TRACE_MBPS = 0.01


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkTrace:
    """Piecewise-constant throughput, wrapping cyclically past its coverage.

    ``segments`` are (start_s, mbps) with starts ascending from 0; the last
    segment extends for the same length as the gap before it (1 s for a
    single-segment trace), which defines the wrap period.
    """

    segments: tuple[tuple[float, float], ...]
    rtt_s: float = DEFAULT_RTT_S

    def __post_init__(self) -> None:
        segs = tuple((float(t), float(r)) for t, r in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise TraceError("trace has no segments")
        if segs[0][0] != 0.0:
            raise TraceError("trace must start at time 0")
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise TraceError("trace segment starts must be ascending")
        if any(r <= 0 for _, r in segs):
            raise TraceError("trace rates must be positive")
        if self.rtt_s < 0:
            raise TraceError("rtt must be nonnegative")
        starts = [t for t, _ in segs]
        period = starts[0] + 1.0 if len(starts) == 1 else starts[-1] + (starts[-1] - starts[-2])
        cum = [0.0]
        for (t0, rate), t1 in zip(segs, starts[1:] + [period]):
            cum.append(cum[-1] + rate * MBIT * (t1 - t0))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_period", period)
        object.__setattr__(self, "_cum", cum)

    @property
    def period_s(self) -> float:
        return self._period

    def _cum_bits(self, t: float) -> float:
        """Bits delivered over [0, t] for t within one period."""
        k = bisect_right(self._starts, t) - 1
        return self._cum[k] + self.segments[k][1] * MBIT * (t - self._starts[k])

    def bits_between(self, t0: float, t1: float) -> float:
        if t1 <= t0:
            return 0.0
        period = self._period
        cycle = self._cum[-1]

        def total(t: float) -> float:
            n, rem = divmod(t, period)
            return n * cycle + self._cum_bits(rem)

        return total(t1) - total(t0)

    def delivery_finish_s(self, bits: float, start_s: float) -> float:
        """Smallest t with bits_between(start_s, t) == bits."""
        if bits <= 0:
            return start_s
        period = self._period
        cum = self._cum
        cycle = cum[-1]
        n0, rem0 = divmod(start_s, period)
        target = n0 * cycle + self._cum_bits(rem0) + bits
        n, rem_bits = divmod(target, cycle)
        k = bisect_right(cum, rem_bits) - 1
        if k >= len(self.segments):  # exactly at the period boundary
            return (n + 1) * period
        t_in = self._starts[k] + (rem_bits - cum[k]) / (self.segments[k][1] * MBIT)
        return n * period + t_in

    def download_finish_s(self, size_bytes: int, request_s: float) -> float:
        """Finish time of a request issued at ``request_s``: one rtt of
        latency, then byte-exact delivery along the trace."""
        return self.delivery_finish_s(size_bytes * 8.0, request_s + self.rtt_s)


def download_time(size_bytes: int, trace: NetworkTrace, start_s: float) -> float:
    """Absolute finish time of ``size_bytes`` requested at ``start_s``."""
    if size_bytes <= 0:
        raise ValueError("download size must be positive")
    return trace.download_finish_s(size_bytes, start_s)


def load_trace_csv(path: str, rtt_s: float = DEFAULT_RTT_S) -> NetworkTrace:
    """Read a 'time_s,mbps' CSV into a trace."""
    segments = []
    with open(path) as f:
        header = f.readline().strip()
        if header.replace(" ", "") != "time_s,mbps":
            raise TraceError(f"{path}: expected header 'time_s,mbps', got '{header}'")
        for line in f:
            line = line.strip()
            if not line:
                continue
            t, r = line.split(",")
            segments.append((float(t), float(r)))
    return NetworkTrace(segments=tuple(segments), rtt_s=rtt_s)


def save_trace_csv(trace: NetworkTrace, path: str) -> None:
    with open(path, "w") as f:
        f.write("time_s,mbps\n")
        for t, r in trace.segments:
            f.write(f"{t:g},{r:g}\n")


def trace_from_packet_times(
    packet_ms: Sequence[int],
    packet_bytes: int = 1500,
    bin_s: float = 1.0,
    rtt_s: float = DEFAULT_RTT_S,
) -> NetworkTrace:
    """Bucket packet departure timestamps (ms, one packet per entry) into a
    piecewise-constant trace; empty bins clamp to a small positive rate."""
    if not packet_ms:
        raise TraceError("no packets in trace")
    horizon = max(packet_ms) / 1000.0
    nbins = max(1, math.ceil(horizon / bin_s))
    counts = [0] * nbins
    for ms in packet_ms:
        b = min(nbins - 1, int(ms / 1000.0 / bin_s))
        counts[b] += 1
    segments = tuple(
        (k * bin_s, max(c * packet_bytes * 8.0 / bin_s / MBIT, MIN_TRACE_MBPS))
        for k, c in enumerate(counts)
    )
    return NetworkTrace(segments=segments, rtt_s=rtt_s)


# --- scheduler-facing types ---------------------------------------------------


@dataclass(frozen=True)
class DownloadAction:
    chunk: ChunkId
    level: int
    size_bytes: int
    target_finish_s: float | None = None


@dataclass(frozen=True)
class Idle:
    """No download right now. ``reason`` is 'buffer_full' when everything
    worth having within the horizon is already buffered, 'policy' when the
    scheduler chooses to wait for its own reasons."""

    reason: str = "buffer_full"


@dataclass(frozen=True)
class SessionEvent:
    kind: str
    chunk: ChunkId | None = None
    video: int | None = None


class SchedulerBase:
    """Default no-op scheduler hooks; subclass and override what you need."""

    name = "base"

    def __init__(self, manifest: Manifest):
        self.manifest = manifest

    def segments(self, video_index: int) -> tuple[float, ...] | None:
        """Chunk end offsets (seconds) of a video, for playback gating."""
        return manifest_segments(self.manifest.video(video_index))

    def gate_playback(self, state: PlayerState) -> bool:
        return False

    def observe(self, event: SessionEvent, state: PlayerState) -> None:
        pass

    def next_action(self, state: PlayerState) -> DownloadAction | Idle:
        raise NotImplementedError

    def drain_events(self) -> list[tuple[float, str, str]]:
        return []


def manifest_segments(video: VideoSpec) -> tuple[float, ...]:
    return tuple(video.chunk_end_s(j) for j in range(1, video.num_chunks + 1))


# --- session log ----------------------------------------------------------------


@dataclass
class ChunkRecord:
    chunk: ChunkId
    level: int
    level_mbps: float
    size_bytes: int
    download_start_s: float
    download_finish_s: float | None
    play_start_s: float | None = None
    watch_s: float = 0.0
    rebuffer_s: float = 0.0
    watched: bool = False


@dataclass
class SessionLog:
    """Complete record of one simulated session."""

    system: str
    session_length_s: float
    records: list[ChunkRecord] = field(default_factory=list)
    idle_intervals: list[tuple[float, float, str]] = field(default_factory=list)
    events: list[tuple[float, str, str]] = field(default_factory=list)
    watch_total_s: float = 0.0
    rebuffer_total_s: float = 0.0

    @property
    def downloaded_bytes(self) -> int:
        return sum(r.size_bytes for r in self.records)

    @property
    def watched_bytes(self) -> int:
        return sum(r.size_bytes for r in self.records if r.watched)

    @property
    def wasted_bytes(self) -> int:
        return sum(r.size_bytes for r in self.records if not r.watched)

    @property
    def idle_total_s(self) -> float:
        return math.fsum(t1 - t0 for t0, t1, _ in self.idle_intervals)

    @property
    def unforced_idle_s(self) -> float:
        return math.fsum(
            t1 - t0 for t0, t1, reason in self.idle_intervals if reason != "buffer_full"
        )

    def verify(self, tol: float = 1e-6) -> None:
        """Assert the accounting invariants; raises AssertionError on violation."""
        residual = self.session_length_s - self.watch_total_s - self.rebuffer_total_s
        assert abs(residual) < tol, f"time accounting broken: residual {residual}"
        assert self.watched_bytes + self.wasted_bytes == self.downloaded_bytes
        per_chunk_watch = math.fsum(r.watch_s for r in self.records)
        assert abs(per_chunk_watch - self.watch_total_s) < tol
        done = sorted(
            (r for r in self.records if r.download_finish_s is not None),
            key=lambda r: r.download_start_s,
        )
        for a, b in zip(done, done[1:]):
            assert b.download_start_s >= a.download_finish_s - 1e-9, "downloads overlap"
        for r in self.records:
            if r.watched and r.download_finish_s is not None:
                assert r.play_start_s >= r.download_finish_s - 1e-9, (
                    f"{r.chunk} played before its download finished"
                )

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "session_length_s": self.session_length_s,
            "watch_total_s": self.watch_total_s,
            "rebuffer_total_s": self.rebuffer_total_s,
            "records": [
                {
                    "video": r.chunk.video,
                    "chunk": r.chunk.chunk,
                    "level": r.level,
                    "level_mbps": r.level_mbps,
                    "size_bytes": r.size_bytes,
                    "download_start_s": r.download_start_s,
                    "download_finish_s": r.download_finish_s,
                    "play_start_s": r.play_start_s,
                    "watch_s": r.watch_s,
                    "rebuffer_s": r.rebuffer_s,
                    "watched": r.watched,
                }
                for r in self.records
            ],
            "idle_intervals": [list(iv) for iv in self.idle_intervals],
            "events": [list(ev) for ev in self.events],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionLog":
        log = cls(
            system=raw["system"],
            session_length_s=raw["session_length_s"],
            watch_total_s=raw["watch_total_s"],
            rebuffer_total_s=raw["rebuffer_total_s"],
            idle_intervals=[tuple(iv) for iv in raw["idle_intervals"]],
            events=[tuple(ev) for ev in raw["events"]],
        )
        for r in raw["records"]:
            log.records.append(
                ChunkRecord(
                    chunk=ChunkId(r["video"], r["chunk"]),
                    level=r["level"],
                    level_mbps=r["level_mbps"],
                    size_bytes=r["size_bytes"],
                    download_start_s=r["download_start_s"],
                    download_finish_s=r["download_finish_s"],
                    play_start_s=r["play_start_s"],
                    watch_s=r["watch_s"],
                    rebuffer_s=r["rebuffer_s"],
                    watched=r["watched"],
                )
            )
        return log

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class SessionConfig:
    session_length_s: float = 600.0
    playback_tick_s: float = 1e-3


# --- the event loop ----------------------------------------------------------------


def run_session(
    adapter,
    manifest: Manifest,
    trace: NetworkTrace,
    view_times_s: Sequence[float],
    config: SessionConfig | None = None,
    decision_hook: Callable[[PlayerState, object], None] | None = None,
) -> SessionLog:
    """Simulate one session of ``adapter`` against a trace and ground-truth
    view times (seconds per playlist video; missing entries mean the video is
    watched to completion, zero entries clamp to one playback tick)."""
    config = config or SessionConfig()
    validate_manifest(manifest)
    end = config.session_length_s
    n_videos = len(manifest)

    views = []
    for i in range(1, n_videos + 1):
        d = manifest.video(i).duration_s
        v = view_times_s[i - 1] if i - 1 < len(view_times_s) else d
        views.append(min(max(v, config.playback_tick_s), d))

    state = PlayerState()
    records: list[ChunkRecord] = []
    rec_index: dict[ChunkId, ChunkRecord] = {}
    events: list[tuple[float, str, str]] = []
    idle_intervals: list[tuple[float, float, str]] = []
    open_idle: tuple[float, str] | None = None
    boundaries: dict[int, tuple[float, ...]] = {}

    def emit(kind: str, detail: str = "") -> None:
        events.append((state.now_s, kind, detail))

    def bounds(i: int) -> tuple[float, ...]:
        b = boundaries.get(i)
        if b is None:
            b = adapter.segments(i)
            if b is None:
                raise RuntimeError(f"no chunk layout for playing video {i}")
            boundaries[i] = tuple(b)
            b = boundaries[i]
        return b

    def waiting_chunk() -> ChunkId:
        return ChunkId(state.current_video, state.current_chunk)

    def try_start_chunk() -> None:
        """Start playing the chunk at the playhead, or (stay) stall on it."""
        c = waiting_chunk()
        if state.is_buffered(c) and not adapter.gate_playback(state):
            rec = rec_index[c]
            if state.stalled:
                z = state.now_s - state.stall_started_s
                rec.rebuffer_s += z
                state.rebuffer_total_s += z
                state.stalled = False
                emit("stall_end", str(c))
            rec.play_start_s = state.now_s
            rec.watched = True
            if c.video not in state.play_started_videos:
                state.play_started_videos.add(c.video)
                emit("play_start_video", str(c.video))
                adapter.observe(SessionEvent("play_start_video", video=c.video), state)
            emit("play_start_chunk", str(c))
        elif not state.stalled:
            state.stalled = True
            state.stall_started_s = state.now_s
            emit("stall_start", str(c))

    def advance_playback_to(t: float) -> None:
        if state.current_video is not None and not state.stalled and t > state.now_s:
            dt = t - state.now_s
            rec_index[waiting_chunk()].watch_s += dt
            state.offset_s += dt
        state.now_s = t

    def advance_video() -> None:
        old = state.current_video
        emit("leave_video", str(old))
        adapter.observe(SessionEvent("swipe", video=old), state)
        if old + 1 > n_videos:
            state.current_video = None
            return
        state.current_video = old + 1
        state.current_chunk = 1
        state.offset_s = 0.0
        try_start_chunk()

    def next_play_event() -> tuple[float, str] | None:
        if state.current_video is None or state.stalled:
            return None
        v = state.current_video
        b = bounds(v)
        chunk_start = b[state.current_chunk - 2] if state.current_chunk > 1 else 0.0
        pos = chunk_start + state.offset_s
        t_swipe = state.now_s + (views[v - 1] - pos)
        t_chunk = state.now_s + (b[state.current_chunk - 1] - pos)
        if t_swipe <= t_chunk:
            return (t_swipe, "video")
        return (t_chunk, "chunk")

    def close_idle() -> None:
        nonlocal open_idle
        if open_idle is not None:
            t0, reason = open_idle
            if state.now_s > t0:
                idle_intervals.append((t0, state.now_s, reason))
            open_idle = None

    def start_download(action: DownloadAction) -> None:
        c = action.chunk
        if state.is_buffered(c):
            raise RuntimeError(f"scheduler re-requested buffered chunk {c}")
        if action.size_bytes <= 0:
            raise RuntimeError(f"non-positive download size for {c}")
        close_idle()
        finish = trace.download_finish_s(action.size_bytes, state.now_s)
        state.in_flight = InFlightDownload(
            chunk=c,
            level=action.level,
            size_bytes=action.size_bytes,
            start_s=state.now_s,
            finish_s=finish,
            target_finish_s=action.target_finish_s,
        )
        emit("download_start", f"{c}@{action.level}")

    def complete_download() -> None:
        d = state.in_flight
        state.in_flight = None
        state.buffered[d.chunk] = BufferedChunk(d.chunk, d.level, d.size_bytes)
        done = CompletedDownload(d.chunk, d.level, d.size_bytes, d.start_s, d.finish_s)
        state.download_history.append(done)
        rec = ChunkRecord(
            chunk=d.chunk,
            level=d.level,
            level_mbps=manifest.ladder.rate(d.level),
            size_bytes=d.size_bytes,
            download_start_s=d.start_s,
            download_finish_s=d.finish_s,
        )
        records.append(rec)
        rec_index[d.chunk] = rec
        emit("download_complete", str(d.chunk))
        adapter.observe(SessionEvent("download_complete", chunk=d.chunk), state)

    def pull() -> None:
        nonlocal open_idle
        if state.in_flight is not None or state.now_s >= end:
            return
        decision = adapter.next_action(state)
        if decision_hook is not None:
            decision_hook(state, decision)
        if isinstance(decision, DownloadAction):
            start_download(decision)
        else:
            if open_idle is None:
                open_idle = (state.now_s, decision.reason)

    # --- main loop
    emit("session_start")
    emit("stall_start", str(waiting_chunk()))
    adapter.observe(SessionEvent("session_start"), state)
    pull()

    while state.now_s < end and state.current_video is not None:
        candidates: list[tuple[float, int, str]] = []  # (time, priority, kind)
        if state.in_flight is not None:
            candidates.append((state.in_flight.finish_s, 0, "download"))
            tgt = state.in_flight.target_finish_s
            if (
                tgt is not None
                and not state.in_flight.deadline_fired
                and tgt < state.in_flight.finish_s
            ):
                candidates.append((max(tgt, state.now_s), 1, "deadline"))
        play = next_play_event()
        if play is not None:
            candidates.append((play[0], 2, play[1]))
        candidates.append((end, 3, "end"))
        t_next, _, kind = min(candidates)
        t_next = max(t_next, state.now_s)

        if kind == "download":
            advance_playback_to(t_next)
            complete_download()
            if state.stalled:
                try_start_chunk()
            pull()
        elif kind == "deadline":
            advance_playback_to(t_next)
            state.in_flight.deadline_fired = True
            emit("deadline_exceeded", str(state.in_flight.chunk))
            adapter.observe(
                SessionEvent("deadline", chunk=state.in_flight.chunk), state
            )
        elif kind == "chunk":
            advance_playback_to(t_next)
            state.current_chunk += 1
            state.offset_s = 0.0
            try_start_chunk()
            pull()
        elif kind == "video":
            advance_playback_to(t_next)
            advance_video()
            pull()
        else:  # end
            advance_playback_to(end)
            break

    # --- finalize
    session_length = min(state.now_s, end)
    if state.stalled and state.current_video is not None:
        z = session_length - state.stall_started_s
        if z > 0:
            state.rebuffer_total_s += z
            c = waiting_chunk()
            if c in rec_index:
                rec_index[c].rebuffer_s += z
    close_idle()
    if state.in_flight is not None:
        d = state.in_flight
        delivered_bits = trace.bits_between(d.start_s + trace.rtt_s, session_length)
        partial = min(d.size_bytes, int(delivered_bits // 8))
        if partial > 0:
            records.append(
                ChunkRecord(
                    chunk=d.chunk,
                    level=d.level,
                    level_mbps=manifest.ladder.rate(d.level),
                    size_bytes=partial,
                    download_start_s=d.start_s,
                    download_finish_s=None,
                )
            )
            emit("download_cut_short", str(d.chunk))

    log = SessionLog(
        system=getattr(adapter, "name", adapter.__class__.__name__),
        session_length_s=session_length,
        records=records,
        idle_intervals=idle_intervals,
        events=sorted(events + adapter.drain_events(), key=lambda e: e[0]),
        watch_total_s=math.fsum(r.watch_s for r in records),
        rebuffer_total_s=state.rebuffer_total_s,
    )
    log.verify()
    return log
