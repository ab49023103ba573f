"""Comparison schedulers: a fixed-rule state machine and a clairvoyant oracle.

The state machine mirrors the behavior measured from a popular short-video
app: videos are split by bytes (first chunk = first 1 MB, remainder second),
the bitrate is locked per video from recent throughput when its first chunk
starts downloading, and downloads cycle through three phases per
group-of-ten manifest window:

* ramping up  - download first chunks back to back; playback begins once
  five have accumulated;
* maintaining - keep five unwatched first chunks buffered, fetch a video's
  second chunk when and only when it starts playing;
* prebuffer idling - all of the group's first chunks are down, so no new
  first-chunk downloads; exit to the next group's ramp-up once nine of the
  ten videos have been watched.

The oracle knows the exact swipe times and the future throughput: it
downloads precisely the chunks that will be viewed, in viewing order, and
picks bitrates by model-predictive search over the next five viewing chunks
using true download times. It never downloads a byte that is not watched.
"""

from __future__ import annotations

from dataclasses import dataclass

from .abr import QoeWeights
from .domain import (
    MBIT,
    BitrateLadder,
    ChunkId,
    Manifest,
    PlayerState,
    VideoSpec,
    chunk_bytes,
)
from .simulator import (
    DownloadAction,
    Idle,
    NetworkTrace,
    SchedulerBase,
    SessionConfig,
    SessionEvent,
)

FIRST_CHUNK_BYTES = 1_000_000


@dataclass(frozen=True)
class TikTokConfig:
    first_chunk_bytes: int = FIRST_CHUNK_BYTES
    high_water: int = 5
    thresholds_mbps: tuple[float, ...] | None = None  # default: 1.5x each rate above the lowest

    def thresholds(self, ladder: BitrateLadder) -> tuple[float, ...]:
        if self.thresholds_mbps is not None:
            if len(self.thresholds_mbps) != len(ladder) - 1:
                raise ValueError("need one threshold per ladder level above the lowest")
            return self.thresholds_mbps
        return tuple(1.5 * r for r in ladder.levels_mbps[1:])


def tiktok_bitrate(
    throughput_last_1s_mbps: float,
    ladder: BitrateLadder,
    thresholds_mbps: tuple[float, ...],
) -> int:
    """Highest ladder level whose threshold the measured throughput clears;
    the chosen level is then locked for the whole video."""
    if list(thresholds_mbps) != sorted(thresholds_mbps):
        raise ValueError("thresholds must be ascending")
    level = 0
    for k, thr in enumerate(thresholds_mbps):
        if throughput_last_1s_mbps >= thr:
            level = k + 1
    return level


def byte_chunk_layout(
    video: VideoSpec,
    ladder: BitrateLadder,
    level: int,
    first_chunk_bytes: int = FIRST_CHUNK_BYTES,
) -> tuple[tuple[int, float], ...]:
    """Size-based chunking at a locked level: (bytes, end offset in seconds)
    per chunk. A file no larger than the first-chunk budget stays one chunk;
    otherwise the remainder forms a single second chunk. Playable seconds of
    the first chunk follow the level's nominal rate."""
    total = sum(
        chunk_bytes(video, j, level, ladder) for j in range(1, video.num_chunks + 1)
    )
    if total <= first_chunk_bytes:
        return ((total, video.duration_s),)
    bytes_per_s = ladder.rate(level) * MBIT / 8.0
    first_s = min(first_chunk_bytes / bytes_per_s, video.duration_s)
    if first_s >= video.duration_s:
        return ((total, video.duration_s),)
    return (
        (first_chunk_bytes, first_s),
        (total - first_chunk_bytes, video.duration_s),
    )


class TikTokState(SchedulerBase):
    """Three-phase fixed-rule download machine (see module docstring)."""

    name = "tiktok"

    RAMPING_UP = "ramping_up"
    MAINTAINING = "maintaining"
    PREBUFFER_IDLING = "prebuffer_idling"

    def __init__(self, manifest: Manifest, config: TikTokConfig | None = None):
        super().__init__(manifest)
        self.config = config or TikTokConfig()
        self.thresholds = self.config.thresholds(manifest.ladder)
        self.phase = self.RAMPING_UP
        self.group_start = 1
        self.gate_active = True
        self.locked_level: dict[int, int] = {}
        self.layouts: dict[int, tuple[tuple[int, float], ...]] = {}
        self._events: list[tuple[float, str, str]] = []

    # --- engine hooks

    def segments(self, video_index: int) -> tuple[float, ...] | None:
        layout = self.layouts.get(video_index)
        if layout is None:
            return None
        return tuple(end for _, end in layout)

    def gate_playback(self, state: PlayerState) -> bool:
        return self.gate_active

    def observe(self, event: SessionEvent, state: PlayerState) -> None:
        self._refresh(state)

    def next_action(self, state: PlayerState) -> DownloadAction | Idle:
        self._refresh(state)
        v = state.current_video
        if v is None:
            return Idle("policy")

        # the chunk playback is stalled on always comes first
        if state.stalled:
            need = ChunkId(v, state.current_chunk)
            if not state.is_buffered(need):
                level = self._lock_level(v, state)
                return self._download(need, level)

        # second chunk of the playing video, when and only when it plays
        if not state.stalled and v in state.play_started_videos:
            layout = self.layouts[v]
            if len(layout) == 2 and not state.is_buffered(ChunkId(v, 2)):
                return self._download(ChunkId(v, 2), self.locked_level[v])

        # first-chunk prebuffering within the current group-of-ten
        if self.phase == self.PREBUFFER_IDLING:
            return Idle("policy")
        if (
            self.phase == self.MAINTAINING
            and self._unwatched_first_chunks(state) >= self.config.high_water
        ):
            return Idle("policy")
        nxt = self._next_unbuffered_first_chunk(state)
        if nxt is None:
            return Idle("policy")
        level = self._lock_level(nxt, state)
        return self._download(ChunkId(nxt, 1), level)

    def drain_events(self) -> list[tuple[float, str, str]]:
        out, self._events = self._events, []
        return out

    # --- internals

    def _download(self, chunk: ChunkId, level: int) -> DownloadAction:
        layout = self.layouts[chunk.video]
        size = layout[chunk.chunk - 1][0]
        return DownloadAction(chunk=chunk, level=level, size_bytes=size)

    def _group_end(self) -> int:
        return min(self.group_start + self.manifest.group_size - 1, len(self.manifest))

    def _unwatched_first_chunks(self, state: PlayerState) -> int:
        return sum(
            1
            for i in range(1, len(self.manifest) + 1)
            if ChunkId(i, 1) in state.buffered and i not in state.play_started_videos
        )

    def _next_unbuffered_first_chunk(self, state: PlayerState) -> int | None:
        for i in range(self.group_start, self._group_end() + 1):
            if i in state.play_started_videos:
                continue
            if not state.is_buffered(ChunkId(i, 1)):
                return i
        return None

    def _lock_level(self, video_index: int, state: PlayerState) -> int:
        if video_index not in self.locked_level:
            level = tiktok_bitrate(
                self._throughput_last_1s(state), self.manifest.ladder, self.thresholds
            )
            self.locked_level[video_index] = level
            self.layouts[video_index] = byte_chunk_layout(
                self.manifest.video(video_index),
                self.manifest.ladder,
                level,
                self.config.first_chunk_bytes,
            )
        return self.locked_level[video_index]

    def _throughput_last_1s(self, state: PlayerState) -> float:
        """Delivered bits over the trailing second, assuming each completed
        download delivered uniformly across its transfer window."""
        t1 = state.now_s
        t0 = t1 - 1.0
        bits = 0.0
        any_overlap = False
        for d in state.download_history:
            lo = max(d.start_s, t0)
            hi = min(d.finish_s, t1)
            if hi > lo and d.seconds > 0:
                any_overlap = True
                bits += d.size_bytes * 8.0 * (hi - lo) / d.seconds
        if any_overlap:
            return bits / 1.0 / MBIT
        if state.download_history:
            return state.download_history[-1].mbps
        return self.manifest.ladder.rate(0)

    def _set_phase(self, phase: str, state: PlayerState) -> None:
        if phase != self.phase:
            self.phase = phase
            self._events.append((state.now_s, "tiktok_phase", phase))

    def _refresh(self, state: PlayerState) -> None:
        group_end = self._group_end()
        # group exit: nine of ten watched (play started) moves to the next window
        exit_count = min(self.manifest.group_size - 1, group_end - self.group_start)
        watched = sum(
            1
            for i in range(self.group_start, group_end + 1)
            if i in state.play_started_videos
        )
        advanced = False
        if group_end < len(self.manifest):
            if watched > exit_count or (
                state.current_video is not None and state.current_video > group_end
            ):
                self.group_start = group_end + 1
                self._set_phase(self.RAMPING_UP, state)
                advanced = True
        if advanced:
            group_end = self._group_end()

        if self.phase == self.RAMPING_UP:
            goal = min(
                self.config.high_water,
                sum(
                    1
                    for i in range(self.group_start, group_end + 1)
                    if i not in state.play_started_videos
                ),
            )
            if goal > 0 and self._unwatched_first_chunks(state) >= goal:
                self._set_phase(self.MAINTAINING, state)
        if self.phase != self.PREBUFFER_IDLING:
            if self._next_unbuffered_first_chunk(state) is None:
                self._set_phase(self.PREBUFFER_IDLING, state)
        if self.gate_active and self.phase != self.RAMPING_UP:
            self.gate_active = False
            self._events.append((state.now_s, "tiktok_playback_gate_lifted", ""))


# --- oracle ---------------------------------------------------------------------


@dataclass(frozen=True)
class OracleKnowledge:
    """Exact per-video view times and the true throughput trace."""

    view_times_s: tuple[float, ...]
    trace: NetworkTrace


def viewing_chunk_list(
    knowledge: OracleKnowledge,
    manifest: Manifest,
    playback_tick_s: float = 1e-3,
) -> list[ChunkId]:
    """The exact ordered list of chunks the session will play."""
    out: list[ChunkId] = []
    for i in range(1, len(manifest) + 1):
        video = manifest.video(i)
        view = video.duration_s
        if i - 1 < len(knowledge.view_times_s):
            view = knowledge.view_times_s[i - 1]
        view = min(max(view, playback_tick_s), video.duration_s)
        for j in range(1, video.chunk_of_time(view) + 1):
            out.append(ChunkId(i, j))
    return out


class OracleScheduler(SchedulerBase):
    """Clairvoyant reference: downloads the viewing sequence in order, with
    bitrates from a model-predictive search over the next few viewing chunks
    using the true trace. Skips any chunk that could not start playing before
    the session ends, so nothing downloaded is ever wasted."""

    name = "oracle"

    def __init__(
        self,
        manifest: Manifest,
        knowledge: OracleKnowledge,
        weights: QoeWeights | None = None,
        horizon_chunks: int = 5,
        session: SessionConfig | None = None,
    ):
        super().__init__(manifest)
        self.knowledge = knowledge
        self.weights = weights or QoeWeights()
        self.horizon_chunks = horizon_chunks
        self.session = session or SessionConfig()
        self.viewing = viewing_chunk_list(
            knowledge, manifest, self.session.playback_tick_s
        )
        self._viewing_index = {c: k for k, c in enumerate(self.viewing)}
        self._views = [
            min(
                max(
                    knowledge.view_times_s[i - 1]
                    if i - 1 < len(knowledge.view_times_s)
                    else manifest.video(i).duration_s,
                    self.session.playback_tick_s,
                ),
                manifest.video(i).duration_s,
            )
            for i in range(1, len(manifest) + 1)
        ]

    def watch_seconds(self, c: ChunkId) -> float:
        video = self.manifest.video(c.video)
        return min(video.chunk_end_s(c.chunk), self._views[c.video - 1]) - video.chunk_start_s(c.chunk)

    def _play_end_before(self, state: PlayerState, first_pending: ChunkId) -> float:
        """Wall-clock time the chunk before ``first_pending`` finishes playing,
        given every earlier viewing chunk is already buffered."""
        if state.stalled and ChunkId(state.current_video, state.current_chunk) == first_pending:
            return state.now_s
        current = ChunkId(state.current_video, state.current_chunk)
        t = state.now_s + (self.watch_seconds(current) - state.offset_s)
        for c in self.viewing[self._viewing_index[current] + 1 :]:
            if c == first_pending:
                break
            t += self.watch_seconds(c)
        return t

    def next_action(self, state: PlayerState) -> DownloadAction | Idle:
        pending = [c for c in self.viewing if not state.is_buffered(c)]
        if not pending or state.current_video is None:
            return Idle("buffer_full")
        play_end = self._play_end_before(state, pending[0])
        horizon = pending[: self.horizon_chunks]
        levels = self._best_levels(state, horizon, play_end)
        first = horizon[0]
        size = chunk_bytes(
            self.manifest.video(first.video), first.chunk, levels[0], self.manifest.ladder
        )
        finish = self.knowledge.trace.download_finish_s(size, state.now_s)
        if max(play_end, finish) >= self.session.session_length_s:
            return Idle("buffer_full")
        return DownloadAction(
            chunk=first, level=levels[0], size_bytes=size, target_finish_s=finish
        )

    def _best_levels(
        self, state: PlayerState, horizon: list[ChunkId], play_end: float
    ) -> tuple[int, ...]:
        """Depth-first search over ladder assignments, sharing prefix download
        times; highest total wins, ties to the lexicographically smallest."""
        ladder = self.manifest.ladder
        trace = self.knowledge.trace
        end = self.session.session_length_s
        buffered_levels = {c: b.level for c, b in state.buffered.items()}
        n = len(horizon)
        watches = [self.watch_seconds(c) for c in horizon]
        sizes = [
            [
                chunk_bytes(self.manifest.video(c.video), c.chunk, lvl, ladder)
                for lvl in range(len(ladder))
            ]
            for c in horizon
        ]
        best: tuple[float, tuple[int, ...]] | None = None

        def consider(score: float, levels: tuple[int, ...]) -> None:
            nonlocal best
            full = levels + (0,) * (n - len(levels))
            if best is None or score > best[0]:
                best = (score, full)

        def prev_level_for(c: ChunkId, last: tuple[int, int, int] | None) -> int | None:
            if last is not None and last[0] == c.video and last[1] == c.chunk - 1:
                return last[2]
            if c.chunk > 1:
                return buffered_levels.get(ChunkId(c.video, c.chunk - 1))
            return None

        def dfs(idx, t, prev_end, acc, last, levels):
            if idx == n:
                consider(acc, levels)
                return
            c = horizon[idx]
            for lvl in range(len(ladder)):
                finish = trace.download_finish_s(sizes[idx][lvl], t)
                start = max(prev_end, finish)
                if start >= end:
                    consider(acc, levels + (lvl,))
                    continue
                rate = ladder.rate(lvl)
                gain = rate * watches[idx] - self.weights.mu * (start - prev_end)
                prev = prev_level_for(c, last)
                if prev is not None:
                    gain -= self.weights.eta * abs(rate - ladder.rate(prev))
                dfs(
                    idx + 1,
                    finish,
                    start + watches[idx],
                    acc + gain,
                    (c.video, c.chunk, lvl),
                    levels + (lvl,),
                )

        dfs(0, state.now_s, play_end, 0.0, None, ())
        return best[1]


def oracle_schedule(
    knowledge: OracleKnowledge,
    manifest: Manifest,
    weights: QoeWeights | None = None,
    config: SessionConfig | None = None,
) -> list[tuple[ChunkId, int]]:
    """The oracle's full download plan for a session: (chunk, level) in
    download order, obtained by dry-running the session."""
    from .simulator import run_session

    adapter = OracleScheduler(manifest, knowledge, weights, session=config)
    log = run_session(adapter, manifest, knowledge.trace, knowledge.view_times_s, config)
    return [(r.chunk, r.level) for r in log.records]
