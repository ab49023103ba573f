"""Core value types shared across the short-video streaming engine.

Conventions used throughout the package:

* video and chunk indices are 1-based, written ``(i, j)``;
* bitrates are megabits per second (Mbps), sizes are bytes, times are
  seconds;
* a video of duration ``d`` cut into ``T``-second chunks has
  ``ceil(d / T)`` chunks, the last of which may be shorter than ``T``.

All types here are plain values; :class:`PlayerState` is the one mutable
exception and is owned by exactly one simulation run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

MBIT = 1_000_000.0

# Tolerance for "duration is an exact multiple of the chunk length" checks;
# keeps ceil() from inventing an empty trailing chunk out of float noise.
_CEIL_FUZZ = 1e-9


class ManifestError(ValueError):
    """A manifest (or one of its parts) violates an invariant.

    ``violations`` holds one human-readable string per problem, each naming
    the offending video or field.
    """

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True, order=True)
class ChunkId:
    """1-based (video, chunk) pair identifying one downloadable chunk."""

    video: int
    chunk: int

    def __post_init__(self) -> None:
        if self.video < 1 or self.chunk < 1:
            raise ValueError(f"chunk ids are 1-based, got {(self.video, self.chunk)}")

    def __str__(self) -> str:
        return f"c{self.video}.{self.chunk}"


@dataclass(frozen=True)
class BitrateLadder:
    """Available encodings, ascending in rate.

    ``levels_mbps`` is indexed by 0-based ladder level; ``labels`` are
    display names and default to the rate itself.
    """

    levels_mbps: tuple[float, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.labels:
            object.__setattr__(
                self, "labels", tuple(f"{r:g}Mbps" for r in self.levels_mbps)
            )

    def __len__(self) -> int:
        return len(self.levels_mbps)

    def rate(self, level: int) -> float:
        if not 0 <= level < len(self.levels_mbps):
            raise IndexError(f"ladder level {level} out of range")
        return self.levels_mbps[level]

    @property
    def lowest(self) -> int:
        return 0

    @property
    def highest(self) -> int:
        return len(self.levels_mbps) - 1

    def violations(self) -> list[str]:
        out = []
        if not self.levels_mbps:
            out.append("ladder: empty")
            return out
        if any(r <= 0 for r in self.levels_mbps):
            out.append("ladder: non-positive rate")
        if any(b <= a for a, b in zip(self.levels_mbps, self.levels_mbps[1:])):
            out.append("ladder not ascending")
        return out


def _freeze_override(raw: Mapping[tuple[int, int], int] | None):
    return dict(raw) if raw else {}


@dataclass(frozen=True)
class VideoSpec:
    """One video in the playlist, cut into fixed-duration chunks.

    Chunk sizes default to a constant-bitrate model
    (``rate * chunk_seconds / 8``); ``bytes_override`` maps
    ``(chunk_index, ladder_level)`` to an explicit byte count for tests or
    measured tables.
    """

    id: str
    duration_s: float
    chunk_duration_s: float = 5.0
    bytes_override: Mapping[tuple[int, int], int] = field(default_factory=dict)

    @property
    def num_chunks(self) -> int:
        return max(1, math.ceil(self.duration_s / self.chunk_duration_s - _CEIL_FUZZ))

    def chunk_seconds(self, j: int) -> float:
        """Playback duration of chunk ``j`` (the last chunk may be short)."""
        self._check_index(j)
        if j < self.num_chunks:
            return self.chunk_duration_s
        return self.duration_s - (self.num_chunks - 1) * self.chunk_duration_s

    def chunk_start_s(self, j: int) -> float:
        self._check_index(j)
        return (j - 1) * self.chunk_duration_s

    def chunk_end_s(self, j: int) -> float:
        self._check_index(j)
        return min(j * self.chunk_duration_s, self.duration_s)

    def chunk_of_time(self, t: float) -> int:
        """Index of the last chunk touched by watching ``t`` seconds:
        ``ceil(t / T)``, with t=0 counting as chunk 1 and boundary times
        belonging to the chunk that just finished."""
        if t <= 0:
            return 1
        return min(self.num_chunks, max(1, math.ceil(t / self.chunk_duration_s - _CEIL_FUZZ)))

    def violations(self) -> list[str]:
        out = []
        if self.duration_s <= 0:
            out.append(f"video '{self.id}': non-positive duration")
        if self.chunk_duration_s <= 0:
            out.append(f"video '{self.id}': non-positive chunk duration")
        for (j, level), b in self.bytes_override.items():
            if b <= 0:
                out.append(f"video '{self.id}': non-positive byte override at ({j},{level})")
        return out

    def _check_index(self, j: int) -> None:
        if not 1 <= j <= self.num_chunks:
            raise IndexError(f"video '{self.id}' has no chunk {j}")


@dataclass(frozen=True)
class Manifest:
    """Ordered playlist plus the shared bitrate ladder."""

    videos: tuple[VideoSpec, ...]
    ladder: BitrateLadder
    group_size: int = 10

    def video(self, i: int) -> VideoSpec:
        if not 1 <= i <= len(self.videos):
            raise IndexError(f"no video {i} in manifest of {len(self.videos)}")
        return self.videos[i - 1]

    def __len__(self) -> int:
        return len(self.videos)

    def chunk_ids(self) -> list[ChunkId]:
        return [
            ChunkId(i, j)
            for i, v in enumerate(self.videos, start=1)
            for j in range(1, v.num_chunks + 1)
        ]


def chunk_bytes(video: VideoSpec, j: int, level: int, ladder: BitrateLadder) -> int:
    """Size in bytes of chunk ``j`` of ``video`` at ladder index ``level``."""
    video._check_index(j)
    rate = ladder.rate(level)
    override = video.bytes_override.get((j, level))
    if override is not None:
        return override
    return int(round(rate * MBIT * video.chunk_seconds(j) / 8.0))


def manifest_violations(m: Manifest) -> list[str]:
    out: list[str] = []
    if not m.videos:
        out.append("manifest: empty playlist")
    if m.group_size < 1:
        out.append("manifest: group_size must be >= 1")
    out.extend(m.ladder.violations())
    for v in m.videos:
        out.extend(v.violations())
    return out


def validate_manifest(m: Manifest) -> Manifest:
    """Return ``m`` unchanged, or raise :class:`ManifestError` listing every
    violated invariant."""
    violations = manifest_violations(m)
    if violations:
        raise ManifestError(violations)
    return m


def manifest_to_dict(m: Manifest) -> dict:
    return {
        "group_size": m.group_size,
        "ladder_mbps": list(m.ladder.levels_mbps),
        "videos": [
            {
                "id": v.id,
                "duration_s": v.duration_s,
                "chunk_duration_s": v.chunk_duration_s,
                **(
                    {
                        "bytes_override": {
                            f"{j},{lvl}": b for (j, lvl), b in sorted(v.bytes_override.items())
                        }
                    }
                    if v.bytes_override
                    else {}
                ),
            }
            for v in m.videos
        ],
    }


def manifest_from_dict(raw: Mapping) -> Manifest:
    videos = []
    for entry in raw["videos"]:
        override = {}
        for key, b in entry.get("bytes_override", {}).items():
            j, lvl = key.split(",")
            override[(int(j), int(lvl))] = int(b)
        videos.append(
            VideoSpec(
                id=str(entry["id"]),
                duration_s=float(entry["duration_s"]),
                chunk_duration_s=float(entry.get("chunk_duration_s", 5.0)),
                bytes_override=override,
            )
        )
    m = Manifest(
        videos=tuple(videos),
        ladder=BitrateLadder(tuple(float(r) for r in raw["ladder_mbps"])),
        group_size=int(raw.get("group_size", 10)),
    )
    return validate_manifest(m)


def load_manifest(path: str) -> Manifest:
    with open(path) as f:
        return manifest_from_dict(json.load(f))


def save_manifest(m: Manifest, path: str) -> None:
    with open(path, "w") as f:
        json.dump(manifest_to_dict(m), f, indent=2, sort_keys=True)
        f.write("\n")


# --- player-side session state -----------------------------------------------


@dataclass(frozen=True)
class BufferedChunk:
    chunk: ChunkId
    level: int
    size_bytes: int


@dataclass(frozen=True)
class CompletedDownload:
    chunk: ChunkId
    level: int
    size_bytes: int
    start_s: float
    finish_s: float

    @property
    def seconds(self) -> float:
        return self.finish_s - self.start_s

    @property
    def mbps(self) -> float:
        """Average observed rate, request latency included."""
        return self.size_bytes * 8.0 / self.seconds / MBIT


@dataclass
class InFlightDownload:
    chunk: ChunkId
    level: int
    size_bytes: int
    start_s: float
    finish_s: float
    target_finish_s: float | None = None
    deadline_fired: bool = False


@dataclass
class PlayerState:
    """Mutable per-session player state, owned by one simulation run.

    ``current_chunk`` is the chunk being played, or the chunk playback is
    stalled on. ``offset_s`` is the playback offset inside that chunk and is
    only meaningful while not stalled. A session begins stalled on chunk
    (1, 1) at time zero.
    """

    now_s: float = 0.0
    current_video: int | None = 1
    current_chunk: int = 1
    offset_s: float = 0.0
    stalled: bool = True
    stall_started_s: float = 0.0
    rebuffer_total_s: float = 0.0
    buffered: dict[ChunkId, BufferedChunk] = field(default_factory=dict)
    in_flight: InFlightDownload | None = None
    download_history: list[CompletedDownload] = field(default_factory=list)
    play_started_videos: set[int] = field(default_factory=set)

    def is_buffered(self, c: ChunkId) -> bool:
        return c in self.buffered

    def is_idle(self) -> bool:
        return self.in_flight is None

    def buffered_chunks_of(self, video: int) -> set[int]:
        return {c.chunk for c in self.buffered if c.video == video}

    @property
    def playing(self) -> tuple[ChunkId, float] | None:
        """(chunk, offset) currently rendering, or None when stalled/done."""
        if self.current_video is None or self.stalled:
            return None
        return ChunkId(self.current_video, self.current_chunk), self.offset_s
