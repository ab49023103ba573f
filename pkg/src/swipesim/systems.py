"""Run named systems against traces: the glue between schedulers and engine.

Three systems are wired up:

* ``swipeaware`` - the horizon scheduler driven by swipe distributions;
* ``tiktok``     - the fixed-rule byte-chunked state machine;
* ``oracle``     - the clairvoyant reference (exact swipes, true trace).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .abr import QoeWeights
from .baselines import OracleKnowledge, OracleScheduler, TikTokConfig, TikTokState
from .domain import Manifest
from .scheduler import SchedulerConfig, SwipeAwareScheduler
from .simulator import NetworkTrace, SessionConfig, SessionLog, run_session
from .swipes import SwipePdf, SwipePmf, pdf_to_pmf

SYSTEMS = ("swipeaware", "tiktok", "oracle")


@dataclass(frozen=True)
class RunConfig:
    session: SessionConfig = field(default_factory=SessionConfig)
    weights: QoeWeights = field(default_factory=QoeWeights)
    scheduler: SchedulerConfig | None = None
    tiktok: TikTokConfig | None = None
    oracle_horizon_chunks: int = 5


def pmfs_from_distributions(
    manifest: Manifest, entries: Mapping[str, Mapping]
) -> list[SwipePmf]:
    """Per-video swipe pmfs for the manifest's chunking, from distribution
    file entries keyed by video id (either a direct pmf or a continuous pdf
    that gets re-binned)."""
    pmfs = []
    for i in range(1, len(manifest) + 1):
        video = manifest.video(i)
        entry = entries.get(video.id)
        if entry is None:
            raise ValueError(f"no swipe distribution for video '{video.id}'")
        if "pmf" in entry:
            mass = [float(p) for p in entry["pmf"]]
            if len(mass) != video.num_chunks:
                raise ValueError(
                    f"pmf for '{video.id}' has {len(mass)} bins, "
                    f"video has {video.num_chunks} chunks"
                )
            pmfs.append(SwipePmf(video_index=i, mass=tuple(mass)))
        elif "pdf" in entry:
            pdf = SwipePdf(
                video_index=i,
                grid_step_s=float(entry["pdf_grid_s"]),
                density=tuple(float(v) for v in entry["pdf"]),
            )
            pmfs.append(pdf_to_pmf(pdf, video))
        else:
            raise ValueError(f"distribution for '{video.id}' has neither pmf nor pdf")
    return pmfs


def align_views(manifest: Manifest, swipe_trace: Sequence[Mapping]) -> list[float]:
    """Ground-truth view times in playlist order; the trace must list videos
    in manifest order (missing tail entries mean watched to completion)."""
    views = []
    for i, entry in enumerate(swipe_trace, start=1):
        if i > len(manifest):
            break
        vid = manifest.video(i)
        if str(entry["video_id"]) != vid.id:
            raise ValueError(
                f"swipe trace entry {i} is for '{entry['video_id']}', "
                f"manifest has '{vid.id}'"
            )
        views.append(float(entry["view_time_s"]))
    return views


def build_system(
    name: str,
    manifest: Manifest,
    *,
    pmfs: Sequence[SwipePmf] | None = None,
    trace: NetworkTrace | None = None,
    views: Sequence[float] | None = None,
    config: RunConfig | None = None,
):
    config = config or RunConfig()
    if name == "swipeaware":
        if pmfs is None:
            raise ValueError("swipeaware needs swipe pmfs")
        return SwipeAwareScheduler(manifest, pmfs, config.scheduler)
    if name == "tiktok":
        return TikTokState(manifest, config.tiktok)
    if name == "oracle":
        if trace is None or views is None:
            raise ValueError("oracle needs the true trace and view times")
        knowledge = OracleKnowledge(view_times_s=tuple(views), trace=trace)
        return OracleScheduler(
            manifest,
            knowledge,
            config.weights,
            horizon_chunks=config.oracle_horizon_chunks,
            session=config.session,
        )
    raise ValueError(f"unknown system '{name}' (choose from {SYSTEMS})")


def run_system_session(
    name: str,
    manifest: Manifest,
    trace: NetworkTrace,
    views: Sequence[float],
    *,
    pmfs: Sequence[SwipePmf] | None = None,
    config: RunConfig | None = None,
    decision_hook: Callable | None = None,
) -> SessionLog:
    config = config or RunConfig()
    adapter = build_system(
        name, manifest, pmfs=pmfs, trace=trace, views=views, config=config
    )
    return run_session(
        adapter, manifest, trace, views, config.session, decision_hook=decision_hook
    )
