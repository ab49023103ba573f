"""Deterministic synthetic workloads: manifests, swipe densities, traces.

Swipe behavior is generated as a continuous viewing-time density per video
(viewers mostly leave either shortly after a video starts or near its end,
with per-video mode mixes), so the same underlying behavior can be re-binned
for any chunk duration. Ground-truth session traces are sampled from those
densities; network traces are constant, stepped, or random-walk
piecewise-constant rates. Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .domain import BitrateLadder, Manifest, VideoSpec, save_manifest
from .simulator import NetworkTrace, save_trace_csv
from .swipes import SwipePdf

GRID_STEP_S = 0.1

SWIPE_MODES = ("early", "late", "bimodal", "uniform")


@dataclass(frozen=True)
class GeneratorParams:
    n_videos: int = 60
    duration_range_s: tuple[float, float] = (8.0, 40.0)
    chunk_duration_s: float = 5.0
    ladder_mbps: tuple[float, ...] = (1.0, 1.75, 2.5, 4.3)
    group_size: int = 10
    n_sessions: int = 20
    n_traces: int = 6
    trace_length_s: float = 700.0
    rate_range_mbps: tuple[float, float] = (1.0, 3.0)
    mode_weights: tuple[float, ...] = (0.3, 0.3, 0.25, 0.15)  # early/late/bimodal/uniform


def gen_manifest(rng: np.random.Generator, params: GeneratorParams) -> Manifest:
    lo, hi = params.duration_range_s
    videos = []
    for k in range(params.n_videos):
        duration = round(float(rng.uniform(lo, hi)), 1)
        videos.append(
            VideoSpec(
                id=f"v{k + 1:03d}",
                duration_s=duration,
                chunk_duration_s=params.chunk_duration_s,
            )
        )
    return Manifest(
        videos=tuple(videos),
        ladder=BitrateLadder(params.ladder_mbps),
        group_size=params.group_size,
    )


def _gaussian_bump(grid: np.ndarray, center: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((grid - center) / sigma) ** 2)


def _normalized(density: np.ndarray, step: float) -> np.ndarray:
    total = float(np.trapezoid(density, dx=step))
    if total <= 0:
        raise ValueError("degenerate density")
    return density / total


def swipe_density(
    duration_s: float, mode: str, grid_step_s: float = GRID_STEP_S
) -> np.ndarray:
    """Viewing-time density for one video. Late mode keeps at least 60% of
    its mass in the final fifth of the video; early mode concentrates shortly
    after playback begins."""
    n = int(round(duration_s / grid_step_s)) + 1
    grid = np.arange(n) * grid_step_s
    early = _normalized(np.exp(-grid / (0.15 * duration_s)), grid_step_s)
    tail = _normalized(
        _gaussian_bump(grid, 0.95 * duration_s, 0.04 * duration_s), grid_step_s
    )
    flat = _normalized(np.ones(n), grid_step_s)
    if mode == "early":
        density = 0.70 * early + 0.20 * tail + 0.10 * flat
    elif mode == "late":
        density = 0.72 * tail + 0.28 * flat
    elif mode == "bimodal":
        density = 0.40 * early + 0.40 * tail + 0.20 * flat
    elif mode == "uniform":
        density = flat
    else:
        raise ValueError(f"unknown swipe mode '{mode}'")
    return _normalized(density, grid_step_s)


def gen_swipe_pdfs(
    rng: np.random.Generator, manifest: Manifest, params: GeneratorParams
) -> tuple[list[SwipePdf], list[str]]:
    pdfs = []
    modes = []
    weights = np.asarray(params.mode_weights, dtype=float)
    weights = weights / weights.sum()
    for i in range(1, len(manifest) + 1):
        video = manifest.video(i)
        mode = SWIPE_MODES[int(rng.choice(len(SWIPE_MODES), p=weights))]
        modes.append(mode)
        density = swipe_density(video.duration_s, mode)
        pdfs.append(
            SwipePdf(
                video_index=i,
                grid_step_s=GRID_STEP_S,
                density=tuple(density.tolist()),
            )
        )
    return pdfs, modes


def sample_view_time(rng: np.random.Generator, pdf: SwipePdf) -> float:
    """Inverse-CDF sample from a gridded density."""
    dens = np.asarray(pdf.density)
    step = pdf.grid_step_s
    cell = (dens[:-1] + dens[1:]) / 2.0 * step
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    cum = cum / cum[-1]
    grid = np.arange(len(dens)) * step
    u = float(rng.random())
    return float(np.interp(u, cum, grid))


def gen_session_views(
    rng: np.random.Generator, pdfs: list[SwipePdf]
) -> list[float]:
    return [round(sample_view_time(rng, pdf), 3) for pdf in pdfs]


def gen_network_trace(
    rng: np.random.Generator, kind: str, params: GeneratorParams
) -> NetworkTrace:
    lo, hi = params.rate_range_mbps
    length = int(params.trace_length_s)
    if kind == "constant":
        rate = round(float(rng.uniform(lo, hi)), 3)
        return NetworkTrace(segments=((0.0, rate),))
    if kind == "step":
        r1 = round(float(rng.uniform(lo, (lo + hi) / 2)), 3)
        r2 = round(float(rng.uniform((lo + hi) / 2, hi)), 3)
        period = int(rng.integers(20, 61))
        segments = []
        t, use_first = 0, True
        while t < length:
            segments.append((float(t), r1 if use_first else r2))
            use_first = not use_first
            t += period
        return NetworkTrace(segments=tuple(segments))
    if kind == "random_walk":
        rate = float(rng.uniform(lo, hi))
        segments = []
        for t in range(length):
            rate = float(np.clip(rate + rng.normal(0.0, 0.15), lo * 0.8, hi * 1.2))
            segments.append((float(t), round(rate, 3)))
        return NetworkTrace(segments=tuple(segments))
    raise ValueError(f"unknown trace kind '{kind}'")


TRACE_KINDS = ("constant", "step", "random_walk")


@dataclass
class Workload:
    """Generated corpus held in memory; ``write`` lays it out on disk."""

    manifest: Manifest
    pdfs: list[SwipePdf]
    modes: list[str]
    traces: list[NetworkTrace]
    trace_names: list[str]
    sessions: list[list[float]] = field(default_factory=list)

    def write(self, out_dir: str) -> dict[str, object]:
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "swipes"), exist_ok=True)
        manifest_path = os.path.join(out_dir, "manifest.json")
        save_manifest(self.manifest, manifest_path)
        dist_path = os.path.join(out_dir, "swipe_distributions.json")
        with open(dist_path, "w") as f:
            json.dump(
                [
                    {
                        "video_id": self.manifest.video(pdf.video_index).id,
                        "pdf_grid_s": pdf.grid_step_s,
                        "pdf": list(pdf.density),
                        "mode": mode,
                    }
                    for pdf, mode in zip(self.pdfs, self.modes)
                ],
                f,
            )
            f.write("\n")
        trace_paths = []
        for name, trace in zip(self.trace_names, self.traces):
            p = os.path.join(out_dir, "traces", f"{name}.csv")
            save_trace_csv(trace, p)
            trace_paths.append(p)
        swipe_paths = []
        for k, views in enumerate(self.sessions):
            p = os.path.join(out_dir, "swipes", f"session_{k:02d}.json")
            with open(p, "w") as f:
                json.dump(
                    [
                        {"video_id": self.manifest.video(i + 1).id, "view_time_s": v}
                        for i, v in enumerate(views)
                    ],
                    f,
                )
                f.write("\n")
            swipe_paths.append(p)
        return {
            "manifest": manifest_path,
            "swipe_distributions": dist_path,
            "traces": trace_paths,
            "swipe_traces": swipe_paths,
        }


def gen_workload(seed: int, params: GeneratorParams | None = None) -> Workload:
    """The full deterministic corpus for one seed."""
    params = params or GeneratorParams()
    rng = np.random.default_rng(seed)
    manifest = gen_manifest(rng, params)
    pdfs, modes = gen_swipe_pdfs(rng, manifest, params)
    traces = []
    names = []
    for k in range(params.n_traces):
        kind = TRACE_KINDS[k % len(TRACE_KINDS)]
        traces.append(gen_network_trace(rng, kind, params))
        names.append(f"{kind}_{k:02d}")
    sessions = [gen_session_views(rng, pdfs) for _ in range(params.n_sessions)]
    return Workload(
        manifest=manifest,
        pdfs=pdfs,
        modes=modes,
        traces=traces,
        trace_names=names,
        sessions=sessions,
    )
