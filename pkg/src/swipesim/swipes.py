"""Swipe-time distributions and the transforms the prebuffer scheduler needs.

The discrete model: a viewer of video ``i`` watches some number of chunks
``k_i`` before swiping (or finishing; completion is folded into the final
entry). The play position of any chunk is then determined by how many chunks
played before it, so the central object is the *watch-count distribution* of
a chunk: the probability that exactly ``n`` chunks play before it starts.

First chunks of successive videos obey a convolution recursion (the count
before video ``i`` is the count before video ``i-1`` plus ``k_{i-1}``);
non-first chunks are a shift of their video's first-chunk distribution,
scaled by the probability the viewer has not swiped earlier in the video.

A continuous variant works on uniform time grids with explicit point masses
so that the degenerate "session starts now" case stays exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import ChunkId, VideoSpec

_MASS_TOL = 1e-9
_PDF_TOL = 1e-6


@dataclass(frozen=True)
class SwipePmf:
    """Per-video distribution of chunks watched before leaving the video.

    ``mass[j-1]`` is the probability the viewer leaves after watching exactly
    ``j`` chunks. Watching to the end counts as leaving after the last chunk.
    """

    video_index: int
    mass: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.mass:
            raise ValueError("empty swipe pmf")
        if any(p < 0 for p in self.mass):
            raise ValueError("negative mass in swipe pmf")
        total = math.fsum(self.mass)
        if abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"swipe pmf sums to {total}, expected 1")

    @property
    def num_chunks(self) -> int:
        return len(self.mass)

    def survival(self, j: int) -> float:
        """P(viewer watches chunk j) = 1 - sum of mass before j."""
        return math.fsum(self.mass[j - 1 :])

    def as_mass(self) -> dict[int, float]:
        return {j: p for j, p in enumerate(self.mass, start=1) if p > 0}


@dataclass(frozen=True)
class SwipePdf:
    """Continuous per-video viewing-time density on a uniform grid.

    ``density[k]`` is the value at ``k * grid_step_s``; the trapezoidal
    integral over [0, duration] must be 1.
    """

    video_index: int
    grid_step_s: float
    density: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.grid_step_s <= 0:
            raise ValueError("grid step must be positive")
        if len(self.density) < 2:
            raise ValueError("pdf needs at least two grid points")
        if any(v < 0 for v in self.density):
            raise ValueError("negative density")
        total = float(np.trapezoid(self.density, dx=self.grid_step_s))
        if abs(total - 1.0) > _PDF_TOL:
            raise ValueError(f"pdf integrates to {total}, expected 1")

    @property
    def duration_s(self) -> float:
        return (len(self.density) - 1) * self.grid_step_s

    def cdf_at(self, t: float) -> float:
        """Trapezoidal integral of the density over [0, t]."""
        grid = np.arange(len(self.density)) * self.grid_step_s
        cum = np.concatenate(
            [[0.0], np.cumsum((np.asarray(self.density[:-1]) + np.asarray(self.density[1:])) / 2.0 * self.grid_step_s)]
        )
        return float(np.interp(t, grid, cum))


@dataclass(frozen=True)
class WatchCountDistribution:
    """Distribution of the number of chunks played before a target chunk.

    For non-first chunks the total mass is the probability the chunk is
    reached at all, not 1.
    """

    target: ChunkId | None
    mass: Mapping[int, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mass", dict(self.mass))
        if any(n < 0 for n in self.mass):
            raise ValueError("negative watch count")
        if any(p < -_MASS_TOL for p in self.mass.values()):
            raise ValueError("negative probability mass")
        if self.total() > 1.0 + _MASS_TOL:
            raise ValueError("watch-count mass exceeds 1")

    def total(self) -> float:
        return math.fsum(self.mass.values())


@dataclass(frozen=True)
class PlayStartPdf:
    """Continuous play-start-time density of a chunk, plus point masses.

    The integral of ``density`` plus the point masses equals
    ``reach_probability``. Point masses keep the exact cases exact (the very
    first chunk starts at t=0 with probability one, and pure shifts of it
    stay atomic).
    """

    target: ChunkId | None
    grid_step_s: float
    density: tuple[float, ...]
    point_masses: tuple[tuple[float, float], ...] = ()
    reach_probability: float = 1.0

    def __post_init__(self) -> None:
        if self.grid_step_s <= 0:
            raise ValueError("grid step must be positive")
        if any(v < 0 for v in self.density):
            raise ValueError("negative density")
        if any(m < 0 for _, m in self.point_masses):
            raise ValueError("negative point mass")
        total = self.integral()
        if abs(total - self.reach_probability) > _PDF_TOL:
            raise ValueError(
                f"density integrates to {total}, reach says {self.reach_probability}"
            )

    def integral(self) -> float:
        dens = 0.0
        if len(self.density) >= 2:
            dens = float(np.trapezoid(self.density, dx=self.grid_step_s))
        return dens + math.fsum(m for _, m in self.point_masses)


# --- sample and file ingestion ------------------------------------------------


def pmf_from_samples(
    swipe_times_s: Sequence[float], video: VideoSpec, video_index: int = 0
) -> SwipePmf:
    """Histogram view-time samples into per-chunk swipe probabilities.

    A sample of ``t`` seconds means the viewer left during chunk
    ``ceil(t / T)`` (t=0 counts as chunk 1); watching to completion is
    recorded as ``duration_s`` and lands in the final chunk.
    """
    if not swipe_times_s:
        raise ValueError("no swipe samples")
    counts = [0] * video.num_chunks
    for t in swipe_times_s:
        if t < 0 or t > video.duration_s:
            raise ValueError(f"swipe sample {t} outside [0, {video.duration_s}]")
        counts[video.chunk_of_time(t) - 1] += 1
    n = len(swipe_times_s)
    return SwipePmf(video_index=video_index, mass=tuple(c / n for c in counts))


def pdf_to_pmf(pdf: SwipePdf, video: VideoSpec) -> SwipePmf:
    """Bin a continuous viewing-time density into per-chunk swipe mass."""
    edges = [video.chunk_end_s(j) for j in range(1, video.num_chunks + 1)]
    cdf = [pdf.cdf_at(min(e, pdf.duration_s)) for e in edges]
    total = cdf[-1]
    if total <= 0:
        raise ValueError("pdf has no mass over the video duration")
    mass = []
    prev = 0.0
    for c in cdf:
        mass.append(max(c - prev, 0.0) / total)
        prev = c
    # guard against float drift: renormalize exactly
    s = math.fsum(mass)
    mass = [p / s for p in mass]
    return SwipePmf(video_index=pdf.video_index, mass=tuple(mass))


def load_swipe_distributions(path: str) -> dict[str, dict]:
    """Read a distribution file: a JSON array of per-video entries, each
    either {"video_id", "pmf": [...]} or {"video_id", "pdf_grid_s", "pdf": [...]}."""
    with open(path) as f:
        raw = json.load(f)
    if isinstance(raw, dict):
        raw = [raw]
    out = {}
    for entry in raw:
        out[str(entry["video_id"])] = entry
    return out


def load_swipe_trace(path: str) -> list[dict]:
    """Read one session's ground truth: JSON list of {"video_id", "view_time_s"}."""
    with open(path) as f:
        raw = json.load(f)
    return [
        {"video_id": str(e["video_id"]), "view_time_s": float(e["view_time_s"])}
        for e in raw
    ]


# --- discrete machinery ---------------------------------------------------------


def convolve(a: Mapping[int, float], b: Mapping[int, float]) -> dict[int, float]:
    """Convolution of two nonnegative count masses: out[n] = sum a[i] b[n-i]."""
    out: dict[int, float] = {}
    for i, pa in a.items():
        if pa == 0:
            continue
        for k, pb in b.items():
            if pb == 0:
                continue
            out[i + k] = out.get(i + k, 0.0) + pa * pb
    return out


def first_chunk_dist(i: int, pmfs: Sequence[SwipePmf]) -> WatchCountDistribution:
    """Watch-count distribution of chunk (i, 1).

    Recursion: the count before video ``i`` is the count before video
    ``i-1`` convolved with video ``i-1``'s swipe pmf; the base case is a unit
    mass at zero. Needs pmfs for videos 1..i-1.
    """
    if i < 1:
        raise ValueError("video index must be >= 1")
    if len(pmfs) < i - 1:
        raise ValueError(f"need pmfs for videos 1..{i - 1}, got {len(pmfs)}")
    mass: dict[int, float] = {0: 1.0}
    for l in range(1, i):
        mass = convolve(mass, pmfs[l - 1].as_mass())
    return WatchCountDistribution(target=ChunkId(i, 1), mass=mass)


def nonfirst_chunk_dist(
    first: WatchCountDistribution, pmf_i: SwipePmf, j: int
) -> WatchCountDistribution:
    """Watch-count distribution of chunk (i, j) for j >= 2.

    The viewer must watch the first j-1 chunks of the video, so the
    first-chunk distribution shifts right by j-1 and scales by the survival
    probability past those chunks.
    """
    if j < 2:
        raise ValueError("use first_chunk_dist for j = 1")
    survival = pmf_i.survival(j)
    target = ChunkId(first.target.video, j) if first.target else None
    if survival <= 0:
        return WatchCountDistribution(target=target, mass={})
    mass = {n + (j - 1): p * survival for n, p in first.mass.items() if p > 0}
    return WatchCountDistribution(target=target, mass=mass)


# --- continuous machinery --------------------------------------------------------


def _require_same_grid(a_step: float, b_step: float) -> None:
    if abs(a_step - b_step) > 1e-12:
        raise ValueError(f"grid steps differ: {a_step} vs {b_step}")


def play_start_pdf_first(i: int, pdfs: Sequence[SwipePdf]) -> PlayStartPdf:
    """Play-start density of chunk (i, 1) on the shared grid.

    The first video starts at t=0 exactly (a point mass); later videos
    accumulate the viewing times of their predecessors by grid convolution.
    """
    if i < 1:
        raise ValueError("video index must be >= 1")
    if len(pdfs) < i - 1:
        raise ValueError(f"need pdfs for videos 1..{i - 1}, got {len(pdfs)}")
    if i == 1:
        step = pdfs[0].grid_step_s if pdfs else 0.1
        return PlayStartPdf(
            target=ChunkId(1, 1),
            grid_step_s=step,
            density=(),
            point_masses=((0.0, 1.0),),
            reach_probability=1.0,
        )
    step = pdfs[0].grid_step_s
    dens = np.asarray(pdfs[0].density, dtype=float)
    for l in range(2, i):
        nxt = pdfs[l - 1]
        _require_same_grid(step, nxt.grid_step_s)
        dens = np.convolve(dens, np.asarray(nxt.density, dtype=float)) * step
    total = float(np.trapezoid(dens, dx=step))
    if total > 0:
        # Grid convolution loses a sliver of mass at the edges; renormalize so
        # reach stays exactly 1 for first chunks.
        dens = dens / total
    return PlayStartPdf(
        target=ChunkId(i, 1),
        grid_step_s=step,
        density=tuple(dens.tolist()),
        point_masses=(),
        reach_probability=1.0,
    )


def play_start_pdf_nonfirst(
    firstpdf: PlayStartPdf, pdf_i: SwipePdf, j: int, chunk_duration_s: float = 5.0
) -> PlayStartPdf:
    """Play-start density of chunk (i, j), j >= 2: the first-chunk density
    shifted by (j-1) chunk durations and scaled by the probability the viewer
    is still watching at that point."""
    if j < 2:
        raise ValueError("use play_start_pdf_first for j = 1")
    _require_same_grid(firstpdf.grid_step_s, pdf_i.grid_step_s)
    step = firstpdf.grid_step_s
    shift_s = (j - 1) * chunk_duration_s
    survival = max(0.0, 1.0 - pdf_i.cdf_at(shift_s))
    target = ChunkId(firstpdf.target.video, j) if firstpdf.target else None
    if survival == 0.0:
        return PlayStartPdf(
            target=target, grid_step_s=step, density=(), point_masses=(),
            reach_probability=0.0,
        )
    pad = int(round(shift_s / step))
    dens = (0.0,) * pad + tuple(v * survival for v in firstpdf.density)
    points = tuple((t + shift_s, m * survival) for t, m in firstpdf.point_masses)
    return PlayStartPdf(
        target=target,
        grid_step_s=step,
        density=dens,
        point_masses=points,
        reach_probability=firstpdf.reach_probability * survival,
    )


# --- perturbation for error-injection experiments --------------------------------


def mean_view_time_s(pmf: SwipePmf, video: VideoSpec) -> float:
    """Mean viewing time implied by a swipe pmf: leaving after chunk ``j``
    means ``min(j*T, duration)`` seconds watched."""
    return math.fsum(
        p * video.chunk_end_s(j) for j, p in enumerate(pmf.mass, start=1)
    )


def perturb_exponential(pmf: SwipePmf, factor: float, video: VideoSpec) -> SwipePmf:
    """Scale a pmf's mean viewing time by roughly ``factor`` via an
    exponential surrogate.

    Method of moments on the mean: rate = 1 / mean. The returned pmf bins an
    exponential with rate / factor at chunk boundaries, folding the tail past
    the video duration into the final chunk (completion).
    """
    if factor <= 0:
        raise ValueError("perturbation factor must be positive")
    mean = mean_view_time_s(pmf, video)
    if mean <= 0:
        raise ValueError("degenerate pmf: zero mean viewing time")
    rate = 1.0 / mean / factor
    mass = []
    prev_cdf = 0.0
    for j in range(1, video.num_chunks + 1):
        if j < video.num_chunks:
            cdf = 1.0 - math.exp(-rate * video.chunk_end_s(j))
            mass.append(cdf - prev_cdf)
            prev_cdf = cdf
        else:
            mass.append(1.0 - prev_cdf)
    return SwipePmf(video_index=pmf.video_index, mass=tuple(mass))
