"""Expected-rebuffer curves: stall forecasts as functions of download-finish time.

A chunk that finishes downloading at ``t_f`` and starts playing at ``t_p``
stalls for ``max(t_f - t_p, 0)`` seconds. Averaging that hinge over the
distribution of play-start times yields a convex, nondecreasing,
piecewise-linear function of ``t_f`` whose terminal slope equals the
probability the chunk is ever played. The scheduler ranks download candidates
by these curves; a brute-force enumerator over whole viewing sequences serves
as the independent check at small scale.
"""

from __future__ import annotations

import itertools
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .domain import ChunkId, Manifest
from .swipes import PlayStartPdf, SwipePmf, WatchCountDistribution

ENUMERATION_GUARD = 1_000_000


def chunk_rebuffer_delay(t_f: float, t_p: float) -> float:
    """Stall seconds for one chunk: download finish minus play start, floored at 0."""
    return max(t_f - t_p, 0.0)


@dataclass(frozen=True)
class RebufferCurve:
    """Piecewise-linear convex expected-stall curve.

    ``times``/``values`` are the breakpoints (ascending); the curve is 0 at and
    before the first breakpoint and extends past the last one with
    ``terminal_slope`` (the chunk's reach probability).
    """

    target: ChunkId | None
    times: tuple[float, ...]
    values: tuple[float, ...]
    terminal_slope: float

    def eval(self, t_f: float) -> float:
        ts, vs = self.times, self.values
        if not ts:
            return 0.0
        if t_f <= ts[0]:
            return vs[0]
        if t_f >= ts[-1]:
            return vs[-1] + self.terminal_slope * (t_f - ts[-1])
        k = bisect_right(ts, t_f)
        w = (t_f - ts[k - 1]) / (ts[k] - ts[k - 1])
        return vs[k - 1] + w * (vs[k] - vs[k - 1])

    def slopes(self) -> list[float]:
        """Segment slopes, terminal slope last; useful for convexity checks."""
        out = [
            (v2 - v1) / (t2 - t1)
            for (t1, v1), (t2, v2) in zip(
                zip(self.times, self.values), zip(self.times[1:], self.values[1:])
            )
        ]
        out.append(self.terminal_slope)
        return out


ZERO_CURVE = RebufferCurve(target=None, times=(), values=(), terminal_slope=0.0)


def curve_eval(curve: RebufferCurve, t_f: float) -> float:
    return curve.eval(t_f)


def curve_from_watchcount(
    dist: WatchCountDistribution,
    chunk_duration_s: float,
    origin_s: float = 0.0,
) -> RebufferCurve:
    """Expected-rebuffer curve of a chunk from its watch-count distribution.

    A count of ``n`` prior chunks puts the play start at
    ``origin_s + n * T``; the curve is the mass-weighted sum of hinges at
    those times, with breakpoints exactly there.
    """
    items = sorted((n, p) for n, p in dist.mass.items() if p > 0)
    if not items:
        return RebufferCurve(dist.target, (), (), 0.0)
    times = tuple(origin_s + n * chunk_duration_s for n, _ in items)
    masses = [p for _, p in items]
    values = tuple(
        math.fsum(p * max(t - tp, 0.0) for (tp, p) in zip(times, masses))
        for t in times
    )
    return RebufferCurve(
        target=dist.target,
        times=times,
        values=values,
        terminal_slope=math.fsum(masses),
    )


def curve_from_playstart(pdf: PlayStartPdf) -> RebufferCurve:
    """Expected-rebuffer curve from a continuous play-start density.

    E(x) = integral over t in [0, x] of f(t) (x - t) dt, evaluated with the
    trapezoid rule at the grid points (plus any point-mass times), then
    linearly interpolated.
    """
    step = pdf.grid_step_s
    dens = np.asarray(pdf.density, dtype=float)
    grid = np.arange(len(dens)) * step
    bp_times = sorted({*(grid.tolist()), *(t for t, _ in pdf.point_masses)})
    if not bp_times:
        return RebufferCurve(pdf.target, (), (), 0.0)

    def expected(x: float) -> float:
        total = 0.0
        if len(dens) >= 2:
            integrand = dens * np.clip(x - grid, 0.0, None)
            total += float(np.trapezoid(integrand, dx=step))
        total += math.fsum(m * max(x - t, 0.0) for t, m in pdf.point_masses)
        return total

    values = tuple(expected(x) for x in bp_times)
    return RebufferCurve(
        target=pdf.target,
        times=tuple(bp_times),
        values=values,
        terminal_slope=pdf.reach_probability,
    )


# --- exhaustive oracle over viewing sequences ------------------------------------


@dataclass(frozen=True)
class ViewingSequence:
    """One complete realization of a session prefix: how many chunks of each
    video the user watched, in playlist order."""

    watched: tuple[tuple[int, int], ...]  # (video_index, chunks watched)

    def chunks_before(self, target: ChunkId) -> int:
        """Number of chunks that play before ``target``, assuming the sequence
        reaches it."""
        count = 0
        for video, k in self.watched:
            if video == target.video:
                return count + (target.chunk - 1)
            count += k
        return count + (target.chunk - 1)

    def probability(self, pmfs: Sequence[SwipePmf]) -> float:
        p = 1.0
        for video, k in self.watched:
            p *= pmfs[video - 1].mass[k - 1]
        return p


def enumerate_sequences_reaching(
    pmfs: Sequence[SwipePmf], target: ChunkId
) -> Iterator[tuple[ViewingSequence, float]]:
    """Yield (prefix sequence, probability) for every way of reaching
    ``target``: full viewing choices for videos before it, times the chance
    the viewer survives to chunk j of the target video."""
    ranges = [range(1, pmfs[l].num_chunks + 1) for l in range(target.video - 1)]
    count = 1
    for r in ranges:
        count *= len(r)
    if count > ENUMERATION_GUARD:
        raise ValueError(f"{count} viewing sequences exceed the enumeration guard")
    survival = pmfs[target.video - 1].survival(target.chunk)
    if survival <= 0:
        return
    for ks in itertools.product(*ranges):
        seq = ViewingSequence(
            watched=tuple((l + 1, k) for l, k in enumerate(ks))
        )
        p = survival
        for l, k in enumerate(ks):
            p *= pmfs[l].mass[k - 1]
        if p > 0:
            yield seq, p


def brute_force_expected_rebuffer(
    manifest: Manifest,
    pmfs: Sequence[SwipePmf],
    target: ChunkId,
    t_f: float,
) -> float:
    """Exact expected stall of ``target`` at download-finish time ``t_f`` by
    enumerating every viewing sequence that reaches it."""
    T = manifest.video(target.video).chunk_duration_s
    total = 0.0
    for seq, p in enumerate_sequences_reaching(pmfs, target):
        t_p = seq.chunks_before(target) * T
        total += p * chunk_rebuffer_delay(t_f, t_p)
    return total
