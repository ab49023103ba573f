"""Regression fixtures frozen after hand-verifying the timelines.

The scenario: three 10-second videos in 5-second chunks, 50/50 swipe odds per
chunk, a flat 2 Mbps link with no request latency, ground-truth views of
3 s / 10 s / 2 s. The stored plan and session were checked step by step
against a hand-drawn timeline (stall from 0 to 2.5 s on the first chunk, a
2 s stall after the first swipe, the hedged-but-unwatched downloads of c1.2
and c3.2, and the closing idle gap).
"""

import json
import os

from swipesim.domain import BitrateLadder, Manifest, PlayerState, VideoSpec
from swipesim.scheduler import SwipeAwareScheduler
from swipesim.simulator import NetworkTrace, SessionConfig, run_session
from swipesim.swipes import SwipePmf

DATA = os.path.join(os.path.dirname(__file__), "data")


def fixture():
    m = Manifest(
        videos=tuple(
            VideoSpec(id=f"v{i}", duration_s=10.0, chunk_duration_s=5.0)
            for i in (1, 2, 3)
        ),
        ladder=BitrateLadder((1.0, 2.0, 4.0)),
    )
    pmfs = [SwipePmf(i, (0.5, 0.5)) for i in (1, 2, 3)]
    return m, pmfs


def test_cold_start_plan_matches_golden():
    m, pmfs = fixture()
    plan = SwipeAwareScheduler(m, pmfs).plan(PlayerState())
    got = [
        {
            "video": s.chunk.video,
            "chunk": s.chunk.chunk,
            "level": s.level,
            "start_s": s.start_s,
            "finish_s": s.finish_s,
        }
        for s in plan.slots
    ]
    with open(os.path.join(DATA, "golden_plan.json")) as f:
        assert got == json.load(f)


def test_session_log_matches_golden_field_by_field():
    m, pmfs = fixture()
    trace = NetworkTrace(segments=((0.0, 2.0),), rtt_s=0.0)
    log = run_session(
        SwipeAwareScheduler(m, pmfs),
        m,
        trace,
        [3.0, 10.0, 2.0],
        SessionConfig(session_length_s=60.0),
    )
    with open(os.path.join(DATA, "golden_session.json")) as f:
        golden = json.load(f)
    got = json.loads(json.dumps(log.to_dict()))  # normalize tuples to lists
    assert got["session_length_s"] == golden["session_length_s"]
    assert got["watch_total_s"] == golden["watch_total_s"]
    assert got["rebuffer_total_s"] == golden["rebuffer_total_s"]
    assert got["records"] == golden["records"]
    assert got["events"] == golden["events"]
    assert got["idle_intervals"] == golden["idle_intervals"]
    assert got == golden
