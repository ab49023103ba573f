"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
print. Criteria that need end-to-end sessions share one deterministic
synthetic workload (seed 2026: 60 videos, 6 constrained 1-3 Mbps traces of
three kinds, 20 sampled viewer sessions, 600 s each).
"""

import math
import time
from statistics import fmean

import numpy as np
import pytest

from swipesim.abr import QoeWeights
from swipesim.baselines import TikTokState
from swipesim.domain import ChunkId, Manifest, PlayerState, VideoSpec
from swipesim.qoe import score
from swipesim.rebuffer import (
    brute_force_expected_rebuffer,
    curve_from_playstart,
    curve_from_watchcount,
)
from swipesim.scheduler import SchedulerConfig, SwipeAwareScheduler
from swipesim.simulator import (
    DownloadAction,
    NetworkTrace,
    SessionConfig,
    run_session,
)
from swipesim.swipes import (
    SwipePmf,
    first_chunk_dist,
    nonfirst_chunk_dist,
    pdf_to_pmf,
    perturb_exponential,
    play_start_pdf_first,
)
from swipesim.synthetic import GeneratorParams, gen_workload
from swipesim.systems import RunConfig, run_system_session
from tests.conftest import make_manifest
from tests.test_abr import cbr_sizes, naive_select, planned
from tests.test_swipes import exhaustive_watch_counts, uniform_pdf

WORKLOAD_SEED = 2026


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def random_playlists(n=50, seed=17):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 5)))]
        pmfs = []
        for i, chunks in enumerate(sizes):
            raw = rng.random(chunks) + 1e-4
            pmfs.append(SwipePmf(video_index=i + 1, mass=tuple(raw / raw.sum())))
        out.append((sizes, pmfs))
    return out


@pytest.fixture(scope="module")
def playlists():
    return random_playlists()


@pytest.fixture(scope="module")
def workload():
    params = GeneratorParams()
    w = gen_workload(WORKLOAD_SEED, params)
    pmfs = [pdf_to_pmf(pdf, w.manifest.video(i + 1)) for i, pdf in enumerate(w.pdfs)]
    return w, pmfs, params


def run_workload(w, pmfs, params, system, config=None, manifest=None):
    manifest = manifest or w.manifest
    config = config or RunConfig(session=SessionConfig(session_length_s=600.0))
    out = []
    for k in range(params.n_sessions):
        trace = w.traces[k % params.n_traces]
        log = run_system_session(
            system, manifest, trace, w.sessions[k], pmfs=pmfs, config=config
        )
        out.append(log)
    return out


@pytest.fixture(scope="module")
def base_results(workload):
    w, pmfs, params = workload
    return {
        system: [score(log) for log in run_workload(w, pmfs, params, system)]
        for system in ("oracle", "swipeaware", "tiktok")
    }


def all_dists(sizes, pmfs):
    for i in range(1, len(sizes) + 1):
        first = first_chunk_dist(i, pmfs)
        for j in range(1, sizes[i - 1] + 1):
            yield (
                ChunkId(i, j),
                first if j == 1 else nonfirst_chunk_dist(first, pmfs[i - 1], j),
            )


def test_criterion_1_distribution_oracle_equivalence(playlists):
    start = time.perf_counter()
    worst = 0.0
    for sizes, pmfs in playlists:
        for target, dist in all_dists(sizes, pmfs):
            want = exhaustive_watch_counts(pmfs, target)
            tv = 0.5 * math.fsum(
                abs(dist.mass.get(k, 0.0) - want.get(k, 0.0))
                for k in set(dist.mass) | set(want)
            )
            worst = max(worst, tv)
    elapsed = time.perf_counter() - start
    report(
        1,
        worst < 1e-12 and elapsed < 5.0,
        f"max total variation {worst:.2e} (< 1e-12), {elapsed:.2f} s (< 5 s), "
        f"{len(playlists)} playlists",
    )


def test_criterion_2_curve_oracle_equivalence(playlists):
    rng = np.random.default_rng(23)
    worst = 0.0
    for sizes, pmfs in playlists:
        manifest = make_manifest(sizes)
        for target, dist in all_dists(sizes, pmfs):
            curve = curve_from_watchcount(dist, 5.0)
            for t_f in rng.uniform(0.0, 150.0, size=100):
                want = brute_force_expected_rebuffer(manifest, pmfs, target, t_f)
                worst = max(worst, abs(curve.eval(t_f) - want))
    report(2, worst < 1e-9, f"max |curve - brute force| {worst:.2e} (< 1e-9)")


def test_criterion_3_curve_shape_suite(playlists):
    checked = 0
    for sizes, pmfs in playlists:
        for target, dist in all_dists(sizes, pmfs):
            curve = curve_from_watchcount(dist, 5.0)
            slopes = curve.slopes()
            assert all(s >= -1e-12 for s in slopes), "decreasing curve"
            assert all(
                b >= a - 1e-12 for a, b in zip(slopes, slopes[1:])
            ), "non-convex curve"
            if curve.times:
                assert curve.eval(curve.times[0]) == 0.0
                assert curve.eval(curve.times[0] - 1.0) == 0.0
            assert abs(curve.terminal_slope - dist.total()) <= 1e-12
            checked += 1
    report(3, True, f"{checked} curves nondecreasing, convex, zero-at-start, "
                    "terminal slope = reach")


def test_criterion_4_continuous_convergence():
    errors = {}
    for step in (0.2, 0.1, 0.05):
        pdf = play_start_pdf_first(2, [uniform_pdf(10.0, step)])
        errors[step] = abs(curve_from_playstart(pdf).eval(10.0) - 5.0)
    ok = all(err <= 2 * step for step, err in errors.items())
    detail = ", ".join(f"step {s}: err {e:.2e} <= {2 * s}" for s, e in errors.items())
    report(4, ok, detail)


def test_criterion_5_mpc_pruning_lossless():
    from swipesim.abr import select_bitrates
    from swipesim.domain import BitrateLadder

    rng = np.random.default_rng(31)
    ladder = BitrateLadder((1.0, 1.75, 2.5, 4.3))
    cases = 0
    for _ in range(60):
        n = int(rng.integers(1, 5))
        chunks = []
        video, j = 1, 1
        for _ in range(n):
            if rng.random() < 0.4:
                video, j = video + 1, 1
            support = sorted({int(rng.integers(0, 6)) for _ in range(3)})
            raw = rng.random(len(support)) + 1e-3
            total = raw.sum() / float(rng.uniform(0.3, 1.0))
            mass = {k: float(v / total) for k, v in zip(support, raw)}
            chunks.append(
                planned(
                    ChunkId(video, j),
                    cbr_sizes(ladder, 5.0),
                    5.0,
                    sum(mass.values()),
                    mass,
                    prev=int(rng.integers(0, 4)) if j > 1 else None,
                )
            )
            j += 1
        est = float(rng.uniform(0.3, 8.0))
        got = select_bitrates(chunks, est, QoeWeights(), ladder, now_s=0.0)
        want = naive_select(chunks, est, QoeWeights(), ladder, 0.0)
        assert got == want, f"pruned {got} != exhaustive {want}"
        cases += 1
    report(5, True, f"{cases} sequences (len <= 4, 4-level ladder) match 4^4 "
                    "exhaustive search exactly")


def test_criterion_6_simulator_conservation():
    rng = np.random.default_rng(47)
    systems = ["tiktok"] * 400 + ["oracle"] * 300 + ["swipeaware"] * 300
    checked = 0
    for k, system in enumerate(systems):
        sizes = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 4)))]
        manifest = make_manifest(sizes)
        pmfs = []
        for i, chunks in enumerate(sizes):
            raw = rng.random(chunks) + 1e-3
            pmfs.append(SwipePmf(i + 1, tuple(raw / raw.sum())))
        trace = NetworkTrace(
            segments=tuple(
                (float(t), float(rng.uniform(0.4, 5.0))) for t in range(0, 24, 4)
            )
        )
        views = [
            float(rng.uniform(0.0, manifest.video(i + 1).duration_s))
            for i in range(len(sizes))
        ]
        cfg = RunConfig(session=SessionConfig(session_length_s=30.0))
        logs = [
            run_system_session(
                system, manifest, trace, views, pmfs=pmfs, config=cfg
            )
            for _ in range(2)
        ]
        logs[0].verify()  # raises on violation; run_session also asserted
        assert logs[0].to_json() == logs[1].to_json(), f"session {k} not deterministic"
        checked += 1
    report(6, True, f"{checked} randomized sessions conserve time and bytes; "
                    "re-runs byte-identical")


def test_criterion_7_tiktok_baseline_fidelity():
    manifest = Manifest(
        videos=tuple(
            VideoSpec(id=f"v{i}", duration_s=14.0, chunk_duration_s=5.0)
            for i in range(1, 11)
        ),
        ladder=manifest_ladder(),
        group_size=10,
    )
    machine = TikTokState(manifest)
    trace = NetworkTrace(segments=((0.0, 100.0),))
    log = run_session(
        machine, manifest, trace, [14.0] * 10, SessionConfig(session_length_s=200.0)
    )
    first_chunk_done = [
        t for t, kind, d in log.events if kind == "download_complete" and d.endswith(".1")
    ]
    play_start = {
        int(d): t for t, kind, d in log.events if kind == "play_start_video"
    }
    a = play_start[1] == first_chunk_done[4]
    b = all(
        r.download_start_s == play_start[r.chunk.video]
        for r in log.records
        if r.chunk.chunk == 2
    )
    idling_start = next(
        t for t, kind, d in log.events if kind == "tiktok_phase" and d == "prebuffer_idling"
    )
    c = all(
        r.download_start_s <= idling_start
        for r in log.records
        if r.chunk.chunk == 1
    )
    report(
        7,
        a and b and c,
        f"playback at 5th first chunk ({a}), second-chunk start == play start ({b}), "
        f"no first chunks while idling ({c})",
    )


def manifest_ladder():
    from swipesim.domain import BitrateLadder

    return BitrateLadder((1.0, 2.0, 4.0))


def test_criterion_8_ordering_sanity(base_results):
    oracle = base_results["oracle"]
    dash = base_results["swipeaware"]
    tiktok = base_results["tiktok"]
    wastage_ok = all(b.wastage_fraction == 0.0 for b in oracle)
    q_o, q_d, q_t = (fmean(b.qoe for b in r) for r in (oracle, dash, tiktok))
    order_ok = q_o >= q_d >= q_t
    r_d = fmean(b.rebuffer_penalty_s for b in dash)
    r_t = fmean(b.rebuffer_penalty_s for b in tiktok)
    rebuf_ok = r_d <= 0.5 * r_t
    report(
        8,
        wastage_ok and order_ok and rebuf_ok,
        f"oracle wastage 0 ({wastage_ok}); mean QoE {q_o:.0f} >= {q_d:.0f} >= {q_t:.0f} "
        f"({order_ok}); rebuffer {r_d:.1f} s <= 0.5 x {r_t:.1f} s ({rebuf_ok})",
    )


def test_criterion_9_stability_analog(workload):
    w, pmfs, params = workload
    factors = (0.5, 1.5)

    def scheduler_for(factor):
        variant = [
            perturb_exponential(p, factor, w.manifest.video(i + 1))
            for i, p in enumerate(pmfs)
        ]
        return SwipeAwareScheduler(w.manifest, variant)

    baseline = scheduler_for(1.0)
    perturbed = {f: scheduler_for(f) for f in factors}
    unchanged = {f: 0 for f in factors}
    decisions = 0

    def probe(state, decision):
        nonlocal decisions
        decisions += 1
        base = baseline.plan(state).first()
        base_chunk = base.chunk if base else None
        for f, sched in perturbed.items():
            first = sched.plan(state).first()
            if (first.chunk if first else None) == base_chunk:
                unchanged[f] += 1

    cfg = RunConfig(session=SessionConfig(session_length_s=600.0))
    for k in range(8):  # fixture suite: first eight workload sessions
        run_system_session(
            "swipeaware",
            w.manifest,
            w.traces[k % params.n_traces],
            w.sessions[k],
            pmfs=pmfs,
            config=cfg,
            decision_hook=probe,
        )
    fractions = {f: unchanged[f] / decisions for f in factors}
    ok = all(v >= 0.90 for v in fractions.values())
    report(
        9,
        ok,
        ", ".join(f"factor {f}: {v:.1%} unchanged" for f, v in fractions.items())
        + f" over {decisions} decisions (need >= 90%)",
    )


def test_criterion_10_network_error_robustness(workload, base_results):
    w, pmfs, params = workload
    base = fmean(b.qoe for b in base_results["swipeaware"])
    ratios = {}
    for factor in (0.5, 1.5):
        cfg = RunConfig(
            session=SessionConfig(session_length_s=600.0),
            scheduler=SchedulerConfig(throughput_perturbation=factor),
        )
        results = [
            score(log) for log in run_workload(w, pmfs, params, "swipeaware", cfg)
        ]
        ratios[factor] = fmean(b.qoe for b in results) / base
    ok = all(r >= 0.70 for r in ratios.values())
    report(
        10,
        ok,
        ", ".join(f"est x{f}: {r:.0%} of unperturbed QoE" for f, r in ratios.items())
        + " (need >= 70%)",
    )


def test_criterion_11_chunk_size_trend(workload, base_results):
    w, pmfs, params = workload
    q5 = fmean(b.qoe for b in base_results["swipeaware"])
    manifest10 = Manifest(
        videos=tuple(
            VideoSpec(id=v.id, duration_s=v.duration_s, chunk_duration_s=10.0)
            for v in w.manifest.videos
        ),
        ladder=w.manifest.ladder,
        group_size=w.manifest.group_size,
    )
    pmfs10 = [pdf_to_pmf(pdf, manifest10.video(i + 1)) for i, pdf in enumerate(w.pdfs)]
    results = [
        score(log)
        for log in run_workload(w, pmfs10, params, "swipeaware", manifest=manifest10)
    ]
    q10 = fmean(b.qoe for b in results)
    report(
        11,
        q10 < q5,
        f"mean QoE at T=10 s ({q10:.0f}) < at T=5 s ({q5:.0f})",
    )
