"""Trace-driven short-video streaming engine with swipe-aware prebuffering.

Core pieces: swipe-distribution modeling (:mod:`swipesim.swipes`),
expected-rebuffer forecasting (:mod:`swipesim.rebuffer`), the horizon
scheduler (:mod:`swipesim.scheduler`), two baselines
(:mod:`swipesim.baselines`), a deterministic session simulator
(:mod:`swipesim.simulator`), and QoE scoring (:mod:`swipesim.qoe`).
"""

from .abr import QoeWeights, ThroughputEstimator, harmonic_mean, select_bitrates
from .baselines import OracleKnowledge, OracleScheduler, TikTokConfig, TikTokState
from .domain import (
    BitrateLadder,
    ChunkId,
    Manifest,
    ManifestError,
    PlayerState,
    VideoSpec,
    chunk_bytes,
    load_manifest,
    save_manifest,
    validate_manifest,
)
from .qoe import QoeBreakdown, Report, ResultRow, normalize, score
from .rebuffer import (
    RebufferCurve,
    brute_force_expected_rebuffer,
    chunk_rebuffer_delay,
    curve_eval,
    curve_from_playstart,
    curve_from_watchcount,
)
from .scheduler import (
    BufferSequence,
    SchedulerConfig,
    SwipeAwareScheduler,
    candidate_set,
    greedy_order,
    schedule,
    uniform_feasible_bitrate,
)
from .simulator import (
    DownloadAction,
    Idle,
    NetworkTrace,
    SessionConfig,
    SessionLog,
    download_time,
    load_trace_csv,
    run_session,
    save_trace_csv,
    trace_from_packet_times,
)
from .swipes import (
    PlayStartPdf,
    SwipePdf,
    SwipePmf,
    WatchCountDistribution,
    convolve,
    first_chunk_dist,
    nonfirst_chunk_dist,
    perturb_exponential,
    play_start_pdf_first,
    play_start_pdf_nonfirst,
    pmf_from_samples,
)
from .systems import RunConfig, build_system, run_system_session

__version__ = "0.1.0"
