"""Command-line harness: run sessions, sweep error/chunk-size axes, measure
decision stability, generate synthetic corpora, convert traces.

Configuration is one JSON file plus flag overrides (flags win). Every command
is reproducible bit-for-bit given (config, seed): seeds are mandatory in the
config and nothing reads the wall clock. Sweeps fan sessions out across a
process pool capped by the SIM_THREADS environment variable (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .abr import QoeWeights
from .baselines import TikTokConfig
from .domain import Manifest, VideoSpec, load_manifest
from .qoe import Report, ResultRow, normalize, score
from .scheduler import SchedulerConfig, SwipeAwareScheduler
from .simulator import (
    SessionConfig,
    load_trace_csv,
    save_trace_csv,
    trace_from_packet_times,
)
from .swipes import load_swipe_distributions, load_swipe_trace, perturb_exponential
from .synthetic import GeneratorParams, gen_workload
from .systems import RunConfig, align_views, pmfs_from_distributions, run_system_session

DEFAULT_FACTORS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
DEFAULT_CHUNK_SWEEP = (2.0, 5.0, 7.0, 10.0)


class CliError(Exception):
    pass


@dataclass
class ExperimentConfig:
    manifest_path: str
    trace_paths: list[tuple[str, str]]  # (path, bucket label)
    distributions_path: str
    swipe_trace_paths: list[str]
    systems: list[str]
    seed: int
    output_dir: str
    session_length_s: float = 600.0
    rtt_s: float = 0.006
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    weights: QoeWeights = field(default_factory=QoeWeights)
    tiktok: TikTokConfig = field(default_factory=TikTokConfig)
    sweep_chunk_durations: tuple[float, ...] = DEFAULT_CHUNK_SWEEP
    sweep_factors: tuple[float, ...] = DEFAULT_FACTORS

    @classmethod
    def load(cls, path: str, args: argparse.Namespace | None = None) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise CliError(f"config not found: {path}")
        with open(path) as f:
            raw = json.load(f)
        if "seed" not in raw:
            raise CliError("config must declare a seed")
        traces = []
        for entry in raw.get("network_traces", []):
            if isinstance(entry, str):
                traces.append((entry, os.path.splitext(os.path.basename(entry))[0]))
            else:
                traces.append((entry["path"], entry.get("bucket") or entry["path"]))
        weights = QoeWeights(**raw.get("qoe", {}))
        sched_kwargs = dict(raw.get("scheduler", {}))
        scheduler = SchedulerConfig(qoe=weights, **sched_kwargs)
        sweep = raw.get("sweep", {})
        cfg = cls(
            manifest_path=raw["manifest"],
            trace_paths=traces,
            distributions_path=raw.get("swipe_distributions", ""),
            swipe_trace_paths=list(raw.get("swipe_traces", [])),
            systems=list(raw.get("systems", ["swipeaware", "tiktok", "oracle"])),
            seed=int(raw["seed"]),
            output_dir=raw.get("output_dir", "out"),
            session_length_s=float(raw.get("session_length_s", 600.0)),
            rtt_s=float(raw.get("rtt_s", 0.006)),
            scheduler=scheduler,
            weights=weights,
            tiktok=TikTokConfig(**raw.get("tiktok", {})),
            sweep_chunk_durations=tuple(
                sweep.get("chunk_duration_s", DEFAULT_CHUNK_SWEEP)
            ),
            sweep_factors=tuple(sweep.get("factor", DEFAULT_FACTORS)),
        )
        if args is not None:
            if getattr(args, "output", None):
                cfg.output_dir = args.output
            if getattr(args, "systems", None):
                cfg.systems = args.systems.split(",")
            if getattr(args, "session_length", None):
                cfg.session_length_s = args.session_length
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not os.path.exists(self.manifest_path):
            raise CliError(f"manifest not found: {self.manifest_path}")
        if not self.trace_paths:
            raise CliError("no network traces configured")
        for p, _ in self.trace_paths:
            if not os.path.exists(p):
                raise CliError(f"trace not found: {p}")
        for p in self.swipe_trace_paths:
            if not os.path.exists(p):
                raise CliError(f"swipe trace not found: {p}")
        if self.distributions_path and not os.path.exists(self.distributions_path):
            raise CliError(f"swipe distributions not found: {self.distributions_path}")
        unknown = set(self.systems) - {"swipeaware", "tiktok", "oracle"}
        if unknown:
            raise CliError(f"unknown systems: {sorted(unknown)}")


def _pool_size() -> int:
    return max(1, int(os.environ.get("SIM_THREADS", "1")))


@dataclass(frozen=True)
class _Task:
    system: str
    manifest: Manifest
    trace_path: str
    bucket: str
    swipe_path: str
    views: tuple[float, ...]
    pmfs: tuple
    rtt_s: float
    run_config: RunConfig
    variant: str = ""


def _run_task(task: _Task):
    trace = load_trace_csv(task.trace_path, rtt_s=task.rtt_s)
    log = run_system_session(
        task.system,
        task.manifest,
        trace,
        list(task.views),
        pmfs=list(task.pmfs) if task.pmfs else None,
        config=task.run_config,
    )
    return task, log


def _execute(tasks: list[_Task]):
    workers = _pool_size()
    if workers == 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def _task_label(task: _Task) -> str:
    trace = os.path.splitext(os.path.basename(task.trace_path))[0]
    swipe = os.path.splitext(os.path.basename(task.swipe_path))[0]
    parts = [task.system, trace, swipe]
    if task.variant:
        parts.append(task.variant)
    return "__".join(parts)


def _load_inputs(cfg: ExperimentConfig):
    manifest = load_manifest(cfg.manifest_path)
    entries = load_swipe_distributions(cfg.distributions_path)
    pmfs = pmfs_from_distributions(manifest, entries)
    swipes = []
    for path in cfg.swipe_trace_paths:
        trace = load_swipe_trace(path)
        swipes.append((path, tuple(align_views(manifest, trace))))
    return manifest, entries, pmfs, swipes


def _base_run_config(cfg: ExperimentConfig) -> RunConfig:
    return RunConfig(
        session=SessionConfig(session_length_s=cfg.session_length_s),
        weights=cfg.weights,
        scheduler=cfg.scheduler,
        tiktok=cfg.tiktok,
    )


def _collect_report(results, write_logs_to: str | None = None) -> Report:
    report = Report()
    for task, log in results:
        if write_logs_to:
            path = os.path.join(write_logs_to, _task_label(task) + ".json")
            with open(path, "w") as f:
                f.write(log.to_json())
                f.write("\n")
        bucket = task.bucket if not task.variant else task.variant
        report.rows.append(
            ResultRow(
                system=task.system,
                trace=os.path.splitext(os.path.basename(task.trace_path))[0],
                swipe_trace=os.path.splitext(os.path.basename(task.swipe_path))[0],
                bucket=bucket,
                breakdown=score(log, QoeWeights()),
            )
        )
    return report


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config, args)
    manifest, _, pmfs, swipes = _load_inputs(cfg)
    run_cfg = _base_run_config(cfg)
    tasks = [
        _Task(
            system=system,
            manifest=manifest,
            trace_path=tp,
            bucket=bucket,
            swipe_path=sp,
            views=views,
            pmfs=tuple(pmfs),
            rtt_s=cfg.rtt_s,
            run_config=run_cfg,
        )
        for system in cfg.systems
        for tp, bucket in cfg.trace_paths
        for sp, views in swipes
    ]
    os.makedirs(cfg.output_dir, exist_ok=True)
    logs_dir = os.path.join(cfg.output_dir, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    results = _execute(tasks)
    report = _collect_report(results, write_logs_to=logs_dir)
    if "oracle" in cfg.systems:
        normalize(report)
    report.write_json(os.path.join(cfg.output_dir, "report.json"))
    report.write_csv(os.path.join(cfg.output_dir, "report.csv"))
    _print_summary(report)
    return 0


def _print_summary(report: Report) -> None:
    summary = report.summary()
    for system, entry in summary.items():
        q = entry["qoe"]
        print(
            f"{system:>12}: qoe mean {q['mean']:.2f} median {q['median']:.2f} "
            f"(n={q['count']}), rebuffer {entry['rebuffer_penalty_s']['mean']:.2f} s, "
            f"wastage {entry['wastage_fraction']['mean']:.1%}, "
            f"idle {entry['idle_fraction']['mean']:.1%}"
        )
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config, args)
    manifest, entries, pmfs, swipes = _load_inputs(cfg)
    base = _base_run_config(cfg)
    tasks: list[_Task] = []
    if args.axis == "chunk_size":
        for T in cfg.sweep_chunk_durations:
            variant_manifest = Manifest(
                videos=tuple(
                    VideoSpec(id=v.id, duration_s=v.duration_s, chunk_duration_s=T)
                    for v in manifest.videos
                ),
                ladder=manifest.ladder,
                group_size=manifest.group_size,
            )
            variant_pmfs = pmfs_from_distributions(variant_manifest, entries)
            tasks.extend(
                _Task(
                    system=system,
                    manifest=variant_manifest,
                    trace_path=tp,
                    bucket=bucket,
                    swipe_path=sp,
                    views=views,
                    pmfs=tuple(variant_pmfs),
                    rtt_s=cfg.rtt_s,
                    run_config=base,
                    variant=f"T={T:g}",
                )
                for system in cfg.systems
                for tp, bucket in cfg.trace_paths
                for sp, views in swipes
            )
    elif args.axis == "swipe_error":
        for factor in cfg.sweep_factors:
            perturbed = tuple(
                perturb_exponential(pmf, factor, manifest.video(i))
                for i, pmf in enumerate(pmfs, start=1)
            )
            tasks.extend(
                _Task(
                    system="swipeaware",
                    manifest=manifest,
                    trace_path=tp,
                    bucket=bucket,
                    swipe_path=sp,
                    views=views,
                    pmfs=perturbed,
                    rtt_s=cfg.rtt_s,
                    run_config=base,
                    variant=f"swipe_factor={factor:g}",
                )
                for tp, bucket in cfg.trace_paths
                for sp, views in swipes
            )
    elif args.axis == "network_error":
        for factor in cfg.sweep_factors:
            run_cfg = replace(
                base,
                scheduler=replace(cfg.scheduler, throughput_perturbation=factor),
            )
            tasks.extend(
                _Task(
                    system="swipeaware",
                    manifest=manifest,
                    trace_path=tp,
                    bucket=bucket,
                    swipe_path=sp,
                    views=views,
                    pmfs=tuple(pmfs),
                    rtt_s=cfg.rtt_s,
                    run_config=run_cfg,
                    variant=f"net_factor={factor:g}",
                )
                for tp, bucket in cfg.trace_paths
                for sp, views in swipes
            )
    else:
        raise CliError(f"unknown sweep axis: {args.axis}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    results = _execute(tasks)
    report = _collect_report(results)
    out = os.path.join(cfg.output_dir, f"sweep_{args.axis}.json")
    report.write_json(out)
    report.write_csv(os.path.join(cfg.output_dir, f"sweep_{args.axis}.csv"))
    _print_summary(report)
    print(f"wrote {out}")
    return 0


def cmd_stability(args) -> int:
    cfg = ExperimentConfig.load(args.config, args)
    manifest, _, pmfs, swipes = _load_inputs(cfg)
    factors = cfg.sweep_factors

    def perturbed_scheduler(factor):
        variant = [
            perturb_exponential(pmf, factor, manifest.video(i))
            for i, pmf in enumerate(pmfs, start=1)
        ]
        return SwipeAwareScheduler(manifest, variant, cfg.scheduler)

    # decisions compare against the unperturbed (factor 1.0) exponential model,
    # so factor 1.0 reports 1.0 by construction
    baseline = perturbed_scheduler(1.0)
    schedulers = {factor: perturbed_scheduler(factor) for factor in factors}
    unchanged = {factor: 0 for factor in factors}
    decisions = 0

    def probe(state, decision):
        nonlocal decisions
        decisions += 1
        base = baseline.plan(state).first()
        base_chunk = base.chunk if base else None
        for factor, sched in schedulers.items():
            first = sched.plan(state).first()
            alt_chunk = first.chunk if first else None
            if alt_chunk == base_chunk:
                unchanged[factor] += 1

    run_cfg = _base_run_config(cfg)
    for tp, _ in cfg.trace_paths:
        trace = load_trace_csv(tp, rtt_s=cfg.rtt_s)
        for sp, views in swipes:
            run_system_session(
                "swipeaware",
                manifest,
                trace,
                list(views),
                pmfs=pmfs,
                config=run_cfg,
                decision_hook=probe,
            )
    if decisions == 0:
        raise CliError("no decision points recorded")
    table = {f"{factor:g}": unchanged[factor] / decisions for factor in factors}
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "stability.json")
    with open(out, "w") as f:
        json.dump(
            {"decision_points": decisions, "fraction_unchanged": table},
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    for factor in factors:
        print(f"factor {factor:g}: {unchanged[factor] / decisions:.1%} unchanged")
    print(f"wrote {out}")
    return 0


def cmd_gen(args) -> int:
    params = GeneratorParams(
        n_videos=args.videos,
        n_sessions=args.sessions,
        n_traces=args.traces,
        chunk_duration_s=args.chunk_duration,
    )
    workload = gen_workload(args.seed, params)
    paths = workload.write(args.output)
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


def cmd_convert_trace(args) -> int:
    if not os.path.exists(args.input):
        raise CliError(f"trace not found: {args.input}")
    if args.format != "packet-ms":
        raise CliError(f"unknown input format: {args.format}")
    with open(args.input) as f:
        packet_ms = [int(line) for line in f if line.strip()]
    trace = trace_from_packet_times(packet_ms)
    save_trace_csv(trace, args.output)
    print(f"wrote {args.output} ({len(trace.segments)} segments)")
    return 0


def cmd_compare(args) -> int:
    if not os.path.exists(args.report):
        raise CliError(f"report not found: {args.report}")
    report = Report.read_json(args.report)
    normalize(report, oracle_system=args.oracle)
    out = args.output or args.report.replace(".json", "_normalized.json")
    report.write_json(out)
    for system in sorted({r.system for r in report.rows}):
        vals = [
            r.normalized_qoe
            for r in report.rows
            if r.system == system and r.normalized_qoe is not None
        ]
        if vals:
            vals.sort()
            median = vals[len(vals) // 2]
            print(f"{system:>12}: median normalized qoe {median:.3f}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim", description="short-video streaming simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run configured systems on traces")
    run.add_argument("-c", "--config", required=True)
    run.add_argument("--output", help="override output directory")
    run.add_argument("--systems", help="comma-separated system subset")
    run.add_argument("--session-length", type=float, dest="session_length")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run an experiment sweep")
    sweep.add_argument("-c", "--config", required=True)
    sweep.add_argument(
        "--axis",
        required=True,
        choices=["chunk_size", "swipe_error", "network_error"],
    )
    sweep.add_argument("--output")
    sweep.add_argument("--systems")
    sweep.add_argument("--session-length", type=float, dest="session_length")
    sweep.set_defaults(func=cmd_sweep)

    stab = sub.add_parser("stability", help="measure decision stability")
    stab.add_argument("-c", "--config", required=True)
    stab.add_argument("--output")
    stab.add_argument("--session-length", type=float, dest="session_length")
    stab.set_defaults(func=cmd_stability)

    gen = sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--videos", type=int, default=60)
    gen.add_argument("--sessions", type=int, default=20)
    gen.add_argument("--traces", type=int, default=6)
    gen.add_argument("--chunk-duration", type=float, default=5.0)
    gen.set_defaults(func=cmd_gen)

    conv = sub.add_parser("convert-trace", help="convert a packet trace to CSV")
    conv.add_argument("input")
    conv.add_argument("--from", dest="format", default="packet-ms")
    conv.add_argument("-o", "--output", required=True)
    conv.set_defaults(func=cmd_convert_trace)

    comp = sub.add_parser("compare", help="normalize a report to the oracle")
    comp.add_argument("report")
    comp.add_argument("--oracle", default="oracle")
    comp.add_argument("-o", "--output")
    comp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
