import json
import os

import numpy as np
import pytest

from swipesim.cli import main
from swipesim.domain import load_manifest
from swipesim.qoe import Report
from swipesim.simulator import load_trace_csv
from swipesim.swipes import SwipePdf
from swipesim.synthetic import GeneratorParams, gen_workload, swipe_density


def tiny_params():
    return GeneratorParams(
        n_videos=8,
        n_sessions=2,
        n_traces=2,
        duration_range_s=(8.0, 20.0),
    )


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    paths = gen_workload(11, tiny_params()).write(str(out))
    return paths


def write_config(tmp_path, paths, **overrides):
    cfg = {
        "manifest": paths["manifest"],
        "network_traces": paths["traces"],
        "swipe_distributions": paths["swipe_distributions"],
        "swipe_traces": paths["swipe_traces"],
        "systems": ["swipeaware", "tiktok", "oracle"],
        "seed": 5,
        "output_dir": str(tmp_path / "out"),
        "session_length_s": 60.0,
        "sweep": {"factor": [0.5, 1.0, 1.5], "chunk_duration_s": [5, 10]},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path), cfg


class TestGen:
    def test_deterministic_given_seed(self, tmp_path):
        a = gen_workload(3, tiny_params())
        b = gen_workload(3, tiny_params())
        assert a.manifest == b.manifest
        assert a.sessions == b.sessions
        assert a.traces == b.traces

    def test_cli_gen_writes_corpus(self, tmp_path):
        out = tmp_path / "gen"
        rc = main(
            ["gen", "--seed", "4", "-o", str(out), "--videos", "6", "--sessions", "2", "--traces", "2"]
        )
        assert rc == 0
        manifest = load_manifest(str(out / "manifest.json"))
        assert len(manifest) == 6
        assert (out / "swipe_distributions.json").exists()
        assert len(list((out / "traces").iterdir())) == 2
        assert len(list((out / "swipes").iterdir())) == 2

    def test_late_mode_mass_in_final_fifth(self):
        for duration in (10.0, 25.0, 40.0):
            dens = swipe_density(duration, "late")
            grid = np.arange(len(dens)) * 0.1
            total = np.trapezoid(dens, dx=0.1)
            tail = np.trapezoid(np.where(grid >= 0.8 * duration, dens, 0.0), dx=0.1)
            assert tail / total >= 0.6

    def test_constant_trace_single_segment(self):
        rng = np.random.default_rng(0)
        from swipesim.synthetic import gen_network_trace

        trace = gen_network_trace(rng, "constant", tiny_params())
        assert len(trace.segments) == 1

    def test_sampled_views_follow_density(self):
        rng = np.random.default_rng(1)
        from swipesim.synthetic import sample_view_time

        pdf = SwipePdf(
            video_index=1,
            grid_step_s=0.1,
            density=tuple(swipe_density(20.0, "early").tolist()),
        )
        samples = [sample_view_time(rng, pdf) for _ in range(300)]
        assert all(0 <= s <= 20.0 for s in samples)
        early = sum(1 for s in samples if s <= 4.0)
        assert early > 100  # early mode concentrates at the start


class TestRun:
    def test_oracle_only_run_has_zero_wastage_rows(self, corpus, tmp_path):
        cfg_path, cfg = write_config(tmp_path, corpus, systems=["oracle"])
        rc = main(["run", "-c", cfg_path])
        assert rc == 0
        report = Report.read_json(os.path.join(cfg["output_dir"], "report.json"))
        assert report.rows
        assert all(r.breakdown.wastage_fraction == 0.0 for r in report.rows)

    def test_full_run_writes_reports_and_logs(self, corpus, tmp_path):
        cfg_path, cfg = write_config(tmp_path, corpus)
        rc = main(["run", "-c", cfg_path])
        assert rc == 0
        out = cfg["output_dir"]
        report = Report.read_json(os.path.join(out, "report.json"))
        assert len(report.rows) == 3 * 2 * 2  # systems x traces x swipe traces
        assert os.path.exists(os.path.join(out, "report.csv"))
        logs = os.listdir(os.path.join(out, "logs"))
        assert len(logs) == len(report.rows)
        normalized = [r.normalized_qoe for r in report.rows if r.system == "oracle"]
        assert any(v is not None for v in normalized)

    def test_missing_trace_exits_2(self, corpus, tmp_path, capsys):
        cfg_path, _ = write_config(
            tmp_path, corpus, network_traces=["/nonexistent/trace.csv"]
        )
        rc = main(["run", "-c", cfg_path])
        assert rc == 2
        assert "trace not found: /nonexistent/trace.csv" in capsys.readouterr().err

    def test_missing_seed_rejected(self, corpus, tmp_path):
        cfg = {
            "manifest": corpus["manifest"],
            "network_traces": corpus["traces"],
            "swipe_distributions": corpus["swipe_distributions"],
            "swipe_traces": corpus["swipe_traces"],
        }
        path = tmp_path / "noseed.json"
        path.write_text(json.dumps(cfg))
        assert main(["run", "-c", str(path)]) == 2

    def test_systems_flag_overrides_config(self, corpus, tmp_path):
        cfg_path, cfg = write_config(tmp_path, corpus)
        rc = main(["run", "-c", cfg_path, "--systems", "tiktok"])
        assert rc == 0
        report = Report.read_json(os.path.join(cfg["output_dir"], "report.json"))
        assert {r.system for r in report.rows} == {"tiktok"}


class TestSweep:
    def test_swipe_error_axis(self, corpus, tmp_path):
        cfg_path, cfg = write_config(
            tmp_path, corpus, sweep={"factor": [0.5, 1.5]}, systems=["swipeaware"]
        )
        rc = main(["sweep", "-c", cfg_path, "--axis", "swipe_error"])
        assert rc == 0
        report = Report.read_json(
            os.path.join(cfg["output_dir"], "sweep_swipe_error.json")
        )
        buckets = {r.bucket for r in report.rows}
        assert buckets == {"swipe_factor=0.5", "swipe_factor=1.5"}

    def test_chunk_size_axis(self, corpus, tmp_path):
        cfg_path, cfg = write_config(
            tmp_path,
            corpus,
            sweep={"chunk_duration_s": [5, 10]},
            systems=["swipeaware"],
        )
        rc = main(["sweep", "-c", cfg_path, "--axis", "chunk_size"])
        assert rc == 0
        report = Report.read_json(
            os.path.join(cfg["output_dir"], "sweep_chunk_size.json")
        )
        assert {r.bucket for r in report.rows} == {"T=5", "T=10"}

    def test_network_error_axis(self, corpus, tmp_path):
        cfg_path, cfg = write_config(
            tmp_path, corpus, sweep={"factor": [0.8, 1.2]}, systems=["swipeaware"]
        )
        rc = main(["sweep", "-c", cfg_path, "--axis", "network_error"])
        assert rc == 0
        report = Report.read_json(
            os.path.join(cfg["output_dir"], "sweep_network_error.json")
        )
        assert {r.bucket for r in report.rows} == {"net_factor=0.8", "net_factor=1.2"}


class TestStability:
    def test_factor_one_is_exactly_stable(self, corpus, tmp_path):
        cfg_path, cfg = write_config(
            tmp_path,
            corpus,
            sweep={"factor": [0.5, 1.0, 1.5]},
            session_length_s=30.0,
        )
        rc = main(["stability", "-c", cfg_path])
        assert rc == 0
        with open(os.path.join(cfg["output_dir"], "stability.json")) as f:
            table = json.load(f)
        assert table["fraction_unchanged"]["1"] == 1.0
        assert table["decision_points"] > 0
        assert 0.0 <= table["fraction_unchanged"]["0.5"] <= 1.0


class TestConvertAndCompare:
    def test_convert_packet_trace(self, tmp_path):
        src = tmp_path / "packets.txt"
        src.write_text("\n".join(str(ms) for ms in (0, 100, 900, 1500, 2400)))
        out = tmp_path / "trace.csv"
        rc = main(["convert-trace", str(src), "-o", str(out)])
        assert rc == 0
        trace = load_trace_csv(str(out))
        assert len(trace.segments) == 3

    def test_compare_normalizes_report(self, corpus, tmp_path):
        cfg_path, cfg = write_config(tmp_path, corpus)
        assert main(["run", "-c", cfg_path]) == 0
        report_path = os.path.join(cfg["output_dir"], "report.json")
        rc = main(["compare", report_path])
        assert rc == 0
        out = report_path.replace(".json", "_normalized.json")
        report = Report.read_json(out)
        oracle_norms = [
            r.normalized_qoe for r in report.rows if r.system == "oracle"
        ]
        assert any(v is not None for v in oracle_norms)
