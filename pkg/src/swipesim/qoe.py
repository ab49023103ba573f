"""Scoring session logs: QoE decomposition, wastage, idle time, normalization.

QoE counts only what was actually watched: bitrate reward integrates rate
over watched seconds, the rebuffer penalty sums stalls before watched
chunks, and the smoothness penalty charges level changes between adjacent
watched chunks of the same video (switching between videos is free). Reward
units are Mbps x seconds.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .abr import QoeWeights
from .simulator import SessionLog


@dataclass(frozen=True)
class QoeBreakdown:
    bitrate_reward: float
    rebuffer_penalty_s: float
    smooth_penalty: float
    qoe: float
    wastage_fraction: float
    idle_fraction: float
    unforced_idle_fraction: float
    watch_s: float
    rebuffer_s: float

    def to_dict(self) -> dict:
        return {
            "bitrate_reward": self.bitrate_reward,
            "rebuffer_penalty_s": self.rebuffer_penalty_s,
            "smooth_penalty": self.smooth_penalty,
            "qoe": self.qoe,
            "wastage_fraction": self.wastage_fraction,
            "idle_fraction": self.idle_fraction,
            "unforced_idle_fraction": self.unforced_idle_fraction,
            "watch_s": self.watch_s,
            "rebuffer_s": self.rebuffer_s,
        }


def score(log: SessionLog, weights: QoeWeights | None = None) -> QoeBreakdown:
    """Score one session. The log must satisfy its conservation invariants."""
    weights = weights or QoeWeights()
    log.verify()
    watched = sorted(
        (r for r in log.records if r.watched),
        key=lambda r: (r.chunk.video, r.chunk.chunk),
    )
    reward = math.fsum(r.level_mbps * r.watch_s for r in watched)
    rebuffer = math.fsum(r.rebuffer_s for r in watched)
    smooth = 0.0
    for a, b in zip(watched, watched[1:]):
        if a.chunk.video == b.chunk.video and b.chunk.chunk == a.chunk.chunk + 1:
            smooth += abs(b.level_mbps - a.level_mbps)
    qoe = reward - weights.mu * rebuffer - weights.eta * smooth
    downloaded = log.downloaded_bytes
    length = log.session_length_s
    return QoeBreakdown(
        bitrate_reward=reward,
        rebuffer_penalty_s=rebuffer,
        smooth_penalty=smooth,
        qoe=qoe,
        wastage_fraction=(log.wasted_bytes / downloaded) if downloaded else 0.0,
        idle_fraction=(log.idle_total_s / length) if length else 0.0,
        unforced_idle_fraction=(log.unforced_idle_s / length) if length else 0.0,
        watch_s=log.watch_total_s,
        rebuffer_s=log.rebuffer_total_s,
    )


# --- experiment reporting --------------------------------------------------------


@dataclass
class ResultRow:
    system: str
    trace: str
    swipe_trace: str
    bucket: str
    breakdown: QoeBreakdown
    normalized_qoe: float | None = None

    def to_dict(self) -> dict:
        out = {
            "system": self.system,
            "trace": self.trace,
            "swipe_trace": self.swipe_trace,
            "bucket": self.bucket,
            **self.breakdown.to_dict(),
        }
        out["normalized_qoe"] = self.normalized_qoe
        return out


@dataclass
class Report:
    rows: list[ResultRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        """Per-(system, bucket) and per-system mean/median/stdev of QoE plus
        companion metrics."""
        out: dict[str, dict] = {}

        def stats(values: Sequence[float]) -> dict:
            return {
                "mean": statistics.fmean(values),
                "median": statistics.median(values),
                "stdev": statistics.pstdev(values) if len(values) > 1 else 0.0,
                "count": len(values),
            }

        systems = sorted({r.system for r in self.rows})
        for system in systems:
            rows = [r for r in self.rows if r.system == system]
            entry = {
                "qoe": stats([r.breakdown.qoe for r in rows]),
                "bitrate_reward": stats([r.breakdown.bitrate_reward for r in rows]),
                "rebuffer_penalty_s": stats(
                    [r.breakdown.rebuffer_penalty_s for r in rows]
                ),
                "smooth_penalty": stats([r.breakdown.smooth_penalty for r in rows]),
                "wastage_fraction": stats([r.breakdown.wastage_fraction for r in rows]),
                "idle_fraction": stats([r.breakdown.idle_fraction for r in rows]),
                "buckets": {},
            }
            for bucket in sorted({r.bucket for r in rows}):
                sub = [r.breakdown.qoe for r in rows if r.bucket == bucket]
                entry["buckets"][bucket] = stats(sub)
            out[system] = entry
        return out

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "summary": self.summary(),
            "warnings": self.warnings,
        }

    def write_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    CSV_FIELDS = [
        "system",
        "trace",
        "swipe_trace",
        "bucket",
        "bitrate_reward",
        "rebuffer_penalty_s",
        "smooth_penalty",
        "qoe",
        "normalized_qoe",
        "wastage_fraction",
        "idle_fraction",
        "unforced_idle_fraction",
        "watch_s",
        "rebuffer_s",
    ]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=self.CSV_FIELDS, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow(r.to_dict())

    @classmethod
    def read_json(cls, path: str) -> "Report":
        with open(path) as f:
            raw = json.load(f)
        report = cls(warnings=list(raw.get("warnings", [])))
        for row in raw["rows"]:
            bd = QoeBreakdown(
                bitrate_reward=row["bitrate_reward"],
                rebuffer_penalty_s=row["rebuffer_penalty_s"],
                smooth_penalty=row["smooth_penalty"],
                qoe=row["qoe"],
                wastage_fraction=row["wastage_fraction"],
                idle_fraction=row["idle_fraction"],
                unforced_idle_fraction=row["unforced_idle_fraction"],
                watch_s=row["watch_s"],
                rebuffer_s=row["rebuffer_s"],
            )
            report.rows.append(
                ResultRow(
                    system=row["system"],
                    trace=row["trace"],
                    swipe_trace=row["swipe_trace"],
                    bucket=row["bucket"],
                    breakdown=bd,
                    normalized_qoe=row.get("normalized_qoe"),
                )
            )
        return report


def normalize(report: Report, oracle_system: str = "oracle") -> Report:
    """Divide every row's QoE by the oracle's median QoE for the same bucket.

    A zero oracle median leaves the rows un-normalized and records a warning
    (negative QoE values stay negative by design).
    """
    oracle_rows = [r for r in report.rows if r.system == oracle_system]
    if not oracle_rows:
        raise ValueError(f"no rows for oracle system '{oracle_system}'")
    medians: dict[str, float] = {}
    for bucket in {r.bucket for r in oracle_rows}:
        medians[bucket] = statistics.median(
            r.breakdown.qoe for r in oracle_rows if r.bucket == bucket
        )
    for row in report.rows:
        med = medians.get(row.bucket)
        if med is None:
            report.warnings.append(f"no oracle rows for bucket '{row.bucket}'")
            row.normalized_qoe = None
        elif med == 0:
            report.warnings.append(
                f"oracle median QoE is zero for bucket '{row.bucket}'; reporting raw"
            )
            row.normalized_qoe = None
        else:
            row.normalized_qoe = row.breakdown.qoe / med
    return report
