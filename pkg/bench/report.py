"""Summaries and comparison tables written next to the CSV artifacts."""
import math
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from engine.stats import JobRecord
from utils.constants import PRE_THROTTLE_BAND_S
from utils.helpers import write_atomic, write_frame_atomic

REPORT_COLUMNS = ["strategy", "jobs_total", "local_count", "local_percent", "avg_duration_s", "max_duration_s"]


@dataclass(frozen=True)
class PhaseSummary:
    """No-offload run split at the first time the gateway reached its temperature limit"""
    onset_s: Optional[float]
    pre_count: int
    pre_in_band: int
    pre_min_s: float
    pre_max_s: float
    post_count: int
    post_mean_s: float
    post_max_s: float

    @property
    def pre_in_band_share(self):
        return self.pre_in_band / self.pre_count if self.pre_count else 0.0


def summarize_phases(records: List[JobRecord], onset_s, band=PRE_THROTTLE_BAND_S) -> PhaseSummary:
    low, high = band
    local = [r for r in records if r.location == "local"]
    # before onset: finished before the limit was reached; after: started at or after it
    pre = np.array([r.duration_s for r in local if onset_s is None or r.finished_at < onset_s])
    post = np.array([r.duration_s for r in local if onset_s is not None and r.started_at >= onset_s])
    in_band = int(np.count_nonzero((pre >= low) & (pre <= high))) if pre.size else 0
    return PhaseSummary(
        onset_s=onset_s,
        pre_count=int(pre.size),
        pre_in_band=in_band,
        pre_min_s=float(pre.min()) if pre.size else 0.0,
        pre_max_s=float(pre.max()) if pre.size else 0.0,
        post_count=int(post.size),
        post_mean_s=float(math.fsum(post) / post.size) if post.size else 0.0,
        post_max_s=float(post.max()) if post.size else 0.0,
    )


def format_phase_summary(summary: PhaseSummary, band=PRE_THROTTLE_BAND_S) -> str:
    onset = "never" if summary.onset_s is None else f"{summary.onset_s:.1f} s"
    lines = [
        "Gateway performance without offloading",
        f"throttle onset: {onset}",
        f"pre-throttle jobs: {summary.pre_count}, durations {summary.pre_min_s:.2f}-{summary.pre_max_s:.2f} s, "
        f"{summary.pre_in_band_share * 100:.1f}% within [{band[0]:g}, {band[1]:g}] s",
    ]
    if summary.post_count:
        lines.append(f"post-throttle jobs: {summary.post_count}, mean {summary.post_mean_s:.2f} s, "
                     f"max {summary.post_max_s:.2f} s")
    else:
        lines.append("post-throttle jobs: none")
    return "\n".join(lines) + "\n"


def comparison_frame(results) -> pd.DataFrame:
    """results: (strategy label, EngineStats) pairs in run order"""
    rows = []
    for label, st in results:
        has_local = st.local_count > 0
        rows.append({
            "strategy": label,
            "jobs_total": st.jobs_total,
            "local_count": st.local_count,
            "local_percent": round(st.local_fraction * 100, 1),
            "avg_duration_s": round(st.avg_local_duration_s, 1) if has_local else None,
            "max_duration_s": round(st.max_local_duration_s, 1) if has_local else None,
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def format_comparison(frame: pd.DataFrame) -> str:
    header = f"{'Strategy':<28}{'Local jobs (%)':>16}{'Average duration (s)':>22}{'Max. duration (s)':>19}"
    lines = ["Performance with different offloading strategies", header]
    for row in frame.itertuples(index=False):
        if row.local_count:
            avg, peak = f"{row.avg_duration_s:.1f}", f"{row.max_duration_s:.1f}"
        else:
            avg = peak = "no local jobs"
        lines.append(f"{row.strategy:<28}{row.local_percent:>16.1f}{avg:>22}{peak:>19}")
    return "\n".join(lines) + "\n"


def write_comparison(out_dir, results):
    frame = comparison_frame(results)
    write_frame_atomic(os.path.join(out_dir, "report.csv"), frame, float_format="%.1f")
    write_atomic(os.path.join(out_dir, "report.txt"), format_comparison(frame))
    return frame
