"""Job records, their aggregate statistics and CSV export."""
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import pandas as pd

from utils.constants import JOB_RECORD_COLUMNS
from utils.helpers import write_frame_atomic


@dataclass(frozen=True)
class JobRecord:
    job_id: int
    location: str
    duration_s: float
    success: bool
    started_at: float
    finished_at: float
    outputs: List[Dict[str, str]] = field(default_factory=list, compare=False, hash=False)
    error: Optional[str] = None
    complete: bool = True


@dataclass(frozen=True)
class EngineStats:
    jobs_total: int = 0
    local_count: int = 0
    local_fraction: float = 0.0
    avg_local_duration_s: float = 0.0
    max_local_duration_s: float = 0.0
    success_ratio: float = 0.0


def stats(records: Iterable[JobRecord]) -> EngineStats:
    """Aggregate records; only local jobs feed the duration columns"""
    records = list(records)
    if not records:
        return EngineStats()
    local = [r.duration_s for r in records if r.location == "local"]
    succeeded = sum(1 for r in records if r.success)
    total = len(records)
    return EngineStats(
        jobs_total=total,
        local_count=len(local),
        local_fraction=len(local) / total,
        # fsum is exactly rounded, so the mean does not depend on record order
        avg_local_duration_s=math.fsum(local) / len(local) if local else 0.0,
        max_local_duration_s=max(local) if local else 0.0,
        success_ratio=succeeded / total,
    )


def records_frame(records: Iterable[JobRecord]) -> pd.DataFrame:
    rows = [{
        "job_id": r.job_id,
        "location": r.location,
        "duration_s": r.duration_s,
        "success": "true" if r.success else "false",
        "started_at": r.started_at,
        "finished_at": r.finished_at,
    } for r in sorted(records, key=lambda r: r.job_id)]
    frame = pd.DataFrame(rows, columns=JOB_RECORD_COLUMNS)
    return frame.astype({"duration_s": float, "started_at": float, "finished_at": float})


def write_records_csv(path, records: Iterable[JobRecord]):
    write_frame_atomic(path, records_frame(records))
