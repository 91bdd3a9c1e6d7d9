from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from sim.gateway import GatewayModel
from utils.constants import COMPARE_INTER_ARRIVAL_S, DEFAULT_SEED
from utils.helpers import EdgeflowError


class WorkloadError(EdgeflowError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    """closed-loop keeps `parallelism` jobs in flight; open-loop injects every inter_arrival_s"""
    mode: str
    total_jobs: int
    seed: int = DEFAULT_SEED
    parallelism: Optional[int] = None
    inter_arrival_s: Optional[float] = None
    arrival: str = "fixed"

    def __post_init__(self):
        if self.total_jobs < 0:
            raise WorkloadError("total_jobs must not be negative")
        if self.mode == "closed-loop":
            if self.parallelism is None or self.parallelism < 1:
                raise WorkloadError("closed-loop workloads need parallelism >= 1")
            if self.inter_arrival_s is not None:
                raise WorkloadError("closed-loop workloads take no inter_arrival_s")
        elif self.mode == "open-loop":
            if self.inter_arrival_s is None or self.inter_arrival_s <= 0:
                raise WorkloadError("open-loop workloads need inter_arrival_s > 0")
            if self.parallelism is not None:
                raise WorkloadError("open-loop workloads take no parallelism")
            if self.arrival not in ("fixed", "poisson"):
                raise WorkloadError(f"arrival must be fixed or poisson, got '{self.arrival}'")
        else:
            raise WorkloadError(f"mode must be closed-loop or open-loop, got '{self.mode}'")

    @classmethod
    def closed_loop(cls, parallelism, total_jobs, seed=DEFAULT_SEED):
        return cls("closed-loop", total_jobs, seed, parallelism=parallelism)

    @classmethod
    def open_loop(cls, total_jobs, inter_arrival_s=COMPARE_INTER_ARRIVAL_S, seed=DEFAULT_SEED, arrival="fixed"):
        return cls("open-loop", total_jobs, seed, inter_arrival_s=inter_arrival_s, arrival=arrival)


def job_works(workload: WorkloadSpec, model: GatewayModel) -> List[float]:
    """Work units of every job: the base demand plus seeded uniform jitter"""
    rng = np.random.default_rng([workload.seed, 0])
    jitter = rng.uniform(-model.duration_jitter, model.duration_jitter, workload.total_jobs)
    return [float(model.base_job_work + j) for j in jitter]


def arrival_times(workload: WorkloadSpec) -> List[float]:
    """Injection instants of an open-loop workload"""
    if workload.mode != "open-loop":
        raise WorkloadError("only open-loop workloads have a fixed arrival schedule")
    if workload.arrival == "fixed":
        return [i * workload.inter_arrival_s for i in range(workload.total_jobs)]
    rng = np.random.default_rng([workload.seed, 1])
    gaps = rng.exponential(workload.inter_arrival_s, workload.total_jobs)
    gaps[:1] = 0.0
    return [float(t) for t in np.cumsum(gaps)]
