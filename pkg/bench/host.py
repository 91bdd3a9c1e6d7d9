"""Run a strategy on the real machine: real flow, host metrics, HTTP offloading."""
import logging
import os
import threading
import time
from typing import Optional

import pandas as pd

from bench.experiments import ExperimentError, StrategyRun, artifact_name, load_experiment_flow
from engine.runtime import deploy
from engine.stats import stats, write_records_csv
from flow.rewrite import extract_offloadable
from metrics.sources import HostMetricsSource
from policy.spec import can_offload, format_policy, parse_policy
from remote.client import HttpTransport, deploy_remote
from remote.offload_link import offload_registry
from remote.protocol import RemoteEndpoint
from sim.workload import WorkloadSpec, arrival_times
from utils.constants import (DEFAULT_CONNECT_TIMEOUT_MS, DEFAULT_REQUEST_TIMEOUT_MS, DEFAULT_SAMPLE_PERIOD_MS,
                             DEFAULT_SMOOTHING_ALPHA, TIMESERIES_COLUMNS)
from utils.helpers import write_frame_atomic

logger = logging.getLogger(__name__)


class HostRecorder:
    """Samples host readings on a period into the time-series columns"""

    def __init__(self, decision_source: HostMetricsSource, period_s):
        # a separate source, so recording does not shorten the decision's cpu window
        self.source = HostMetricsSource(thermal_path=decision_source.thermal_path,
                                        freq_path=decision_source.freq_path, clock=decision_source.clock)
        self.gauge = decision_source.gauge
        self.period_s = period_s
        self.rows = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="edgeflow-recorder", daemon=True)

    def _run(self):
        while not self._stop.wait(self.period_s):
            snap = self.source.sample()
            self.rows.append((snap.taken_at, snap.cpu_temp_c, snap.cpu_freq_mhz, snap.cpu_util, self.gauge.value))

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TIMESERIES_COLUMNS)


def run_host_strategy(flow_path, policy_text, workload: WorkloadSpec, output_dir, remote_url: Optional[str] = None,
                      connect_timeout_ms=DEFAULT_CONNECT_TIMEOUT_MS, request_timeout_ms=DEFAULT_REQUEST_TIMEOUT_MS,
                      fallback="local", sample_period_ms=DEFAULT_SAMPLE_PERIOD_MS,
                      smoothing_alpha=DEFAULT_SMOOTHING_ALPHA) -> StrategyRun:
    if flow_path is None:
        raise ExperimentError("host mode needs --flow")
    policy = parse_policy(policy_text)
    label = format_policy(policy)
    flow = load_experiment_flow(flow_path)
    source = HostMetricsSource(sample_period_ms=sample_period_ms, smoothing_alpha=smoothing_alpha)

    if flow.offloadable_tabs():
        if can_offload(policy) and not remote_url:
            raise ExperimentError(f"policy {label} can offload: host mode needs --remote-url")
        endpoint = RemoteEndpoint(remote_url or "http://127.0.0.1", connect_timeout_ms, request_timeout_ms, fallback)
        rewrite = extract_offloadable(flow, endpoint.base_url, label)
        transport = HttpTransport(endpoint)
        if can_offload(policy):
            deploy_remote(endpoint, rewrite.remote_flow, transport)
        registry = offload_registry([rewrite.remote_flow], transport, source, fallback, clock=source.clock)
        local_flow = rewrite.local_flow
    else:
        logger.warning("flow has no offloadable tab; every job runs locally")
        registry, local_flow = None, flow

    counter = {"injected": 0}
    lock = threading.Lock()
    handle = None

    def next_job(_record=None):
        with lock:
            if counter["injected"] >= workload.total_jobs:
                return
            counter["injected"] += 1
            number = counter["injected"]
        handle.inject({"job": str(number)})

    closed = workload.mode == "closed-loop"
    workers = workload.parallelism if closed else max(min(workload.total_jobs, 64), 1)
    handle = deploy(local_flow, registry, clock=source.clock, max_workers=workers,
                    on_complete=next_job if closed else None)

    with HostRecorder(source, sample_period_ms / 1000.0) as recorder:
        if closed:
            for _ in range(min(workload.parallelism, workload.total_jobs)):
                next_job()
        else:
            origin = time.monotonic()
            for arrival in arrival_times(workload):
                delay = arrival - (time.monotonic() - origin)
                if delay > 0:
                    time.sleep(delay)
                next_job()
        records = handle.drain()
    handle.shutdown()

    prefix = f"{artifact_name(label)}-"
    jobs_path = os.path.join(output_dir, f"{prefix}jobs.csv")
    timeseries_path = os.path.join(output_dir, f"{prefix}timeseries.csv")
    write_records_csv(jobs_path, records)
    write_frame_atomic(timeseries_path, recorder.frame())
    logger.info("host run %s: %d jobs", label, len(records))
    return StrategyRun(label, stats(records), jobs_path, timeseries_path)
