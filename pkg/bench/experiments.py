"""The two gateway experiments on the simulator, and their acceptance checks.

characterize: no offloading, four jobs always in flight, split at the throttle onset.
compare:      every strategy against the identical open-loop arrival sequence.
"""
import logging
import os
import re
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

from bench.report import PhaseSummary, format_phase_summary, summarize_phases, write_comparison
from engine.stats import EngineStats, stats, write_records_csv
from flow.graph import FlowGraph, load_flow
from policy.spec import format_policy, parse_policy
from sim.gateway import GatewayModel
from sim.runner import RemoteModel, SimulationResult, simulate
from sim.workload import WorkloadSpec
from utils.constants import (CHARACTERIZE_PARALLELISM, CHARACTERIZE_TOTAL_JOBS, COMPARE_INITIAL_TEMP_C,
                             COMPARE_INTER_ARRIVAL_S, COMPARE_TOTAL_JOBS, DEFAULT_SEED, DEFAULT_STRATEGIES,
                             SIM_DT_S, SIM_MAX_TIME_S)
from utils.helpers import EdgeflowError, write_atomic, write_frame_atomic

logger = logging.getLogger(__name__)


class ExperimentError(EdgeflowError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    mode: str
    policy: str
    workload: WorkloadSpec
    output_dir: str
    flow_path: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("sim", "host"):
            raise ExperimentError(f"mode must be sim or host, got '{self.mode}'")


@dataclass(frozen=True)
class SimSettings:
    model: GatewayModel = GatewayModel()
    remote: RemoteModel = RemoteModel()
    dt_s: float = SIM_DT_S
    max_time_s: float = SIM_MAX_TIME_S
    # None runs sim.runner.default_flow()
    flow: Optional[FlowGraph] = None


@dataclass
class StrategyRun:
    label: str
    stats: EngineStats
    jobs_path: str
    timeseries_path: str


@dataclass
class StrategyReport:
    runs: List[StrategyRun]
    table: object

    def by_label(self) -> Dict[str, EngineStats]:
        return {run.label: run.stats for run in self.runs}


def strategy_label(policy_text) -> str:
    return format_policy(parse_policy(policy_text))


def artifact_name(label) -> str:
    """File-name-safe form of a strategy label: cpu:0.75 -> cpu_0.75"""
    return re.sub(r"[^A-Za-z0-9.-]+", "_", label).strip("_")


def load_experiment_flow(path) -> FlowGraph:
    try:
        return load_flow(path)
    except OSError as e:
        raise ExperimentError(f"cannot read flow '{path}': {e}") from e


def _simulated_flow(settings: SimSettings, flow_path):
    return load_experiment_flow(flow_path) if flow_path else settings.flow


def write_run(out_dir, prefix, result: SimulationResult):
    jobs_path = os.path.join(out_dir, f"{prefix}jobs.csv")
    timeseries_path = os.path.join(out_dir, f"{prefix}timeseries.csv")
    write_records_csv(jobs_path, result.records)
    write_frame_atomic(timeseries_path, result.timeseries)
    return jobs_path, timeseries_path


def characterize(spec: ExperimentSpec, settings: SimSettings = SimSettings()) -> PhaseSummary:
    if spec.mode != "sim":
        raise ExperimentError("characterize runs on the simulator; use compare --mode host for a real gateway")
    policy = parse_policy(spec.policy)
    logger.info("characterizing: %s, %d jobs, parallelism %s", spec.policy, spec.workload.total_jobs,
                spec.workload.parallelism)
    result = simulate(settings.model, spec.workload, policy, settings.remote, settings.dt_s, settings.max_time_s,
                      _simulated_flow(settings, spec.flow_path))
    write_run(spec.output_dir, "", result)
    summary = summarize_phases(result.records, result.throttle_onset_s)
    write_atomic(os.path.join(spec.output_dir, "summary.txt"), format_phase_summary(summary))
    return summary


def compare(strategies: Sequence[str], workload: WorkloadSpec, output_dir,
            settings: SimSettings = SimSettings(), flow_path=None) -> StrategyReport:
    if not strategies:
        raise ExperimentError("no strategies to compare")
    policies = [parse_policy(s) for s in strategies]
    flow = _simulated_flow(settings, flow_path)
    runs = []
    for policy in policies:
        label = format_policy(policy)
        logger.info("running strategy %s", label)
        # same workload (and seed) for every strategy, so arrivals and job sizes are identical
        result = simulate(settings.model, workload, policy, settings.remote, settings.dt_s, settings.max_time_s, flow)
        jobs_path, timeseries_path = write_run(output_dir, f"{artifact_name(label)}-", result)
        runs.append(StrategyRun(label, stats(result.records), jobs_path, timeseries_path))
    table = write_comparison(output_dir, [(run.label, run.stats) for run in runs])
    return StrategyReport(runs, table)


def default_characterize_workload(seed=DEFAULT_SEED, parallelism=CHARACTERIZE_PARALLELISM,
                                  total_jobs=CHARACTERIZE_TOTAL_JOBS) -> WorkloadSpec:
    return WorkloadSpec.closed_loop(parallelism, total_jobs, seed)


def default_compare_workload(seed=DEFAULT_SEED, total_jobs=COMPARE_TOTAL_JOBS,
                             inter_arrival_s=COMPARE_INTER_ARRIVAL_S, arrival="fixed") -> WorkloadSpec:
    return WorkloadSpec.open_loop(total_jobs, inter_arrival_s, seed, arrival)


def warm_start(settings: SimSettings, initial_temp_c=COMPARE_INITIAL_TEMP_C) -> SimSettings:
    """The comparison starts on a gateway that is already warm from earlier work"""
    if settings.model.t_initial_c is not None:
        return settings
    return replace(settings, model=replace(settings.model, t_initial_c=initial_temp_c))


def check_characterization(summary: PhaseSummary, thresholds) -> List[str]:
    failures = []
    low, high = thresholds["pre_throttle_band_s"]
    share = summary.pre_in_band_share
    if share < thresholds["pre_throttle_min_share"]:
        failures.append(f"only {share * 100:.1f}% of pre-throttle jobs within [{low:g}, {high:g}] s")
    onset, tolerance = thresholds["onset_s"], thresholds["onset_tolerance_s"]
    if summary.onset_s is None or abs(summary.onset_s - onset) > tolerance:
        failures.append(f"throttle onset {summary.onset_s} s outside {onset:g} ± {tolerance:g} s")
    mean, tolerance = thresholds["post_throttle_mean_s"], thresholds["post_throttle_tolerance_s"]
    if summary.post_count == 0 or abs(summary.post_mean_s - mean) > tolerance:
        failures.append(f"post-throttle mean {summary.post_mean_s:.2f} s outside {mean:g} ± {tolerance:g} s")
    return failures


def check_comparison(report: StrategyReport, thresholds) -> List[str]:
    failures = []
    results = report.by_label()
    expected = {strategy_label(k): v for k, v in thresholds["local_percent"].items()}
    tolerance = thresholds["tolerance_points"]
    missing = [label for label in expected if label not in results]
    if missing:
        return [f"strategy {label} was not run" for label in missing]

    for label, percent in expected.items():
        observed = results[label].local_fraction * 100
        if abs(observed - percent) > tolerance:
            failures.append(f"{label}: {observed:.1f}% local, expected {percent:g} ± {tolerance:g}")

    compared = {label: results[label] for label in expected}
    lowest_max = strategy_label(thresholds["lowest_max_duration"])
    if any(st.max_local_duration_s <= compared[lowest_max].max_local_duration_s
           for label, st in compared.items() if label != lowest_max):
        failures.append(f"{lowest_max} does not have the lowest max local duration")
    highest_max = strategy_label(thresholds["highest_max_duration"])
    if any(st.max_local_duration_s >= compared[highest_max].max_local_duration_s
           for label, st in compared.items() if label != highest_max):
        failures.append(f"{highest_max} does not have the highest max local duration")
    lowest_fraction = strategy_label(thresholds["lowest_local_fraction"])
    if any(st.local_fraction <= compared[lowest_fraction].local_fraction
           for label, st in compared.items() if label != lowest_fraction):
        failures.append(f"{lowest_fraction} does not have the lowest local fraction")
    return failures


def default_strategies() -> List[str]:
    return list(DEFAULT_STRATEGIES)
