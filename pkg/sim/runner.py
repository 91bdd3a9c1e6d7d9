"""Fixed-step simulation of a workload on the virtual gateway under an offload policy.

Every job is injected into the flow engine on virtual time. The offloadable tab
sits behind an offload-link bound to the simulated metrics source and to an
in-process remote executor, so the policy decision happens where it does on a
real gateway. Work nodes do not compute anything here: each one places the
job's sampled work on the side it ran on. Local work joins the gateway, remote
jobs finish after service_time_s + rtt_s.

Arrivals are admitted at step boundaries. In closed loop a local completion
injects the next job at the completion instant, inside the step. A completion
off the gateway frees its slot at the next boundary, and the replacement is
credited the work it would have done in between.
"""
import heapq
import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import pandas as pd

from engine.clock import ManualClock
from engine.handlers import default_registry
from engine.runtime import deploy
from engine.stats import JobRecord
from flow.graph import FlowGraph, FlowNode, Tab, Wire
from flow.rewrite import extract_offloadable
from metrics.sources import SimulatedMetricsSource
from policy.spec import PolicySpec, format_policy
from remote.client import InProcessTransport
from remote.executor import RemoteExecutor
from remote.offload_link import offload_registry
from sim.gateway import GatewayModel, SimulatedGateway, admit, step
from sim.workload import WorkloadSpec, arrival_times, job_works
from utils.constants import (REMOTE_RTT_S, REMOTE_SERVICE_TIME_S, SIM_DT_S, SIM_MAX_TIME_S, SIM_REMOTE_URL,
                             SIM_WORK_KEY, TIMESERIES_COLUMNS)
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)

_EPS = 1e-9


class SimulationError(EdgeflowError):
    pass


class SimulationDiverged(SimulationError):
    pass


@dataclass(frozen=True)
class RemoteModel:
    """The cloud side: unthrottled, fixed capacity"""
    service_time_s: float = REMOTE_SERVICE_TIME_S
    rtt_s: float = REMOTE_RTT_S

    @property
    def job_duration_s(self):
        return self.service_time_s + self.rtt_s


@dataclass
class SimulationResult:
    records: List[JobRecord]
    timeseries: pd.DataFrame
    throttle_onset_s: Optional[float]


def default_flow() -> FlowGraph:
    """main: inject -> link-out, link-in -> sink; offloadable job tab: link-in -> work -> link-out"""
    return FlowGraph(
        (Tab("main", "Job intake", False), Tab("tab-job", "Job", True)),
        (FlowNode("in", "main", "inject"), FlowNode("to-job", "main", "link-out"),
         FlowNode("from-job", "main", "link-in"), FlowNode("done", "main", "sink"),
         FlowNode("job-in", "tab-job", "link-in"), FlowNode("job", "tab-job", "work", {"work_units": "1"}),
         FlowNode("job-out", "tab-job", "link-out")),
        (Wire("in", "to-job"), Wire("to-job", "job-in"), Wire("job-in", "job"), Wire("job", "job-out"),
         Wire("job-out", "from-job"), Wire("from-job", "done")),
    )


class _PlacedWork:
    """Work handler of the simulator: adds the job's sampled work to its demand on one side"""

    def __init__(self, demand: Dict[int, Counter], location):
        self.demand = demand
        self.location = location

    def __call__(self, node, message, context):
        self.demand.setdefault(message.job_id, Counter())[self.location] += float(message.payload[SIM_WORK_KEY])
        return message.payload


def _check_work_placement(flow: FlowGraph):
    """A job's work must all run on one side: inside the extracted tab, or anywhere when nothing is offloadable"""
    offloadable = flow.offloadable_tabs()
    if not offloadable:
        return
    stray = [n.id for n in flow.nodes if n.kind == "work" and n.tab != offloadable[0].id]
    if stray:
        raise SimulationError(f"work nodes outside the offloadable tab cannot be simulated: {', '.join(stray)}")


class _Run:
    def __init__(self, model, workload, policy, remote, flow):
        self.model = model
        self.workload = workload
        self.remote = remote
        self.closed = workload.mode == "closed-loop"
        self.gateway = SimulatedGateway(model)
        self.metrics = SimulatedMetricsSource(self.gateway)
        self.works = job_works(workload, model)
        self.injected = 0
        self.started = {}
        self.off_gateway = []
        self.outcomes = {}
        self.records = {}
        self.demand: Dict[int, Counter] = {}
        self.clock = ManualClock()
        self.engine = self._deploy(flow, policy)

    def _deploy(self, flow, policy):
        _check_work_placement(flow)
        registry = default_registry()
        registry["work"] = _PlacedWork(self.demand, "local")
        if flow.offloadable_tabs():
            rewrite = extract_offloadable(flow, SIM_REMOTE_URL, format_policy(policy))
            cloud = dict(registry, work=_PlacedWork(self.demand, "remote"))
            transport = InProcessTransport(RemoteExecutor(cloud))
            transport.deploy(rewrite.remote_flow)
            registry = offload_registry([rewrite.remote_flow], transport, self.metrics, registry=registry,
                                        clock=self.clock)
            flow = rewrite.local_flow
        return deploy(flow, registry, clock=self.clock, max_workers=0,
                      on_complete=lambda record: self.outcomes.__setitem__(record.job_id, record))

    def _next_job(self, t_inject):
        """Run the next job through the flow; returns its id and the work it puts on the gateway, or None"""
        self.clock.set(max(self.clock.now(), t_inject))
        work = self.works[self.injected]
        self.injected += 1
        job_id = self.engine.inject({SIM_WORK_KEY: repr(work)})
        self.started[job_id] = t_inject
        outcome = self.outcomes[job_id]
        demand = self.demand.pop(job_id, Counter())
        if outcome.success and outcome.location == "local" and demand["local"] > 0:
            return job_id, demand["local"]
        # failed jobs and jobs without local work leave at once
        remote = outcome.success and outcome.location == "remote"
        heapq.heappush(self.off_gateway, (t_inject + (self.remote.job_duration_s if remote else 0.0), job_id))
        return job_id, None

    def inject(self, t_inject, now):
        """Admit a job injected at t_inject at the step boundary now"""
        job_id, work = self._next_job(t_inject)
        if work is not None:
            credit = (now - t_inject) * self.gateway.state.join_speed
            self.gateway.state = admit(self.gateway.state, job_id, work - credit)

    def on_local_finish(self, job_id, t, running):
        self.finish(job_id, t)
        if not self.closed or self.injected == self.workload.total_jobs:
            return None
        # mid-step view: the temperature and frequency of the step start, the jobs of this instant
        self.gateway.state = replace(self.gateway.state, clock_s=t, running=dict(running))
        new_id, work = self._next_job(t)
        return None if work is None else (new_id, work)

    def finish(self, job_id, finished_at):
        started_at = self.started[job_id]
        outcome = self.outcomes.pop(job_id)
        self.records[job_id] = JobRecord(job_id, outcome.location, finished_at - started_at, outcome.success,
                                         started_at, finished_at, outcome.outputs, outcome.error)

    def row(self):
        state = self.gateway.state
        running = len(state.running)
        return (state.clock_s, state.temp_c, self.model.freq_levels_mhz[state.freq_level],
                min(running, self.model.cores) / self.model.cores, running)

    @property
    def idle(self):
        return (self.injected == self.workload.total_jobs and not self.gateway.state.running
                and not self.off_gateway)


def simulate(model: GatewayModel, workload: WorkloadSpec, policy: PolicySpec, remote: RemoteModel = RemoteModel(),
             dt_s=SIM_DT_S, max_time_s=SIM_MAX_TIME_S, flow: Optional[FlowGraph] = None) -> SimulationResult:
    """Run the workload through the flow (default_flow() when None) on the virtual gateway"""
    run = _Run(model, workload, policy, remote, flow or default_flow())
    if run.closed:
        arrival_steps = []
        for _ in range(min(workload.parallelism, workload.total_jobs)):
            run.inject(0.0, 0.0)
    else:
        arrival_steps = [round(t / dt_s) for t in arrival_times(workload)]
    next_arrival = 0

    rows = [run.row()]
    onset = None
    k = 0
    while True:
        t0 = k * dt_s
        while next_arrival < len(arrival_steps) and arrival_steps[next_arrival] <= k:
            run.inject(t0, t0)
            next_arrival += 1
        if run.idle:
            break

        t1 = (k + 1) * dt_s
        if t1 > max_time_s + _EPS:
            raise SimulationDiverged(f"workload still running after {max_time_s:g} s of virtual time")
        state = step(model, run.gateway.state, dt_s, run.on_local_finish)
        run.gateway.state = replace(state, clock_s=t1)

        # completions off the gateway free a closed-loop slot; the replacement joins at t1
        while run.off_gateway and run.off_gateway[0][0] <= t1 + _EPS:
            t, job_id = heapq.heappop(run.off_gateway)
            run.finish(job_id, t)
            if run.closed and run.injected < workload.total_jobs:
                run.inject(t, t1)

        rows.append(run.row())
        if onset is None and state.temp_c >= model.t_limit_c:
            onset = t1
        k += 1

    records = [run.records[j] for j in sorted(run.records)]
    timeseries = pd.DataFrame(rows, columns=TIMESERIES_COLUMNS)
    logger.debug("simulated %d jobs over %.1f s (throttle onset %s)", len(records), k * dt_s, onset)
    return SimulationResult(records, timeseries, onset)
