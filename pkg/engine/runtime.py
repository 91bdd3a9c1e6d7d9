"""Message-driven execution of flow graphs.

Each injected payload becomes a job. A job's traversal runs on one worker thread,
node by node in wire order; distinct jobs run concurrently. With max_workers=0
the traversal runs inline inside inject().
"""
import itertools
import logging
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from engine.clock import Clock, RealClock
from engine.handlers import default_registry
from engine.stats import JobRecord
from flow.graph import FlowGraph, FlowSemanticError, validate
from utils.constants import DEFAULT_MAX_WORKERS
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class EngineError(EdgeflowError):
    pass


class UnresolvedKind(EngineError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"no handler registered for node kind '{kind}'")


class NoInjectNode(EngineError):
    pass


class EngineShutDown(EngineError):
    pass


class CycleDetected(EngineError):
    pass


class HandlerError(EngineError):
    def __init__(self, node_id, exception):
        self.node_id = node_id
        super().__init__(f"handler of node '{node_id}' failed: {exception}")


class DrainTimeout(EngineError):
    def __init__(self, records):
        self.records = records
        missing = [r.job_id for r in records if not r.complete]
        super().__init__(f"{len(missing)} job(s) still running after drain timeout: {missing}")


@dataclass(frozen=True)
class Message:
    job_id: int
    payload: Dict[str, str]
    injected_at: float
    hops: Tuple[str, ...] = ()


@dataclass
class JobContext:
    """Per-job state handlers may update (the offload-link records where work ran)"""
    job_id: int
    injected_at: float
    location: str = "local"
    failed: bool = False
    error: Optional[str] = None


@dataclass
class Traversal:
    outputs: List[Dict[str, str]] = field(default_factory=list)
    exits: List[Dict[str, str]] = field(default_factory=list)


class FlowIndex:
    """Lookup tables over a FlowGraph, built once per deployment"""

    def __init__(self, flow: FlowGraph):
        self.flow = flow
        self.nodes = {n.id: n for n in flow.nodes}
        self.successors = {n.id: [] for n in flow.nodes}
        for wire in flow.wires:
            self.successors[wire.source].append(wire.target)


def run_traversal(index: FlowIndex, start_id, payload, registry, context: JobContext) -> Traversal:
    """Run one job from start_id; payloads reaching sinks or flow exits are collected"""
    result = Traversal()
    queue = deque([(start_id, Message(context.job_id, dict(payload), context.injected_at))])
    while queue:
        node_id, message = queue.popleft()
        if node_id in message.hops:
            raise CycleDetected(f"job {context.job_id} revisited node '{node_id}' via {' -> '.join(message.hops)}")
        node = index.nodes[node_id]
        handler = registry.get(node.kind)
        if handler is None:
            raise UnresolvedKind(node.kind)
        try:
            out = handler(node, message, context)
        except EdgeflowError:
            raise
        except Exception as e:
            raise HandlerError(node_id, e) from e
        if out is None:
            continue

        successors = index.successors[node_id]
        if node.kind == "sink":
            result.outputs.append(dict(out))
        elif node.kind in ("link-out", "offload-link") and not successors:
            result.outputs.append(dict(out))
            result.exits.append(dict(out))
        hops = message.hops + (node_id,)
        for target in successors:
            queue.append((target, Message(message.job_id, dict(out), message.injected_at, hops)))
    return result


class EngineHandle:
    def __init__(self, flow: FlowGraph, registry, clock: Clock, max_workers, on_complete=None):
        self.flow = flow
        self.index = FlowIndex(flow)
        self.registry = registry
        self.clock = clock
        self.inject_points = [n.id for n in flow.nodes if n.kind == "inject"]
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._records: Dict[int, JobRecord] = {}
        self._futures = {}
        self._started: Dict[int, float] = {}
        self._pool = ThreadPoolExecutor(max_workers, thread_name_prefix="edgeflow-job") if max_workers else None
        self._closed = False
        self.on_complete = on_complete

    def inject(self, payload, inject_id=None) -> int:
        if self._closed:
            raise EngineShutDown("engine has been shut down")
        if not self.inject_points:
            raise NoInjectNode("flow has no inject node")
        start = inject_id or self.inject_points[0]
        if start not in self.inject_points:
            raise NoInjectNode(f"'{start}' is not an inject node")

        with self._lock:
            job_id = next(self._ids)
            started_at = self.clock.now()
            self._started[job_id] = started_at
            if self._pool is not None:
                self._futures[job_id] = self._pool.submit(self._run, job_id, start, dict(payload), started_at)
        if self._pool is None:
            self._run(job_id, start, dict(payload), started_at)
        return job_id

    def _run(self, job_id, start, payload, started_at):
        context = JobContext(job_id, started_at)
        outputs = []
        try:
            outputs = run_traversal(self.index, start, payload, self.registry, context).outputs
        except Exception as e:
            logger.warning("job %d failed: %s", job_id, e)
            context.failed = True
            context.error = str(e)
        finished_at = self.clock.now()
        record = JobRecord(job_id, context.location, finished_at - started_at, not context.failed,
                           started_at, finished_at, outputs, context.error)
        with self._lock:
            self._records[job_id] = record
        if self.on_complete is not None:
            self.on_complete(record)
        return record

    def drain(self, timeout=None) -> List[JobRecord]:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            with self._lock:
                futures = list(self._futures.values())
            remaining = None if deadline is None else max(deadline - time.monotonic(), 0.0)
            _, not_done = wait(futures, timeout=remaining)
            with self._lock:
                # completion callbacks may have injected more jobs meanwhile
                settled = len(self._futures) == len(futures)
            if not_done or settled:
                break
        with self._lock:
            records = dict(self._records)
            started = dict(self._started)
        if not_done:
            for job_id, started_at in started.items():
                if job_id not in records:
                    records[job_id] = JobRecord(job_id, "local", 0.0, False, started_at, started_at,
                                                error="incomplete", complete=False)
            raise DrainTimeout([records[k] for k in sorted(records)])
        return [records[k] for k in sorted(records)]

    def shutdown(self, wait_for_jobs=True):
        self._closed = True
        if self._pool is not None:
            self._pool.shutdown(wait=wait_for_jobs)


def deploy(flow: FlowGraph, registry=None, clock: Optional[Clock] = None,
           max_workers=DEFAULT_MAX_WORKERS, on_complete=None) -> EngineHandle:
    violations = validate(flow)
    if violations:
        raise FlowSemanticError(violations)
    registry = default_registry() if registry is None else registry
    for kind in flow.kinds():
        if kind not in registry:
            raise UnresolvedKind(kind)
    handle = EngineHandle(flow, registry, clock or RealClock(), max_workers, on_complete)
    logger.info("deployed flow: %d nodes, %d inject point(s)", len(flow.nodes), len(handle.inject_points))
    return handle


def inject(handle: EngineHandle, payload, inject_id=None) -> int:
    return handle.inject(payload, inject_id)


def drain(handle: EngineHandle, timeout=None) -> List[JobRecord]:
    return handle.drain(timeout)


def shutdown(handle: EngineHandle):
    handle.shutdown()
