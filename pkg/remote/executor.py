"""Remote side of the offload: holds deployed sub-flows and runs jobs on them."""
import logging
import threading
import time
from typing import Dict, List, Optional

from engine.handlers import default_registry
from engine.runtime import FlowIndex, JobContext, run_traversal
from flow.graph import FlowGraph, FlowSemanticError, Violation, validate
from flow.rewrite import RewriteError, entry_and_exit
from remote.protocol import OffloadRequest, OffloadResponse
from utils.helpers import EdgeflowError, error_body

logger = logging.getLogger(__name__)


class UnknownFlow(EdgeflowError):
    pass


class _Deployment:
    def __init__(self, flow: FlowGraph, entry_id):
        self.flow = flow
        self.index = FlowIndex(flow)
        self.entry_id = entry_id


def deployment_violations(flow: FlowGraph) -> List[Violation]:
    """Problems preventing a flow from being served; empty when deployable"""
    violations = validate(flow)
    if violations:
        return violations
    if len(flow.tabs) != 1:
        return [Violation("SingleTabRequired", None, f"remote flows have exactly one tab, got {len(flow.tabs)}")]
    try:
        entry_and_exit(flow, flow.tabs[0].id)
    except RewriteError as e:
        return [Violation(e.code, flow.tabs[0].id, e.detail)]
    return []


class RemoteExecutor:
    def __init__(self, registry=None):
        self.registry = registry or default_registry()
        self._flows: Dict[str, _Deployment] = {}
        self._lock = threading.Lock()

    def deploy(self, flow: FlowGraph) -> str:
        """Deploy a flow under its tab id; an identical redeploy keeps the running instance"""
        violations = deployment_violations(flow)
        if violations:
            raise FlowSemanticError(violations)
        flow_id = flow.tabs[0].id
        entry, _ = entry_and_exit(flow, flow_id)
        with self._lock:
            current = self._flows.get(flow_id)
            if current is not None and current.flow == flow:
                return flow_id
            self._flows[flow_id] = _Deployment(flow, entry.id)
        logger.info("deployed remote flow '%s' (%d nodes)", flow_id, len(flow.nodes))
        return flow_id

    def get(self, flow_id) -> Optional[FlowGraph]:
        with self._lock:
            deployment = self._flows.get(flow_id)
        return deployment.flow if deployment else None

    def flow_ids(self) -> List[str]:
        with self._lock:
            return sorted(self._flows)

    def execute(self, request: OffloadRequest) -> OffloadResponse:
        with self._lock:
            deployment = self._flows.get(request.flow_id)
        if deployment is None:
            raise UnknownFlow(request.flow_id)

        started = time.perf_counter()
        context = JobContext(request.job_id, 0.0)
        try:
            result = run_traversal(deployment.index, deployment.entry_id, request.payload, self.registry, context)
        except Exception as e:
            logger.warning("remote job %d on '%s' failed: %s", request.job_id, request.flow_id, e)
            return OffloadResponse.error(request.job_id, error_body("execution failed", e)["error_detail"])
        elapsed = time.perf_counter() - started
        if not result.exits:
            return OffloadResponse.error(request.job_id, "flow produced no output")
        return OffloadResponse(request.job_id, result.exits[0], elapsed, "ok")
