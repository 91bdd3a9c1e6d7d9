"""The offload-link node: decide at admission, then run the sub-flow here or remotely.

Local runs go through an in-process RemoteExecutor holding the same extracted
sub-flows, so a payload takes the same handler path wherever it executes.

The node's remote_url is informational: it records where the sub-flow was
deployed, and every remote run goes through the transport the registry was
built with.
"""
import logging
import threading
from typing import Iterable, Optional

from engine.clock import Clock, RealClock
from engine.handlers import default_registry
from flow.graph import FlowGraph
from metrics.sources import MetricsSource
from policy.decide import decide
from policy.spec import parse_policy
from remote.client import RemoteError, Transport
from remote.executor import RemoteExecutor
from remote.protocol import OffloadRequest, OffloadResponse
from utils.constants import FALLBACK_MODES
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class OffloadFailed(EdgeflowError):
    pass


class OffloadLinkHandler:
    def __init__(self, local_flows: Iterable[FlowGraph], transport: Transport, metrics_source: MetricsSource,
                 fallback="local", registry=None, clock: Optional[Clock] = None):
        if fallback not in FALLBACK_MODES:
            raise ValueError(f"fallback must be one of {FALLBACK_MODES}, got '{fallback}'")
        self.local = RemoteExecutor(registry or default_registry())
        for flow in local_flows:
            self.local.deploy(flow)
        self.transport = transport
        self.metrics_source = metrics_source
        self.fallback = fallback
        self.clock = clock or RealClock()
        self._policies = {}
        self._policies_lock = threading.Lock()

    def _policy(self, text):
        with self._policies_lock:
            if text not in self._policies:
                self._policies[text] = parse_policy(text)
            return self._policies[text]

    def _run_local(self, request: OffloadRequest) -> OffloadResponse:
        self.metrics_source.gauge.increment()
        try:
            return self.local.execute(request)
        finally:
            self.metrics_source.gauge.decrement()

    def _run_remote(self, request: OffloadRequest) -> OffloadResponse:
        try:
            return self.transport.execute(request)
        except RemoteError as e:
            return OffloadResponse.error(request.job_id, str(e))

    def __call__(self, node, message, context):
        policy = self._policy(node.config["policy"])
        snapshot = self.metrics_source.sample()
        decision = decide(policy, snapshot)
        logger.debug("job %d -> %s (%s)", message.job_id, decision.target.value, decision.reason)

        request = OffloadRequest(message.job_id, node.config["flow_id"], dict(message.payload), self.clock.now())
        if not decision.remote:
            context.location = "local"
            response = self._run_local(request)
        else:
            context.location = "remote"
            response = self._run_remote(request)
            if not response.ok and self.fallback == "local":
                logger.warning("job %d: remote execution failed (%s), running locally",
                               message.job_id, response.error_detail)
                context.location = "local"
                response = self._run_local(request)

        if not response.ok:
            raise OffloadFailed(f"job {message.job_id} failed on {context.location}: {response.error_detail}")
        return response.payload


def offload_registry(local_flows: Iterable[FlowGraph], transport: Transport, metrics_source: MetricsSource,
                     fallback="local", registry=None, clock: Optional[Clock] = None):
    """Default handlers plus an offload-link bound to the given sub-flows and transport"""
    base = dict(registry or default_registry())
    registry = dict(base)
    registry["offload-link"] = OffloadLinkHandler(local_flows, transport, metrics_source, fallback,
                                                  registry=base, clock=clock)
    return registry
