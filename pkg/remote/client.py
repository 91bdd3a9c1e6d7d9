"""Transports carrying the offload protocol to a remote executor."""
import logging
from typing import Optional, Protocol

import requests

from flow.graph import FlowGraph, FlowSemanticError, Violation, parse_flow, serialize_flow
from remote.executor import RemoteExecutor, UnknownFlow
from remote.protocol import (OffloadRequest, OffloadResponse, ProtocolError, RemoteEndpoint, decode_request,
                             decode_response, encode_request, encode_response)
from utils.constants import UNKNOWN_FLOW_DETAIL
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class RemoteError(EdgeflowError):
    pass


class RemoteUnreachable(RemoteError):
    pass


class RemoteTimeout(RemoteError):
    pass


class RemoteStatusError(RemoteError):
    def __init__(self, status, body=""):
        self.status = status
        super().__init__(f"remote answered HTTP {status}: {body[:200]}")


class RemoteValidationError(RemoteError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("remote rejected the flow: " + ", ".join(str(v) for v in self.violations))


class Transport(Protocol):
    def deploy(self, flow: FlowGraph) -> str: ...

    def execute(self, request: OffloadRequest) -> OffloadResponse: ...

    def fetch(self, flow_id) -> Optional[FlowGraph]: ...


class HttpTransport:
    """HTTP binding of the protocol, built on requests"""

    def __init__(self, endpoint: RemoteEndpoint, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.session = session or requests.Session()
        self.base_url = endpoint.base_url.rstrip("/")
        self.timeout = (endpoint.connect_timeout_ms / 1000.0, endpoint.request_timeout_ms / 1000.0)

    def _send(self, method, path, body=None):
        url = f"{self.base_url}{path}"
        try:
            return self.session.request(method, url, data=body, timeout=self.timeout,
                                        headers={"Content-Type": "application/json"})
        except requests.exceptions.ConnectTimeout as e:
            raise RemoteUnreachable(f"{url} not reachable within {self.endpoint.connect_timeout_ms} ms") from e
        except requests.exceptions.ReadTimeout as e:
            raise RemoteTimeout(f"{url} did not answer within {self.endpoint.request_timeout_ms} ms") from e
        except requests.exceptions.ConnectionError as e:
            raise RemoteUnreachable(f"{url} refused the connection: {e}") from e

    def deploy(self, flow: FlowGraph) -> str:
        response = self._send("POST", "/flows", serialize_flow(flow).encode("utf-8"))
        if response.status_code == 422:
            try:
                raw = response.json()["violations"]
            except (requests.JSONDecodeError, KeyError, TypeError) as e:
                raise RemoteStatusError(response.status_code, response.text) from e
            raise RemoteValidationError([Violation(v.get("code", ""), v.get("id"), v.get("detail", "")) for v in raw])
        if response.status_code != 201:
            raise RemoteStatusError(response.status_code, response.text)
        return response.json()["flow_id"]

    def execute(self, request: OffloadRequest) -> OffloadResponse:
        response = self._send("POST", f"/flows/{request.flow_id}/execute", encode_request(request))
        if response.status_code == 404:
            return OffloadResponse.error(request.job_id, UNKNOWN_FLOW_DETAIL)
        if response.status_code != 200:
            raise RemoteStatusError(response.status_code, response.text)
        try:
            return decode_response(response.content, request.job_id)
        except ProtocolError as e:
            raise RemoteStatusError(response.status_code, str(e)) from e

    def fetch(self, flow_id) -> Optional[FlowGraph]:
        response = self._send("GET", f"/flows/{flow_id}")
        if response.status_code == 404:
            return None
        if response.status_code != 200:
            raise RemoteStatusError(response.status_code, response.text)
        return parse_flow(response.text)


class InProcessTransport:
    """Calls a RemoteExecutor directly, still passing every message through the codec"""

    def __init__(self, executor: Optional[RemoteExecutor] = None):
        self.executor = executor or RemoteExecutor()

    def deploy(self, flow: FlowGraph) -> str:
        try:
            return self.executor.deploy(parse_flow(serialize_flow(flow)))
        except FlowSemanticError as e:
            raise RemoteValidationError(e.violations) from e

    def execute(self, request: OffloadRequest) -> OffloadResponse:
        received = decode_request(encode_request(request), request.flow_id, request.sent_at)
        try:
            response = self.executor.execute(received)
        except UnknownFlow:
            return OffloadResponse.error(request.job_id, UNKNOWN_FLOW_DETAIL)
        return decode_response(encode_response(response), request.job_id)

    def fetch(self, flow_id) -> Optional[FlowGraph]:
        flow = self.executor.get(flow_id)
        return parse_flow(serialize_flow(flow)) if flow is not None else None


def deploy_remote(endpoint: RemoteEndpoint, remote_flow: FlowGraph, transport: Optional[Transport] = None) -> str:
    transport = transport or HttpTransport(endpoint)
    flow_id = transport.deploy(remote_flow)
    logger.info("deployed '%s' to %s", flow_id, endpoint.base_url)
    return flow_id


def execute_remote(endpoint: RemoteEndpoint, request: OffloadRequest,
                   transport: Optional[Transport] = None) -> OffloadResponse:
    transport = transport or HttpTransport(endpoint)
    return transport.execute(request)
