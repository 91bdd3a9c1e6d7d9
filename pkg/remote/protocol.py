"""Offload wire protocol, independent of the transport carrying it.

Execute request body:   {"job_id": 7, "payload": {"k": "v"}}
Success response body:  {"job_id": 7, "status": "ok", "payload": {...}, "remote_duration_s": 0.42}
Error response body:    {"status": "error", "error_detail": "..."}

flow_id travels in the URL and sent_at stays with the sender, so both are
supplied to the decoders by the caller. Error bodies carry no job id; the
client restores it from its request.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

from utils.constants import FALLBACK_MODES
from utils.helpers import EdgeflowError


class ProtocolError(EdgeflowError):
    pass


@dataclass(frozen=True)
class OffloadRequest:
    job_id: int
    flow_id: str
    payload: Dict[str, str] = field(default_factory=dict)
    sent_at: float = 0.0


@dataclass(frozen=True)
class OffloadResponse:
    job_id: int
    payload: Dict[str, str] = field(default_factory=dict)
    remote_duration_s: float = 0.0
    status: str = "ok"
    error_detail: Optional[str] = None

    @classmethod
    def error(cls, job_id, detail):
        return cls(job_id, {}, 0.0, "error", detail)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    connect_timeout_ms: int
    request_timeout_ms: int
    fallback: str = "local"

    def __post_init__(self):
        if self.connect_timeout_ms <= 0 or self.request_timeout_ms <= 0:
            raise ProtocolError("endpoint timeouts must be positive")
        if self.fallback not in FALLBACK_MODES:
            raise ProtocolError(f"fallback must be one of {FALLBACK_MODES}, got '{self.fallback}'")


def _check_payload(payload):
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object")
    for key, value in payload.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ProtocolError(f"payload entries must be strings, got {key!r}: {value!r}")
    return payload


def _check_job_id(job_id):
    if not isinstance(job_id, int) or isinstance(job_id, bool):
        raise ProtocolError(f"job_id must be an integer, got {job_id!r}")
    return job_id


def _load(body):
    if isinstance(body, (bytes, bytearray)):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ProtocolError(f"body is not UTF-8: {e}")
    try:
        data = json.loads(body)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed body: {e.msg}")
    if not isinstance(data, dict):
        raise ProtocolError("body must be an object")
    return data


def _dump(data) -> bytes:
    return json.dumps(data, ensure_ascii=False, allow_nan=False).encode("utf-8")


def encode_request(request: OffloadRequest) -> bytes:
    return _dump({"job_id": _check_job_id(request.job_id), "payload": _check_payload(request.payload)})


def decode_request(body, flow_id, sent_at=0.0) -> OffloadRequest:
    data = _load(body)
    unknown = set(data) - {"job_id", "payload"}
    if unknown or "job_id" not in data or "payload" not in data:
        raise ProtocolError("request body must have exactly the fields job_id and payload")
    return OffloadRequest(_check_job_id(data["job_id"]), flow_id, _check_payload(data["payload"]), sent_at)


def encode_response(response: OffloadResponse) -> bytes:
    if response.status == "error":
        return _dump({"status": "error", "error_detail": response.error_detail or ""})
    if response.status != "ok":
        raise ProtocolError(f"unknown status '{response.status}'")
    duration = response.remote_duration_s
    if not math.isfinite(duration) or duration < 0:
        raise ProtocolError(f"remote_duration_s must be a finite non-negative number, got {duration}")
    return _dump({
        "job_id": _check_job_id(response.job_id),
        "status": "ok",
        "payload": _check_payload(response.payload),
        "remote_duration_s": duration,
    })


def decode_response(body, job_id) -> OffloadResponse:
    """Decode a response to the request that carried job_id"""
    data = _load(body)
    status = data.get("status")
    if status == "error":
        if set(data) != {"status", "error_detail"} or not isinstance(data["error_detail"], str):
            raise ProtocolError("error body must have exactly the fields status and error_detail")
        return OffloadResponse.error(job_id, data["error_detail"])
    if status != "ok":
        raise ProtocolError(f"unknown status {status!r}")
    if set(data) != {"job_id", "status", "payload", "remote_duration_s"}:
        raise ProtocolError("ok body must have the fields job_id, status, payload and remote_duration_s")
    echoed = _check_job_id(data["job_id"])
    if echoed != job_id:
        raise ProtocolError(f"response for job {echoed} does not match request {job_id}")
    duration = data["remote_duration_s"]
    if isinstance(duration, bool) or not isinstance(duration, (int, float)) or duration < 0:
        raise ProtocolError(f"remote_duration_s must be a non-negative number, got {duration!r}")
    return OffloadResponse(echoed, _check_payload(data["payload"]), float(duration), "ok")
