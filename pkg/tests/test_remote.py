import logging
import string
import threading
from concurrent.futures import ThreadPoolExecutor

import pandas as pd
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from engine.clock import ManualClock
from engine.handlers import default_registry
from engine.runtime import deploy
from flow.graph import flow_to_dict, serialize_flow
from flow.rewrite import extract_offloadable
from metrics.sources import CpuCounters, HostMetricsSource, ReplayMetricsSource
from remote.client import (HttpTransport, InProcessTransport, RemoteStatusError, RemoteUnreachable,
                           RemoteValidationError, deploy_remote, execute_remote)
from remote.executor import RemoteExecutor
from remote.offload_link import offload_registry
from remote.protocol import (OffloadRequest, OffloadResponse, ProtocolError, RemoteEndpoint, decode_request,
                             decode_response, encode_request, encode_response)
from remote.server import ServerThread
from tests.builders import graph, split_flow
from utils.constants import REPLAY_COLUMNS

text = st.text(alphabet=string.ascii_letters + string.digits + " _-äé€", max_size=12)
payloads = st.dictionaries(text, text, max_size=6)
job_ids = st.integers(0, 2 ** 53)


# --- protocol ---

@settings(max_examples=1000)
@given(job_ids, payloads, st.sampled_from(["tab-ocr", "job"]))
def test_request_round_trip(job_id, payload, flow_id):
    request = OffloadRequest(job_id, flow_id, payload)
    assert decode_request(encode_request(request), flow_id) == request


@settings(max_examples=1000)
@given(job_ids, payloads, st.floats(0.0, 1e6, allow_nan=False), st.booleans(), text)
def test_response_round_trip(job_id, payload, duration, ok, detail):
    if ok:
        response = OffloadResponse(job_id, payload, duration, "ok")
    else:
        response = OffloadResponse.error(job_id, detail)
    assert decode_response(encode_response(response), job_id) == response


def test_error_body_shape():
    assert encode_response(OffloadResponse.error(3, "unknown flow")) == \
        b'{"status": "error", "error_detail": "unknown flow"}'


@pytest.mark.parametrize("body", [
    b"not json",
    b"[]",
    b'{"job_id": 1}',
    b'{"job_id": "1", "payload": {}}',
    b'{"job_id": 1, "payload": {"a": 1}}',
    b'{"job_id": 1, "payload": {}, "extra": true}',
])
def test_decode_request_rejects(body):
    with pytest.raises(ProtocolError):
        decode_request(body, "job")


@pytest.mark.parametrize("body", [
    b'{"status": "maybe"}',
    b'{"job_id": 2, "status": "ok", "payload": {}, "remote_duration_s": 0.1}',
    b'{"job_id": 1, "status": "ok", "payload": {}, "remote_duration_s": -1}',
    b'{"job_id": 1, "status": "ok", "payload": {}}',
    b'{"status": "error"}',
])
def test_decode_response_rejects(body):
    with pytest.raises(ProtocolError):
        decode_response(body, 1)


def test_endpoint_validation():
    with pytest.raises(ProtocolError):
        RemoteEndpoint("http://x", 0, 1000)
    with pytest.raises(ProtocolError):
        RemoteEndpoint("http://x", 1000, 1000, fallback="retry")


# --- executor ---

def remote_part(work_units="100"):
    return extract_offloadable(split_flow(work_units), "http://unused", "always-remote").remote_flow


def test_executor_deploys_under_the_tab_id():
    executor = RemoteExecutor()
    assert executor.deploy(remote_part()) == "tab-work"
    assert executor.deploy(remote_part()) == "tab-work"
    assert executor.flow_ids() == ["tab-work"]


def test_executor_redeploy_replaces():
    executor = RemoteExecutor()
    executor.deploy(remote_part("100"))
    executor.deploy(remote_part("200"))
    assert executor.get("tab-work").node("w").config["work_units"] == "200"


def test_executor_runs_a_job():
    executor = RemoteExecutor()
    executor.deploy(remote_part())
    response = executor.execute(OffloadRequest(7, "tab-work", {"work_units": "100"}))
    assert response.ok
    assert response.job_id == 7
    assert response.payload["work_units"] == "100"
    assert len(response.payload["result"]) == 64
    assert response.remote_duration_s >= 0


def test_executor_reports_handler_failures():
    executor = RemoteExecutor()
    executor.deploy(remote_part())
    response = executor.execute(OffloadRequest(1, "tab-work", {"work_units": "lots"}))
    assert not response.ok
    assert response.error_detail.startswith("execution failed: ")


def test_executor_rejects_multi_tab_flows():
    with pytest.raises(Exception) as err:
        RemoteExecutor().deploy(split_flow())
    assert "SingleTabRequired" in str(err.value)


def test_in_process_unknown_flow():
    transport = InProcessTransport()
    response = transport.execute(OffloadRequest(4, "nowhere", {}))
    assert (response.ok, response.job_id, response.error_detail) == (False, 4, "unknown flow")


def test_in_process_rejects_invalid_flows():
    flow = graph([("a", False), ("b", False)], [], [])
    with pytest.raises(RemoteValidationError):
        InProcessTransport().deploy(flow)


# --- HTTP binding ---

@pytest.fixture
def server():
    with ServerThread() as running:
        yield running


def test_http_deploy_get_execute(server):
    flow = remote_part()
    created = requests.post(f"{server.base_url}/flows", data=serialize_flow(flow), timeout=10)
    assert created.status_code == 201
    assert created.json() == {"flow_id": "tab-work"}

    fetched = requests.get(f"{server.base_url}/flows/tab-work", timeout=10)
    assert fetched.status_code == 200
    assert fetched.json() == flow_to_dict(flow)

    executed = requests.post(f"{server.base_url}/flows/tab-work/execute",
                             json={"job_id": 7, "payload": {"work_units": "100"}}, timeout=10)
    assert executed.status_code == 200
    body = executed.json()
    assert set(body) == {"job_id", "status", "payload", "remote_duration_s"}
    assert (body["job_id"], body["status"]) == (7, "ok")


def test_http_rejects_invalid_flow(server):
    response = requests.post(f"{server.base_url}/flows", data=serialize_flow(split_flow("0")), timeout=10)
    assert response.status_code == 422
    codes = [v["code"] for v in response.json()["violations"]]
    assert "InvalidConfig" in codes


def test_http_rejects_malformed_document(server):
    response = requests.post(f"{server.base_url}/flows", data="{nope", timeout=10)
    assert response.status_code == 422
    assert response.json()["violations"][0]["code"] == "Malformed"


def test_http_rejects_undecodable_document(server):
    response = requests.post(f"{server.base_url}/flows", data=b'{"tabs": "\xff\xfe"}', timeout=10)
    assert response.status_code == 422
    (violation,) = response.json()["violations"]
    assert violation["code"] == "Malformed"


def test_http_access_log_covers_unmatched_routes(server, caplog):
    caplog.set_level(logging.INFO, logger="remote.server")
    assert requests.get(f"{server.base_url}/nothing", timeout=10).status_code == 404
    assert "GET /nothing -> 404" in caplog.text


def test_http_unknown_flow(server):
    executed = requests.post(f"{server.base_url}/flows/nowhere/execute", json={"job_id": 1, "payload": {}},
                             timeout=10)
    assert executed.status_code == 404
    assert executed.json() == {"status": "error", "error_detail": "unknown flow"}
    assert requests.get(f"{server.base_url}/flows/nowhere", timeout=10).status_code == 404


def test_http_bad_request_body(server):
    requests.post(f"{server.base_url}/flows", data=serialize_flow(remote_part()), timeout=10)
    response = requests.post(f"{server.base_url}/flows/tab-work/execute", data=b"{}", timeout=10)
    assert response.status_code == 400
    assert response.json()["status"] == "error"


def test_http_concurrent_executes(server):
    endpoint = RemoteEndpoint(server.base_url, 2000, 30000)
    transport = HttpTransport(endpoint)
    assert deploy_remote(endpoint, remote_part(), transport) == "tab-work"

    def run(job_id):
        return execute_remote(endpoint, OffloadRequest(job_id, "tab-work", {"n": str(job_id)}))

    with ThreadPoolExecutor(10) as pool:
        responses = list(pool.map(run, range(1, 11)))
    assert [r.job_id for r in responses] == list(range(1, 11))
    assert all(r.ok for r in responses)
    assert len({r.payload["result"] for r in responses}) == 10


def test_http_transport_round_trips(server):
    transport = HttpTransport(RemoteEndpoint(server.base_url, 2000, 30000))
    flow = remote_part()
    transport.deploy(flow)
    assert transport.fetch("tab-work") == flow
    assert transport.fetch("nowhere") is None
    response = transport.execute(OffloadRequest(3, "nowhere", {}))
    assert (response.ok, response.job_id, response.error_detail) == (False, 3, "unknown flow")


def test_http_transport_validation_error(server):
    transport = HttpTransport(RemoteEndpoint(server.base_url, 2000, 30000))
    with pytest.raises(RemoteValidationError) as err:
        transport.deploy(split_flow())
    assert [v.code for v in err.value.violations] == ["SingleTabRequired"]


class OneAnswerSession:
    def __init__(self, status, content):
        self.answer = requests.Response()
        self.answer.status_code = status
        self.answer._content = content
        self.answer.encoding = "utf-8"

    def request(self, method, url, **kwargs):
        return self.answer


def test_http_transport_unparsable_rejection():
    session = OneAnswerSession(422, b"<html>upstream rejected</html>")
    transport = HttpTransport(RemoteEndpoint("http://edge-cloud:1880", 2000, 30000), session)
    with pytest.raises(RemoteStatusError) as err:
        transport.deploy(remote_part())
    assert err.value.status == 422
    assert "upstream rejected" in str(err.value)


def test_unreachable_endpoint():
    with ServerThread() as running:
        url = running.base_url
    transport = HttpTransport(RemoteEndpoint(url, 500, 1000))
    with pytest.raises(RemoteUnreachable):
        transport.deploy(remote_part())


# --- offload-link ---

def replay_source():
    frame = pd.DataFrame([(0, 0.5, 0.5, 50.0, 0, 1200)], columns=REPLAY_COLUMNS)
    return ReplayMetricsSource(frame, clock=ManualClock())


def offloaded_engine(policy, transport, source=None, fallback="local", registry=None, max_workers=0):
    rewrite = extract_offloadable(split_flow("50"), "in-process", policy)
    source = source or replay_source()
    handlers = offload_registry([rewrite.remote_flow], transport, source, fallback, registry=registry)
    return deploy(rewrite.local_flow, handlers, max_workers=max_workers), rewrite, source


def remote_transport(registry=None):
    transport = InProcessTransport(RemoteExecutor(registry))
    transport.deploy(remote_part("50"))
    return transport


def test_always_local_runs_every_job_here():
    handle, _, _ = offloaded_engine("always-local", remote_transport())
    for _ in range(3):
        handle.inject({"image": "a"})
    records = handle.drain()
    assert [r.location for r in records] == ["local"] * 3
    assert all(r.success for r in records)


def test_always_remote_runs_every_job_remotely():
    handle, _, source = offloaded_engine("always-remote", remote_transport())
    for _ in range(3):
        handle.inject({"image": "a"})
    records = handle.drain()
    assert [r.location for r in records] == ["remote"] * 3
    assert source.gauge.value == 0


def test_same_output_wherever_the_job_runs():
    local, _, _ = offloaded_engine("always-local", remote_transport())
    remote, _, _ = offloaded_engine("always-remote", remote_transport())
    local.inject({"image": "a"})
    remote.inject({"image": "a"})
    assert local.drain()[0].outputs == remote.drain()[0].outputs


def test_fallback_runs_locally_when_the_remote_fails():
    handle, _, _ = offloaded_engine("always-remote", InProcessTransport(), fallback="local")
    handle.inject({})
    (record,) = handle.drain()
    assert record.success
    assert record.location == "local"


def test_fail_mode_marks_the_job_failed():
    handle, _, _ = offloaded_engine("always-remote", InProcessTransport(), fallback="fail")
    handle.inject({})
    (record,) = handle.drain()
    assert not record.success
    assert record.location == "remote"
    assert "unknown flow" in record.error


def test_fifth_concurrent_job_goes_remote(tmp_path):
    gate = threading.Event()
    entered = threading.Semaphore(0)

    def gated(node, message, context):
        entered.release()
        gate.wait(30)
        return message.payload

    registry = default_registry()
    registry["gated"] = gated
    flow = graph([("main", False), ("job", True)],
                 [("in", "main", "inject"), ("lo", "main", "link-out"), ("li", "main", "link-in"),
                  ("out", "main", "sink"), ("j-in", "job", "link-in"), ("g", "job", "gated"),
                  ("j-out", "job", "link-out")],
                 [("in", "lo"), ("lo", "j-in"), ("j-in", "g"), ("g", "j-out"), ("j-out", "li"), ("li", "out")])
    rewrite = extract_offloadable(flow, "in-process", "jobs:4")
    transport = InProcessTransport(RemoteExecutor(default_registry()))
    transport.deploy(graph([("job", True)], [("j-in", "job", "link-in"), ("j-out", "job", "link-out")],
                           [("j-in", "j-out")]))
    counters = iter([CpuCounters(0.0, 0.0)] * 16)
    (tmp_path / "t").write_text("50000\n")
    (tmp_path / "f").write_text("1200000\n")
    source = HostMetricsSource(thermal_path=str(tmp_path / "t"), freq_path=str(tmp_path / "f"), cores=4,
                               counter_reader=lambda: next(counters), memory_reader=lambda: 0.5,
                               clock=ManualClock())
    handlers = offload_registry([rewrite.remote_flow], transport, source, "fail", registry=registry)
    handle = deploy(rewrite.local_flow, handlers, max_workers=5)

    for _ in range(4):
        handle.inject({})
    for _ in range(4):
        assert entered.acquire(timeout=10)
    assert source.gauge.value == 4
    handle.inject({})
    gate.set()
    records = handle.drain(timeout=30)
    handle.shutdown()
    assert [r.location for r in records] == ["local"] * 4 + ["remote"]
    assert source.gauge.value == 0


def test_remote_url_does_not_route_offloads():
    transport = remote_transport()
    rewrite = extract_offloadable(split_flow("50"), "http://edge-cloud.invalid:1880", "always-remote")
    handle = deploy(rewrite.local_flow, offload_registry([rewrite.remote_flow], transport, replay_source()),
                    max_workers=0)
    handle.inject({"image": "a"})
    (record,) = handle.drain()
    assert (record.location, record.success) == ("remote", True)


class GaugeWatchingTransport:
    def __init__(self, inner, source):
        self.inner = inner
        self.source = source
        self.seen = []

    def execute(self, request):
        self.seen.append(self.source.gauge.value)
        return self.inner.execute(request)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.dictionaries(st.sampled_from(["image", "source", "tag"]), text, max_size=3), min_size=1, max_size=8))
def test_always_remote_never_counts_a_local_job(jobs):
    source = replay_source()
    transport = GaugeWatchingTransport(remote_transport(), source)
    handle, _, _ = offloaded_engine("always-remote", transport, source=source)
    for payload in jobs:
        handle.inject(payload)
    records = handle.drain()
    assert transport.seen == [0] * len(jobs)
    assert [r.location for r in records] == ["remote"] * len(jobs)
    assert source.gauge.value == 0
