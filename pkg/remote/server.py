"""HTTP binding of the remote executor, served with aiohttp.

    POST /flows                    201 {"flow_id": ...} | 422 {"violations": [...]}
    POST /flows/{flow_id}/execute  200 ok or error body | 404 unknown flow
    GET  /flows/{flow_id}          200 flow document    | 404
"""
import asyncio
import json
import logging
import threading
from typing import Optional

from aiohttp import web

from flow.graph import FlowSemanticError, FlowSyntaxError, Violation, flow_to_dict, parse_flow
from remote.executor import RemoteExecutor, UnknownFlow
from remote.protocol import ProtocolError, decode_request, encode_response
from utils.constants import DEFAULT_SERVE_HOST, DEFAULT_SERVE_PORT, UNKNOWN_FLOW_DETAIL
from utils.helpers import EdgeflowError, error_body

logger = logging.getLogger(__name__)

EXECUTOR_KEY = web.AppKey("executor", RemoteExecutor)


class ServeError(EdgeflowError):
    pass


@web.middleware
async def access_log(request, handler):
    try:
        response = await handler(request)
    except web.HTTPException as e:
        logger.info("%s %s -> %d", request.method, request.path, e.status)
        raise
    logger.info("%s %s -> %d", request.method, request.path, response.status)
    return response


def _json(data, status):
    return web.json_response(data, status=status, dumps=lambda d: json.dumps(d, ensure_ascii=False))


async def deploy_flow(request):
    executor = request.app[EXECUTOR_KEY]
    body = await request.read()
    try:
        flow = parse_flow(body.decode("utf-8"))
        flow_id = executor.deploy(flow)
    except FlowSemanticError as e:
        return _json({"violations": [v.to_dict() for v in e.violations]}, 422)
    except (FlowSyntaxError, UnicodeDecodeError) as e:
        return _json({"violations": [Violation("Malformed", None, str(e)).to_dict()]}, 422)
    return _json({"flow_id": flow_id}, 201)


async def execute_job(request):
    executor = request.app[EXECUTOR_KEY]
    flow_id = request.match_info["flow_id"]
    if executor.get(flow_id) is None:
        return _json(error_body(UNKNOWN_FLOW_DETAIL), 404)
    try:
        offload = decode_request(await request.read(), flow_id)
    except ProtocolError as e:
        return _json(error_body("bad request", e), 400)

    loop = asyncio.get_running_loop()
    try:
        # handlers are CPU-bound, keep them off the event loop
        response = await loop.run_in_executor(None, executor.execute, offload)
    except UnknownFlow:
        return _json(error_body(UNKNOWN_FLOW_DETAIL), 404)
    return web.Response(body=encode_response(response), status=200, content_type="application/json")


async def get_flow(request):
    flow = request.app[EXECUTOR_KEY].get(request.match_info["flow_id"])
    if flow is None:
        return _json(error_body(UNKNOWN_FLOW_DETAIL), 404)
    return _json(flow_to_dict(flow), 200)


def create_app(executor: Optional[RemoteExecutor] = None) -> web.Application:
    app = web.Application(middlewares=[access_log])
    app[EXECUTOR_KEY] = executor or RemoteExecutor()
    app.router.add_post("/flows", deploy_flow)
    app.router.add_post("/flows/{flow_id}/execute", execute_job)
    app.router.add_get("/flows/{flow_id}", get_flow)
    return app


def serve(host=DEFAULT_SERVE_HOST, port=DEFAULT_SERVE_PORT, executor: Optional[RemoteExecutor] = None):
    """Serve until interrupted (SIGINT or SIGTERM)"""
    logger.info("serving remote executor on http://%s:%d", host, port)
    try:
        web.run_app(create_app(executor), host=host, port=port, print=None)
    except OSError as e:
        raise ServeError(f"cannot bind {host}:{port}: {e}") from e


class ServerThread:
    """Runs the app on a private event loop in a background thread"""

    def __init__(self, executor: Optional[RemoteExecutor] = None, host=DEFAULT_SERVE_HOST, port=0):
        self.app = create_app(executor)
        self.host = host
        self.port = port
        self._loop = asyncio.new_event_loop()
        self._runner = web.AppRunner(self.app)
        self._ready = threading.Event()
        self._error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._run, name="edgeflow-serve", daemon=True)

    @property
    def base_url(self):
        return f"http://{self.host}:{self.port}"

    def _run(self):
        asyncio.set_event_loop(self._loop)
        try:
            self._loop.run_until_complete(self._runner.setup())
            site = web.TCPSite(self._runner, self.host, self.port)
            self._loop.run_until_complete(site.start())
            self.port = self._runner.addresses[0][1]
        except BaseException as e:
            self._error = e
            self._ready.set()
            return
        self._ready.set()
        self._loop.run_forever()
        self._loop.run_until_complete(self._runner.cleanup())
        self._loop.run_until_complete(self._loop.shutdown_default_executor())
        self._loop.close()

    def start(self) -> str:
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise ServeError(f"cannot bind {self.host}:{self.port}: {self._error}") from self._error
        logger.info("remote executor listening on %s", self.base_url)
        return self.base_url

    def stop(self):
        if self._thread.is_alive():
            self._loop.call_soon_threadsafe(self._loop.stop)
            self._thread.join()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
