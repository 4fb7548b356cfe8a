import asyncio
import contextlib
import logging
import socket
import threading
import time
from typing import Iterable, Optional

import uvicorn
from fastapi import FastAPI, Request
from starlette.concurrency import run_in_threadpool
from starlette.middleware.base import BaseHTTPMiddleware
from starlette.types import ASGIApp

from twins.api import device_router, meta_router
from twins.behavior.runtime import TwinRuntime
from twins.common.config import SETTINGS, ServerConfig
from twins.common.otel import OtelFastAPI
from twins.exceptions import ErrorCode, TwinException
from twins.middleware.error_handler import exception_handler
from twins.services.emulator_service import ReferenceEmulator
from twins.services.registry import TwinRegistry

logger = logging.getLogger(__name__)


class TimingMiddleware(BaseHTTPMiddleware):
    """Log the wall time spent on each HTTP request."""

    def __init__(self, app: ASGIApp):
        super().__init__(app)

    async def dispatch(self, request: Request, call_next):
        start_time = time.time()
        response = await call_next(request)
        elapsed_ms = (time.time() - start_time) * 1000
        logger.debug(f"HTTP {request.method} {request.url.path} -> {response.status_code} took {elapsed_ms:.2f}ms")
        return response


async def _tick_forever(registry: TwinRegistry, interval_s: float):
    while True:
        await run_in_threadpool(registry.tick)
        await asyncio.sleep(interval_s)


def create_app(registry: TwinRegistry, config: Optional[ServerConfig] = None, tick: bool = True) -> FastAPI:
    """
    Build the communication server for the registry's twins and emulated devices.

    With ``tick`` the lifespan runs a background task that keeps each
    device's virtual clock in step with wall time x acceleration.
    """
    config = config or ServerConfig()

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        registry.start_wall()
        task = asyncio.create_task(_tick_forever(registry, SETTINGS.TICK_INTERVAL_S)) if tick else None
        logger.info(f"Serving {len(registry.twins)} twin(s) and {len(registry.emulators)} emulated device(s)")
        yield
        if task is not None:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title=SETTINGS.APP_NAME, lifespan=lifespan)
    app.state.registry = registry
    app.state.config = config

    app.add_middleware(TimingMiddleware)
    app.add_exception_handler(TwinException, exception_handler)
    app.add_exception_handler(Exception, exception_handler)

    app.include_router(meta_router.router, tags=["meta"])
    app.include_router(device_router.router, prefix=registry.mapping.dt_prefix, tags=["twins"])
    app.include_router(device_router.router, prefix=registry.mapping.vendor_prefix, tags=["devices"])

    OtelFastAPI.init(app)
    return app


class ServerHandle:
    """A server running on a background thread."""

    def __init__(self, server: uvicorn.Server, thread: threading.Thread, sock: socket.socket,
                 registry: TwinRegistry):
        self.server = server
        self.thread = thread
        self.registry = registry
        self.host, self.port = sock.getsockname()[:2]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def wait(self) -> None:
        self.thread.join()

    def stop(self, timeout: float = 10.0) -> None:
        self.server.should_exit = True
        self.thread.join(timeout)


def _bind(host: str, port: int) -> socket.socket:
    family = socket.AF_INET6 if ":" in host else socket.AF_INET
    sock = socket.socket(family, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as e:
        sock.close()
        raise TwinException(ErrorCode.BIND_FAILURE, f"Cannot bind {host}:{port}: {e}")
    sock.set_inheritable(True)
    return sock


def serve(fleet: Iterable[TwinRuntime], config: Optional[ServerConfig] = None,
          emulators: Iterable[ReferenceEmulator] = (), tick: bool = True,
          startup_timeout_s: float = 10.0) -> ServerHandle:
    """Start the communication server for ``fleet`` (and optional emulated devices) and return once it accepts."""
    config = config or ServerConfig()
    fleet = list(fleet)
    emulators = list(emulators)
    runtimes = fleet + [e.runtime for e in emulators]
    if not runtimes:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Nothing to serve: fleet and emulators are empty")
    registry = TwinRegistry(runtimes[0].instance.schema, fleet, emulators, vendor_prefix=config.vendor_route_prefix)
    for runtime in registry.runtimes():
        runtime.clock.acceleration = config.acceleration

    sock = _bind(config.host, config.port)
    app = create_app(registry, config, tick=tick)
    server = uvicorn.Server(uvicorn.Config(app, log_config=None, lifespan="on"))
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, name="twin-server", daemon=True)
    thread.start()

    deadline = time.monotonic() + startup_timeout_s
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            server.should_exit = True
            raise TwinException(ErrorCode.BIND_FAILURE, f"Server on {config.bind} did not start")
        time.sleep(0.05)
    handle = ServerHandle(server, thread, sock, registry)
    logger.info(f"Communication server listening on {handle.url}")
    return handle
