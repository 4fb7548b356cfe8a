"""Where forked requests go: in-process twins and emulators, or live HTTP servers."""
import logging
import time
from typing import Optional, Protocol

import httpx

from twins.behavior.runtime import TwinRuntime
from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.protocol.records import RequestRecord, ResponseRecord
from twins.services.emulator_service import ReferenceEmulator
from twins.services.mapping_service import ApiMapping, route_table
from twins.services.twin_service import handle

logger = logging.getLogger(__name__)


class Endpoint(Protocol):
    name: str

    def send(self, request: RequestRecord) -> ResponseRecord:
        ...

    def close(self) -> None:
        ...


class TwinEndpoint:
    """A twin runtime in this process; virtual time follows the requests' send times."""

    def __init__(self, runtime: TwinRuntime, mapping: Optional[ApiMapping] = None, name: str = "twin"):
        self.runtime = runtime
        self.mapping = mapping or route_table(runtime.instance.schema)
        self.name = name

    def send(self, request: RequestRecord) -> ResponseRecord:
        return handle(request, self.runtime, self.mapping)

    def close(self) -> None:
        pass


class EmulatorEndpoint:
    def __init__(self, emulator: ReferenceEmulator, name: str = "device"):
        self.emulator = emulator
        self.name = name

    def send(self, request: RequestRecord) -> ResponseRecord:
        return self.emulator.emulate(request)

    def close(self) -> None:
        pass


class HttpEndpoint:
    """
    A live server. With ``pace`` requests are held back until their virtual
    send time, mapped onto wall time through the acceleration factor.
    """

    def __init__(self, base_url: str, name: str = "http", acceleration: Optional[float] = None,
                 pace: bool = True, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.name = name
        self.acceleration = acceleration or SETTINGS.ACCELERATION
        self.pace = pace
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout_s)
        self._anchor: Optional[tuple] = None

    def _wait_for(self, sent_at_ms: int) -> None:
        if self._anchor is None:
            self._anchor = (time.monotonic(), sent_at_ms)
            return
        wall_start, virtual_start = self._anchor
        due = wall_start + (sent_at_ms - virtual_start) / 1000.0 / self.acceleration
        delay = due - time.monotonic()
        if delay > 0:
            time.sleep(delay)

    def send(self, request: RequestRecord) -> ResponseRecord:
        if self.pace:
            self._wait_for(request.sent_at_ms)
        headers = {"X-Request-Id": str(request.id), "X-Virtual-Time-Ms": str(request.sent_at_ms)}
        try:
            response = self._client.request(request.method.value, request.route, json=request.body, headers=headers)
        except httpx.HTTPError as e:
            raise TwinException(ErrorCode.ENDPOINT_UNREACHABLE, f"{self.name} at {self.base_url}: {e}")
        if response.status_code not in (200, 503):
            raise TwinException(ErrorCode.ENDPOINT_UNREACHABLE,
                                f"{self.name} answered {response.status_code} for {request.route}: {response.text}")
        body = response.json()
        return ResponseRecord(
            request_id=request.id,
            status_code=response.status_code,
            response_time_ms=float(body.get("response_time_ms", 0.0)),
            body=body,
        )

    def close(self) -> None:
        self._client.close()
