import logging
from typing import Any, Optional

import orjson
from fastapi import APIRouter, Request
from fastapi.responses import ORJSONResponse
from starlette.concurrency import run_in_threadpool

from twins.exceptions import ErrorCode, TwinException
from twins.protocol.records import HttpMethod, RequestRecord
from twins.services.device_service import forward_to_device
from twins.services.registry import TwinRegistry

router = APIRouter()
logger = logging.getLogger(__name__)

REQUEST_ID_HEADER = "X-Request-Id"
VIRTUAL_TIME_HEADER = "X-Virtual-Time-Ms"
FORWARD_HEADER = "X-Forward-To-Device"


def _int_header(request: Request, name: str) -> Optional[int]:
    value = request.headers.get(name)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, f"Header {name} must be an integer, got {value!r}")


async def _json_body(request: Request) -> Any:
    raw = await request.body()
    if not raw:
        return None
    try:
        return orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise TwinException(ErrorCode.PARSE_ERROR, f"Request body is not valid JSON: {e}")


@router.api_route("/{rest:path}", methods=[m.value for m in HttpMethod], summary="Twin or emulated device route")
async def device_route(request: Request, rest: str):
    """
    Dispatch by serial to the owning twin (DT prefix) or emulated device
    (vendor prefix). Requests to one device are serialized by its lock;
    different devices are served in parallel worker threads.
    """
    registry: TwinRegistry = request.app.state.registry
    method = HttpMethod(request.method)
    body = await _json_body(request)
    request_id = _int_header(request, REQUEST_ID_HEADER)
    sent_at_ms = _int_header(request, VIRTUAL_TIME_HEADER)

    upstream = request.app.state.config.device_upstream
    if upstream and request.headers.get(FORWARD_HEADER) == "1":
        record = RequestRecord(id=request_id or registry.next_request_id(), serial=rest.split("/")[0],
                               method=method, route=request.url.path, body=body, sent_at_ms=sent_at_ms or 0)
        response = await forward_to_device(record, registry.mapping, upstream)
    else:
        response = await run_in_threadpool(registry.dispatch, method, request.url.path, body, request_id, sent_at_ms)
    return ORJSONResponse(response.body, status_code=response.status_code,
                          headers={"X-Response-Time-Ms": f"{response.response_time_ms:.3f}"})
