import asyncio
import logging
import time
from typing import Optional

import aiohttp

from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.protocol.records import RequestRecord, ResponseRecord
from twins.services.mapping_service import ApiMapping
from twins.utils.http_client import AsyncHttpClient

logger = logging.getLogger(__name__)


async def forward_to_device(request: RequestRecord, mapping: ApiMapping, upstream: Optional[str] = None,
                            client: Optional[AsyncHttpClient] = None) -> ResponseRecord:
    """
    Re-issue a twin request on the linked vendor route of the upstream device
    (physical device or emulator) and return its answer unchanged.

    The response time is the device's own figure when the body carries one,
    else the measured round trip.
    """
    upstream = upstream or SETTINGS.DEVICE_UPSTREAM
    if not upstream:
        raise TwinException(ErrorCode.DEVICE_UNREACHABLE, "No device upstream configured")
    device_route = mapping.device_route_for(request.route)

    owned = client is None
    client = client or AsyncHttpClient(base_url=upstream, timeout=SETTINGS.FORWARD_TIMEOUT_S,
                                       max_retries=SETTINGS.FORWARD_RETRIES)
    started = time.perf_counter()
    try:
        status, body = await client.request(request.method.value, device_route, json_data=request.body)
    except (aiohttp.ClientError, asyncio.TimeoutError) as e:
        logger.error(f"Device {upstream}{device_route} unreachable: {e}", exc_info=True)
        raise TwinException(ErrorCode.DEVICE_UNREACHABLE, f"Device at {upstream} unreachable: {e}")
    finally:
        if owned:
            await client.close()

    elapsed_ms = (time.perf_counter() - started) * 1000
    response_time = body.get("response_time_ms", elapsed_ms) if isinstance(body, dict) else elapsed_ms
    return ResponseRecord(request_id=request.id, status_code=status, response_time_ms=response_time, body=body)
