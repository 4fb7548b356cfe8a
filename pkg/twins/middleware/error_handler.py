import logging

import fastapi
from fastapi.responses import ORJSONResponse

from twins.common.response import ErrorResponse
from twins.exceptions import ErrorCode, TwinException

logger = logging.getLogger(__name__)


def _error_response(exc: TwinException, status_code: int) -> ORJSONResponse:
    body = ErrorResponse(error=exc.error_code.name, code=int(exc.error_code), message=exc.message)
    return ORJSONResponse(body.model_dump(), status_code=status_code)


async def exception_handler(request: fastapi.Request, exc):
    """
    Global exception handler

    In-protocol outcomes (200/503) are ordinary responses and never get here.
    1. TwinException ROUTE_NOT_FOUND: 404
    2. Other TwinException (bad JSON, bad config): 400 with the error body
    3. Anything else: 500, logged
    """
    if isinstance(exc, TwinException):
        status_code = 404 if exc.error_code == ErrorCode.ROUTE_NOT_FOUND else 400
        logger.info(f"{request.method} {request.url.path} -> {status_code}: {exc}")
        return _error_response(exc, status_code)

    logger.error(f"Unhandled exception in {request.method} {request.url.path}", exc_info=exc)
    return _error_response(TwinException(ErrorCode.INTERNAL_ERROR), 500)
