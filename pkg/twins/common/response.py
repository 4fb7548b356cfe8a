from typing import Generic, TypeVar, Optional, Union, Dict, Any, List

from pydantic import BaseModel

T = TypeVar('T')


class DeviceResponse(BaseModel, Generic[T]):
    """Body returned by twins and emulated devices for every in-protocol request."""
    status: int = 200
    response_time_ms: float = 0.0
    data: Optional[Union[T, Dict[str, Any], List[Any]]] = None
    error: Optional[Dict[str, Any]] = None


class ErrorResponse(BaseModel):
    """Body for out-of-protocol failures (unmapped route, bad input)."""
    error: str
    code: int
    message: str
