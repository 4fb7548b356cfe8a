from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class HttpMethod(str, Enum):
    GET = "GET"
    POST = "POST"
    PUT = "PUT"
    DELETE = "DELETE"


class RequestRecord(BaseModel):
    """One request addressed to a twin (or, after forking, to the emulated device)."""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Request id, unique within a corpus")
    serial: str
    method: HttpMethod
    route: str = Field(..., description="Path, e.g. /devices/100/settings/alarm")
    body: Optional[Any] = None
    sent_at_ms: int = Field(0, description="Virtual send time, ms since the clock epoch")

    def retarget(self, serial: str, route: Optional[str] = None) -> "RequestRecord":
        """Same request addressed to another device; the serial segment of the route is rewritten."""
        if route is None:
            parts = self.route.split("/")
            route = "/".join(serial if i == 2 and p == self.serial else p for i, p in enumerate(parts))
        return self.model_copy(update={"serial": serial, "route": route})


class ResponseRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    request_id: int
    status_code: int
    response_time_ms: float = Field(..., ge=0)
    body: Optional[Any] = None
    flagged: bool = Field(False, description="Synthetic response recorded for an unreachable endpoint")
