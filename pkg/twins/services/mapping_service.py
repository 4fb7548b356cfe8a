"""
Model-DT-Device mapping.

Every containment association path rooted at the device class becomes one
twin route under the DT prefix and the matching vendor route under the
device prefix. Collections nested below another collection take the parent
item's key as a path parameter, e.g.
``/devices/{serial}/medication-plans/{medication_plans_key}/intake-times``.
"""
import logging
import re
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.model.schema import DeviceSchema

logger = logging.getLogger(__name__)

STATUS_SEGMENT = "status"
RouteKind = Literal["object", "collection", "status"]
Side = Literal["twin", "device"]


class MappingEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_name: str
    class_path: Tuple[str, ...] = Field(..., description="Association names from the root class")
    dt_route: str
    device_route: str
    kind: RouteKind = "object"

    @property
    def params(self) -> List[str]:
        return re.findall(r"{(\w+)}", self.dt_route)


class ApiMapping(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt_prefix: str
    vendor_prefix: str
    entries: Tuple[MappingEntry, ...]

    @model_validator(mode="after")
    def _unique_routes(self):
        routes = [e.dt_route for e in self.entries]
        if len(set(routes)) != len(routes):
            raise ValueError("dt-route templates must be unique")
        return self

    def for_serial(self, serial: str) -> "ApiMapping":
        """Mapping with the serial placeholder filled in."""
        if not serial:
            raise TwinException(ErrorCode.INVALID_PARAMETERS, "Serial number must not be empty")
        entries = tuple(
            e.model_copy(update={"dt_route": e.dt_route.replace("{serial}", serial),
                                 "device_route": e.device_route.replace("{serial}", serial)})
            for e in self.entries
        )
        return self.model_copy(update={"entries": entries})

    def dt_routes(self) -> List[str]:
        return [e.dt_route for e in self.entries]

    def device_route_for(self, dt_route: str) -> str:
        """Translate a concrete twin route into the linked vendor route."""
        resolved = resolve(self, dt_route)
        if resolved.side != "twin":
            raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"{dt_route} is not a twin route")
        return self.vendor_prefix + dt_route[len(self.dt_prefix):]


class ResolvedRoute(BaseModel):
    model_config = ConfigDict(frozen=True)

    entry: MappingEntry
    side: Side
    serial: str
    keys: Tuple[str, ...] = Field((), description="Parent item keys, outermost first")
    item: Optional[str] = Field(None, description="Trailing item key on a collection route")


def _segment(association: str) -> str:
    return association.replace("_", "-")


@lru_cache(maxsize=32)
def _route_table(schema: DeviceSchema, dt_prefix: str, vendor_prefix: str) -> ApiMapping:
    entries: List[MappingEntry] = []
    for path, cls in schema.containment_paths():
        suffix = ""
        for i, assoc in enumerate(path):
            suffix += f"/{_segment(assoc.name)}"
            if assoc.many and i < len(path) - 1:
                suffix += f"/{{{assoc.name}_key}}"
        kind = "collection" if path and path[-1].many else "object"
        entries.append(MappingEntry(
            class_name=cls.name,
            class_path=tuple(a.name for a in path),
            dt_route=f"{dt_prefix}/{{serial}}{suffix}",
            device_route=f"{vendor_prefix}/{{serial}}{suffix}",
            kind=kind,
        ))
        if not path:
            entries.append(MappingEntry(
                class_name=cls.name,
                class_path=(),
                dt_route=f"{dt_prefix}/{{serial}}/{STATUS_SEGMENT}",
                device_route=f"{vendor_prefix}/{{serial}}/{STATUS_SEGMENT}",
                kind="status",
            ))
    logger.debug(f"Route table for {schema.root_class}: {len(entries)} entries")
    return ApiMapping(dt_prefix=dt_prefix, vendor_prefix=vendor_prefix, entries=tuple(entries))


def route_table(schema: DeviceSchema, dt_prefix: Optional[str] = None,
                vendor_prefix: Optional[str] = None) -> ApiMapping:
    """Serial-independent mapping; route templates keep the ``{serial}`` placeholder."""
    return _route_table(schema, dt_prefix or SETTINGS.DT_ROUTE_PREFIX, vendor_prefix or SETTINGS.VENDOR_ROUTE_PREFIX)


def generate_routes(schema: DeviceSchema, serial: str, dt_prefix: Optional[str] = None,
                    vendor_prefix: Optional[str] = None) -> ApiMapping:
    """One twin route and one vendor route per containment association path, plus the status route."""
    return route_table(schema, dt_prefix, vendor_prefix).for_serial(serial)


@lru_cache(maxsize=256)
def _pattern(template: str, collection: bool) -> re.Pattern:
    regex = re.sub(r"\\{(\w+)\\}", r"(?P<\1>[^/]+)", re.escape(template))
    if collection:
        regex += r"(?:/(?P<_item>[^/]+))?"
    return re.compile(f"^{regex}/?$")


def resolve(mapping: ApiMapping, route: str) -> ResolvedRoute:
    """Match a concrete path against the twin and vendor templates; raises ROUTE_NOT_FOUND."""
    path = route.split("?", 1)[0]
    sides = (("twin", "dt_route", mapping.dt_prefix), ("device", "device_route", mapping.vendor_prefix))
    for side, attr, prefix in sides:
        for entry in mapping.entries:
            match = _pattern(getattr(entry, attr), entry.kind == "collection").match(path)
            if match is None:
                continue
            groups: Dict[str, str] = match.groupdict()
            serial = groups.get("serial") or _serial_from(path, prefix)
            keys = tuple(groups[p] for p in entry.params if p != "serial")
            return ResolvedRoute(entry=entry, side=side, serial=serial, keys=keys, item=groups.get("_item"))
    raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"No mapping entry for route {route}")


def _serial_from(path: str, prefix: str) -> str:
    return path[len(prefix):].strip("/").split("/")[0]
