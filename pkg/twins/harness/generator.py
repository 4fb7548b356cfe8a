"""Random request generation: every property drawn inside or outside its constraint interval."""
import logging
from datetime import date, timedelta
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.model.schema import ClassDef, DeviceSchema, PropertyDef, SemanticType
from twins.protocol.records import HttpMethod, RequestRecord
from twins.services.mapping_service import ApiMapping, MappingEntry

logger = logging.getLogger(__name__)

DEFAULT_ROUTES = ("settings", "settings/date-and-time", "settings/display", "settings/alarm")
# Span used for integer properties bounded on one side only (or not at all)
OPEN_SPAN = 100
BASE_DATE = date(2024, 1, 1)


class GeneratorConfig(BaseModel):
    seed: int = Field(default_factory=lambda: SETTINGS.SEED)
    invalid_rate: float = Field(default_factory=lambda: SETTINGS.INVALID_RATE, ge=0, le=1)
    routes: Tuple[str, ...] = Field(DEFAULT_ROUTES, description="Route suffixes below /devices/{serial}")
    method: HttpMethod = HttpMethod.POST


def _suffix(entry: MappingEntry) -> str:
    return "/".join(a.replace("_", "-") for a in entry.class_path)


def routes_in_scope(mapping: ApiMapping, cfg: GeneratorConfig) -> List[MappingEntry]:
    by_suffix = {_suffix(e): e for e in mapping.entries if e.kind == "object"}
    missing = [r for r in cfg.routes if r not in by_suffix]
    if missing:
        raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"Routes not in mapping: {missing}")
    return [by_suffix[r] for r in cfg.routes]


def draw_valid(schema: DeviceSchema, cls: ClassDef, prop: PropertyDef, rng: np.random.Generator) -> Any:
    t = prop.type
    if t == SemanticType.INTEGER:
        lower, upper = schema.bounds_for(cls.name, prop.name)
        lower = int(lower) if lower is not None else (int(upper) - OPEN_SPAN if upper is not None else 0)
        upper = int(upper) if upper is not None else lower + OPEN_SPAN
        return int(rng.integers(lower, upper + 1))
    if t == SemanticType.BOOLEAN:
        return bool(rng.integers(0, 2))
    if t == SemanticType.ENUM:
        literals = schema.get_enum(prop.enum).literals
        return literals[int(rng.integers(0, len(literals)))]
    if t == SemanticType.TIME:
        return f"{int(rng.integers(0, 24)):02d}:{int(rng.integers(0, 60)):02d}"
    if t == SemanticType.DATE:
        return (BASE_DATE + timedelta(days=int(rng.integers(0, 365)))).isoformat()
    if t == SemanticType.DATETIME:
        day = BASE_DATE + timedelta(days=int(rng.integers(0, 365)))
        return f"{day.isoformat()}T{int(rng.integers(0, 24)):02d}:{int(rng.integers(0, 60)):02d}:00"
    return f"{prop.name.replace('_', ' ').title().replace(' ', '')}{int(rng.integers(1, 10))}"


def draw_invalid(schema: DeviceSchema, cls: ClassDef, prop: PropertyDef, rng: np.random.Generator) -> Any:
    t = prop.type
    if t == SemanticType.INTEGER:
        lower, upper = schema.bounds_for(cls.name, prop.name)
        offset = int(rng.integers(1, OPEN_SPAN + 1))
        sides = [s for s, b in (("below", lower), ("above", upper)) if b is not None]
        if not sides:
            return str(offset)
        side = sides[int(rng.integers(0, len(sides)))]
        return int(lower) - offset if side == "below" else int(upper) + offset
    if t == SemanticType.BOOLEAN:
        return ["yes", "no", 1, 0][int(rng.integers(0, 4))]
    if t == SemanticType.ENUM:
        return f"Not{schema.get_enum(prop.enum).literals[0]}"
    if t == SemanticType.TIME:
        return ["25:61", "24:00", "9am", "12:60"][int(rng.integers(0, 4))]
    if t in (SemanticType.DATE, SemanticType.DATETIME):
        return ["2024-13-40", "2024-02-30", "yesterday"][int(rng.integers(0, 3))]
    return int(rng.integers(0, OPEN_SPAN))


def generate_body(schema: DeviceSchema, cls: ClassDef, invalid_rate: float, rng: np.random.Generator) -> Dict[str, Any]:
    body = {}
    for prop in cls.properties:
        if rng.random() < invalid_rate:
            body[prop.name] = draw_invalid(schema, cls, prop, rng)
        else:
            body[prop.name] = draw_valid(schema, cls, prop, rng)
    return body


def generate_request(schema: DeviceSchema, mapping: ApiMapping, cfg: GeneratorConfig,
                     rng: Optional[np.random.Generator] = None, request_id: int = 0,
                     sent_at_ms: int = 0) -> RequestRecord:
    """
    One random request on a serial-bound mapping: a route picked uniformly
    from the routes in scope and a body covering every property of its class.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    entries = routes_in_scope(mapping, cfg)
    entry = entries[int(rng.integers(0, len(entries)))]
    cls = schema.get_class(entry.class_name)
    serial = entry.dt_route[len(mapping.dt_prefix):].strip("/").split("/")[0]
    return RequestRecord(
        id=request_id,
        serial=serial,
        method=cfg.method,
        route=entry.dt_route,
        body=generate_body(schema, cls, cfg.invalid_rate, rng),
        sent_at_ms=sent_at_ms,
    )


class RequestGenerator:
    """Seeded request stream; two generators with the same config produce the same corpus."""

    def __init__(self, schema: DeviceSchema, mapping: ApiMapping, cfg: Optional[GeneratorConfig] = None):
        self.schema = schema
        self.mapping = mapping
        self.cfg = cfg or GeneratorConfig()
        self.rng = np.random.default_rng(self.cfg.seed)
        self._next_id = 1

    def next(self, sent_at_ms: int) -> RequestRecord:
        request = generate_request(self.schema, self.mapping, self.cfg, self.rng, self._next_id, sent_at_ms)
        self._next_id += 1
        return request

    def corpus(self, count: int, gap_ms: float, start_ms: int = 0) -> List[RequestRecord]:
        return [self.next(start_ms + int(round(i * gap_ms))) for i in range(count)]
