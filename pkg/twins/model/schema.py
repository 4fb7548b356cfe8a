"""Device domain model: classes, properties, associations, enumerations and constraints."""
from __future__ import annotations

import logging
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from twins.exceptions import ErrorCode, TwinException
from twins.model.expressions import Expr, numeric_bounds

logger = logging.getLogger(__name__)


class SemanticType(str, Enum):
    INTEGER = "integer"
    BOOLEAN = "boolean"
    STRING = "string"
    DATE = "date"  # ISO-8601 calendar date, e.g. 2024-01-01
    TIME = "time"  # 24-hour HH:MM
    DATETIME = "datetime"  # ISO-8601 date and time on the virtual clock
    ENUM = "enum"


class PropertyDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    type: SemanticType
    enum: Optional[str] = Field(None, description="Enumeration name when type is enum")
    default: Any = None

    @model_validator(mode="after")
    def _enum_named(self):
        if self.type == SemanticType.ENUM and not self.enum:
            raise ValueError(f"enum property {self.name} must name its enumeration")
        return self


class AssociationDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    target: str
    lower: int = 0
    upper: Optional[int] = Field(None, description="None means unbounded (*)")
    containment: bool = True

    @model_validator(mode="after")
    def _ordered(self):
        if self.lower < 0:
            raise ValueError(f"association {self.name}: lower multiplicity must be >= 0")
        if self.upper is not None and self.upper < self.lower:
            raise ValueError(f"association {self.name}: upper multiplicity below lower")
        return self

    @property
    def many(self) -> bool:
        return self.upper is None or self.upper > 1

    def admits(self, count: int) -> bool:
        return count >= self.lower and (self.upper is None or count <= self.upper)

    def multiplicity(self) -> str:
        return f"{self.lower}..{'*' if self.upper is None else self.upper}"


class ClassDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    properties: Tuple[PropertyDef, ...] = ()
    associations: Tuple[AssociationDef, ...] = ()
    key: Optional[str] = Field(None, description="Property identifying items inside a collection")
    aliases: Tuple[str, ...] = ()

    def get_property(self, name: str) -> PropertyDef:
        for p in self.properties:
            if p.name == name:
                return p
        raise TwinException(ErrorCode.UNKNOWN_PROPERTY, f"{self.name} has no property '{name}'")

    def has_property(self, name: str) -> bool:
        return any(p.name == name for p in self.properties)

    def get_association(self, name: str) -> Optional[AssociationDef]:
        for a in self.associations:
            if a.name == name:
                return a
        return None

    def defaults(self) -> Dict[str, Any]:
        return {p.name: p.default for p in self.properties}


class EnumDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    literals: Tuple[str, ...]

    @model_validator(mode="after")
    def _literals(self):
        if not self.literals:
            raise ValueError(f"enumeration {self.name} has no literals")
        if len(set(self.literals)) != len(self.literals):
            raise ValueError(f"enumeration {self.name} has duplicate literals")
        return self


class ConstraintDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    context: str
    predicate: Expr
    message: str

    def involves(self, prop_name: str) -> bool:
        return prop_name in self.predicate.properties()

    def holds(self, slots: Dict[str, Any]) -> bool:
        return bool(self.predicate.evaluate(slots))


class DeviceSchema(BaseModel):
    """
    Immutable domain model. Construction checks that there is exactly one
    root class, that association targets resolve and that constraints
    reference declared classes and properties.
    """
    model_config = ConfigDict(frozen=True)

    classes: Tuple[ClassDef, ...]
    root_class: str = "Device"
    enumerations: Tuple[EnumDef, ...] = ()
    constraints: Tuple[ConstraintDef, ...] = ()

    @model_validator(mode="after")
    def _well_formed(self):
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if self.root_class not in names:
            raise ValueError(f"root class {self.root_class} is not declared")
        enum_names = {e.name for e in self.enumerations}
        contained = set()
        for cls in self.classes:
            for assoc in cls.associations:
                if assoc.target not in names:
                    raise ValueError(f"{cls.name}.{assoc.name} targets undeclared class {assoc.target}")
                if assoc.containment:
                    contained.add(assoc.target)
            for p in cls.properties:
                if p.type == SemanticType.ENUM and p.enum not in enum_names:
                    raise ValueError(f"{cls.name}.{p.name} uses undeclared enumeration {p.enum}")
        roots = [n for n in names if n not in contained]
        if roots != [self.root_class]:
            raise ValueError(f"exactly one root class expected, found {roots}")
        for c in self.constraints:
            cls = next((x for x in self.classes if c.context in (x.name, *x.aliases)), None)
            if cls is None:
                raise ValueError(f"constraint {c.id} references undeclared class {c.context}")
            for p in c.predicate.properties():
                if not cls.has_property(p):
                    raise ValueError(f"constraint {c.id} references undeclared property {cls.name}.{p}")
        return self

    def get_class(self, name: str) -> ClassDef:
        for cls in self.classes:
            if name == cls.name or name in cls.aliases:
                return cls
        raise TwinException(ErrorCode.UNKNOWN_CLASS, f"Unknown class '{name}'")

    def get_enum(self, name: str) -> EnumDef:
        for e in self.enumerations:
            if e.name == name:
                return e
        raise TwinException(ErrorCode.UNKNOWN_CLASS, f"Unknown enumeration '{name}'")

    @property
    def root(self) -> ClassDef:
        return self.get_class(self.root_class)

    def constraints_for(self, class_name: str) -> List[ConstraintDef]:
        cls = self.get_class(class_name)
        return [c for c in self.constraints if c.context in (cls.name, *cls.aliases)]

    def bounds_for(self, class_name: str, prop_name: str) -> Tuple[Optional[float], Optional[float]]:
        """Tightest closed interval the class's constraints impose on an integer property."""
        lower, upper = None, None
        for c in self.constraints_for(class_name):
            lo, hi = numeric_bounds(c.predicate, prop_name)
            if lo is not None:
                lower = lo if lower is None else max(lower, lo)
            if hi is not None:
                upper = hi if upper is None else min(upper, hi)
        return lower, upper

    def containment_paths(self) -> Iterator[Tuple[Tuple[AssociationDef, ...], ClassDef]]:
        """Depth-first walk of every containment path from the root, root first."""
        def walk(cls: ClassDef, path: Tuple[AssociationDef, ...]):
            yield path, cls
            for assoc in cls.associations:
                if assoc.containment:
                    yield from walk(self.get_class(assoc.target), path + (assoc,))

        yield from walk(self.root, ())

    def with_constraint(self, constraint: ConstraintDef) -> "DeviceSchema":
        """Return a new schema with one more user-registered constraint."""
        if any(c.id == constraint.id for c in self.constraints):
            raise TwinException(ErrorCode.INVALID_PARAMETERS, f"Constraint {constraint.id} already registered")
        data = self.model_dump()
        data["constraints"] = [c.model_dump() for c in self.constraints + (constraint,)]
        return DeviceSchema.model_validate(data)

    def to_document(self) -> Dict[str, Any]:
        """JSON document describing the schema (see docs in README)."""
        return self.model_dump(mode="json")
