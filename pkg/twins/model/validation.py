import logging
import re
from datetime import date, datetime
from typing import Any, Dict, List, Optional, Sequence, TYPE_CHECKING

from pydantic import BaseModel, Field

from twins.exceptions import ErrorCode, TwinException
from twins.model.schema import ClassDef, DeviceSchema, PropertyDef, SemanticType

if TYPE_CHECKING:
    from twins.factory.instance import DeviceInstance

logger = logging.getLogger(__name__)

TYPE_CHECK_ID = "TYPE"
KEY_CHECK_ID = "KEY"
_TIME_RE = re.compile(r"^([01]\d|2[0-3]):[0-5]\d$")


class Violation(BaseModel):
    constraint_id: str
    class_name: str
    property: Optional[str] = None
    message: str
    path: Optional[str] = None


class ValidationResult(BaseModel):
    violations: List[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def ids(self) -> set[str]:
        return {v.constraint_id for v in self.violations}


def type_conforms(schema: DeviceSchema, prop: PropertyDef, value: Any) -> bool:
    """Check a value against the property's semantic type."""
    t = prop.type
    if t == SemanticType.INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if t == SemanticType.BOOLEAN:
        return isinstance(value, bool)
    if t == SemanticType.STRING:
        return isinstance(value, str)
    if t == SemanticType.ENUM:
        return isinstance(value, str) and value in schema.get_enum(prop.enum).literals
    if not isinstance(value, str):
        return False
    try:
        if t == SemanticType.DATE:
            date.fromisoformat(value)
        elif t == SemanticType.DATETIME:
            datetime.fromisoformat(value)
        elif t == SemanticType.TIME:
            return bool(_TIME_RE.match(value))
    except ValueError:
        return False
    return True


def _type_violation(schema: DeviceSchema, cls: ClassDef, prop: PropertyDef, value: Any,
                    path: Optional[str]) -> Optional[Violation]:
    if type_conforms(schema, prop, value):
        return None
    expected = f"one of {list(schema.get_enum(prop.enum).literals)}" if prop.type == SemanticType.ENUM \
        else prop.type.value
    return Violation(
        constraint_id=TYPE_CHECK_ID,
        class_name=cls.name,
        property=prop.name,
        message=f"{cls.name}.{prop.name} expects {expected}, got {value!r}",
        path=path,
    )


def validate_value(schema: DeviceSchema, class_name: str, property_name: str, value: Any,
                   current: Optional[Dict[str, Any]] = None) -> ValidationResult:
    """
    Validate one property value.

    Every constraint of the class that involves the property is evaluated
    with the property set to ``value`` and the other properties at their
    current values (``current``) or, failing that, their declared defaults.
    """
    cls = schema.get_class(class_name)
    prop = cls.get_property(property_name)
    violations: List[Violation] = []
    type_violation = _type_violation(schema, cls, prop, value, None)
    if type_violation:
        violations.append(type_violation)
    slots = {**cls.defaults(), **(current or {}), property_name: value}
    for constraint in schema.constraints_for(cls.name):
        if constraint.involves(property_name) and not constraint.holds(slots):
            violations.append(Violation(
                constraint_id=constraint.id,
                class_name=cls.name,
                property=property_name,
                message=constraint.message,
            ))
    return ValidationResult(violations=violations)


def validate_slots(schema: DeviceSchema, class_name: str, slots: Dict[str, Any],
                   path: Optional[str] = None) -> ValidationResult:
    """Validate a complete set of slots of one object: types first, then every class constraint."""
    cls = schema.get_class(class_name)
    violations: List[Violation] = []
    for name, value in slots.items():
        if not cls.has_property(name):
            raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{cls.name} has no property '{name}'")
        v = _type_violation(schema, cls, cls.get_property(name), value, path)
        if v:
            violations.append(v)
    merged = {**cls.defaults(), **slots}
    for constraint in schema.constraints_for(cls.name):
        if not constraint.holds(merged):
            violations.append(Violation(
                constraint_id=constraint.id,
                class_name=cls.name,
                property=None,
                message=constraint.message,
                path=path,
            ))
    return ValidationResult(violations=violations)


def key_violations(schema: DeviceSchema, class_name: str, items: Sequence[Any],
                   path: Optional[str] = None) -> List[Violation]:
    """Items of a keyed class must carry distinct keys within their collection."""
    cls = schema.get_class(class_name)
    if not cls.key:
        return []
    seen: Dict[str, int] = {}
    violations: List[Violation] = []
    for i, item in enumerate(items):
        key = str(item.slots.get(cls.key))
        if key in seen:
            violations.append(Violation(
                constraint_id=KEY_CHECK_ID,
                class_name=cls.name,
                property=cls.key,
                message=f"{cls.name} '{key}' occurs at [{seen[key]}] and [{i}]",
                path=path,
            ))
        else:
            seen[key] = i
    return violations


def validate_instance(schema: DeviceSchema, instance: "DeviceInstance") -> ValidationResult:
    """
    Aggregate the constraint violations of every object in the instance.

    Objects of a class the schema does not know, or held by an association
    the class does not declare, raise STRUCTURAL_MISMATCH.
    """
    violations: List[Violation] = []
    for path, obj in instance.walk():
        cls = _class_of(schema, obj.class_name, path)
        for assoc_name, children in obj.children.items():
            assoc = cls.get_association(assoc_name)
            if assoc is None:
                raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{cls.name} has no association '{assoc_name}'")
            for i, child in enumerate(children):
                child_cls = _class_of(schema, child.class_name, f"{path}.{assoc_name}[{i}]")
                if child_cls.name != schema.get_class(assoc.target).name:
                    raise TwinException(
                        ErrorCode.STRUCTURAL_MISMATCH,
                        f"{path}.{assoc_name} holds {child.class_name}, expected {assoc.target}",
                    )
            violations.extend(key_violations(schema, assoc.target, children, f"{path}.{assoc_name}"))
        violations.extend(validate_slots(schema, cls.name, obj.slots, path).violations)
    return ValidationResult(violations=violations)


def _class_of(schema: DeviceSchema, class_name: str, path: str) -> ClassDef:
    try:
        return schema.get_class(class_name)
    except TwinException as e:
        if e.error_code != ErrorCode.UNKNOWN_CLASS:
            raise
        raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}: class '{class_name}' is not in the schema")
