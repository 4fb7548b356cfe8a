from twins.model.dispenser import builtin_dispenser_schema
from twins.model.schema import (
    AssociationDef,
    ClassDef,
    ConstraintDef,
    DeviceSchema,
    EnumDef,
    PropertyDef,
    SemanticType,
)
from twins.model.validation import ValidationResult, Violation, validate_instance, validate_value

__all__ = [
    "AssociationDef",
    "ClassDef",
    "ConstraintDef",
    "DeviceSchema",
    "EnumDef",
    "PropertyDef",
    "SemanticType",
    "ValidationResult",
    "Violation",
    "builtin_dispenser_schema",
    "validate_instance",
    "validate_value",
]
