import pytest

from twins.exceptions import ErrorCode, TwinException
from twins.model import ClassDef, ConstraintDef, DeviceSchema, PropertyDef, SemanticType, validate_value
from twins.model.expressions import between, cmp


@pytest.mark.parametrize("class_name, prop, lower, upper", [
    ("MedicationPlan", "period_days", 1, 28),
    ("MedicationLine", "doses", 0, 9),
    ("Setting", "early_access_to_medication", 1, 300),
])
def test_constraint_boundaries(schema, class_name, prop, lower, upper):
    assert validate_value(schema, class_name, prop, lower).ok
    assert validate_value(schema, class_name, prop, upper).ok
    assert not validate_value(schema, class_name, prop, lower - 1).ok
    assert not validate_value(schema, class_name, prop, upper + 1).ok


def test_every_bounded_integer_has_complete_boundaries(schema):
    checked = 0
    for cls in schema.classes:
        for prop in cls.properties:
            if prop.type != SemanticType.INTEGER:
                continue
            lower, upper = schema.bounds_for(cls.name, prop.name)
            if lower is not None:
                assert validate_value(schema, cls.name, prop.name, int(lower)).ok
                assert not validate_value(schema, cls.name, prop.name, int(lower) - 1).ok
                checked += 1
            if upper is not None:
                assert validate_value(schema, cls.name, prop.name, int(upper)).ok
                assert not validate_value(schema, cls.name, prop.name, int(upper) + 1).ok
                checked += 1
    assert checked >= 6


def test_violation_names_constraint(schema):
    result = validate_value(schema, "MedicationPlan", "period_days", 29)
    assert result.ids() == {"C1"}
    assert result.violations[0].property == "period_days"


def test_alias_resolves_to_medication_line(schema):
    assert schema.get_class("MedicineLine").name == "MedicationLine"
    assert validate_value(schema, "MedicineLine", "doses", 9).ok


@pytest.mark.parametrize("class_name, prop, value", [
    ("Display", "brightness", "3"),
    ("Display", "sleep_mode", "yes"),
    ("Setting", "language", "Klingon"),
    ("IntakeTime", "time", "25:61"),
    ("MedicationPlan", "first_dose_date", "2024-13-40"),
    ("Alarm", "melody", 7),
    ("Display", "brightness", True),
])
def test_type_mismatch_is_a_violation(schema, class_name, prop, value):
    result = validate_value(schema, class_name, prop, value)
    assert "TYPE" in result.ids()


def test_unknown_class_and_property(schema):
    with pytest.raises(TwinException) as e:
        validate_value(schema, "Toaster", "x", 1)
    assert e.value.error_code == ErrorCode.UNKNOWN_CLASS
    with pytest.raises(TwinException) as e:
        validate_value(schema, "Display", "contrast", 1)
    assert e.value.error_code == ErrorCode.UNKNOWN_PROPERTY


def test_other_properties_use_current_values(schema):
    extra = ConstraintDef(id="U1", context="Alarm", predicate=cmp("repetitions", "<=", 5),
                          message="at most five repetitions")
    custom = schema.with_constraint(extra)
    assert custom.get_class("Alarm").name == "Alarm"
    assert not validate_value(custom, "Alarm", "repetitions", 6).ok
    assert validate_value(custom, "Alarm", "repetitions", 5, current={"volume": 2}).ok


def test_duplicate_constraint_rejected(schema):
    with pytest.raises(TwinException) as e:
        schema.with_constraint(schema.constraints[0])
    assert e.value.error_code == ErrorCode.INVALID_PARAMETERS


def test_schema_needs_single_root():
    with pytest.raises(ValueError):
        DeviceSchema(
            classes=(ClassDef(name="A"), ClassDef(name="B")),
            root_class="A",
        )


def test_constraint_must_reference_declared_property():
    with pytest.raises(ValueError):
        DeviceSchema(
            classes=(ClassDef(name="A", properties=(PropertyDef(name="x", type=SemanticType.INTEGER),)),),
            root_class="A",
            constraints=(ConstraintDef(id="X", context="A", predicate=between("y", 0, 1), message="y"),),
        )


def test_schema_document_lists_every_class(schema):
    document = schema.to_document()
    assert {c["name"] for c in document["classes"]} >= {"Device", "MedicationPlan", "Alarm"}
    assert DeviceSchema.model_validate(document) == schema
