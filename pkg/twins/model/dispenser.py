"""The built-in smart medicine dispenser domain model."""
from twins.model.expressions import between, cmp
from twins.model.schema import (
    AssociationDef,
    ClassDef,
    ConstraintDef,
    DeviceSchema,
    EnumDef,
    PropertyDef,
    SemanticType as T,
)

DEVICE_STATUS = EnumDef(name="DeviceStatus", literals=("Good", "Test", "Defect", "Scrapped"))
LANGUAGE = EnumDef(name="Language", literals=("English", "Norwegian"))
CONNECTION_TYPE = EnumDef(name="ConnectionType", literals=("Cellular", "Wifi"))

# Selected constraints on device properties
C1 = ConstraintDef(
    id="C1",
    context="MedicationPlan",
    predicate=between("period_days", 1, 28),
    message="period_days must be between 1 and 28",
)
C2 = ConstraintDef(
    id="C2",
    context="MedicationLine",
    predicate=between("doses", 0, 9),
    message="doses must be between 0 and 9",
)
C3 = ConstraintDef(
    id="C3",
    context="Setting",
    predicate=between("early_access_to_medication", 1, 300),
    message="early_access_to_medication must be between 1 and 300 minutes",
)

# Structural checks
S1 = ConstraintDef(
    id="S1",
    context="Display",
    predicate=between("brightness", 1, 5),
    message="brightness must be between 1 and 5",
)
S2 = ConstraintDef(
    id="S2",
    context="Alarm",
    predicate=cmp("repetitions", ">=", 0),
    message="repetitions must not be negative",
)
S3 = ConstraintDef(
    id="S3",
    context="Alarm",
    predicate=between("volume", 0, 10),
    message="volume must be between 0 and 10",
)


def _p(name, type_, default=None, enum=None) -> PropertyDef:
    return PropertyDef(name=name, type=type_, default=default, enum=enum)


def _a(name, target, lower, upper) -> AssociationDef:
    return AssociationDef(name=name, target=target, lower=lower, upper=upper, containment=True)


def builtin_dispenser_schema() -> DeviceSchema:
    """
    Build the medicine dispenser schema.

    Device is the root; it owns one Cartridge, one Setting and any number of
    MedicationPlans. A plan has one or more IntakeTimes, each with any number
    of MedicationLines (doses taken from the current/next medicine roll).
    Setting owns DateAndTime, Display and Alarm.
    """
    classes = (
        ClassDef(
            name="Device",
            properties=(
                _p("type", T.STRING, "Karie"),
                _p("status", T.ENUM, "Good", enum="DeviceStatus"),
                _p("number", T.STRING, ""),
                _p("location", T.STRING, "Oslo"),
                _p("note", T.STRING, ""),
            ),
            associations=(
                _a("cartridge", "Cartridge", 1, 1),
                _a("settings", "Setting", 1, 1),
                _a("medication_plans", "MedicationPlan", 0, None),
            ),
        ),
        ClassDef(name="Cartridge", properties=(_p("is_empty", T.BOOLEAN, False),)),
        ClassDef(
            name="MedicationPlan",
            key="plan_id",
            properties=(
                _p("plan_id", T.STRING, "plan-1"),
                _p("first_dose_date", T.DATE, "2024-01-01"),
                _p("period_days", T.INTEGER, 14),
            ),
            associations=(_a("intake_times", "IntakeTime", 1, None),),
        ),
        ClassDef(
            name="IntakeTime",
            properties=(_p("time", T.TIME, "09:00"),),
            associations=(_a("medicine_lines", "MedicationLine", 0, None),),
        ),
        ClassDef(
            name="MedicationLine",
            aliases=("MedicineLine",),
            properties=(
                _p("doses", T.INTEGER, 1),
                _p("current_roll", T.INTEGER, 28),
                _p("next_roll", T.INTEGER, 0),
            ),
        ),
        ClassDef(
            name="Setting",
            properties=(
                _p("early_access_to_medication", T.INTEGER, 30),
                _p("language", T.ENUM, "English", enum="Language"),
                _p("connection", T.ENUM, "Wifi", enum="ConnectionType"),
            ),
            associations=(
                _a("date_and_time", "DateAndTime", 1, 1),
                _a("display", "Display", 1, 1),
                _a("alarm", "Alarm", 1, 1),
            ),
        ),
        ClassDef(
            name="DateAndTime",
            properties=(
                _p("time_zone", T.STRING, "Europe/Oslo"),
                _p("automatic", T.BOOLEAN, True),
            ),
        ),
        ClassDef(
            name="Display",
            properties=(
                _p("brightness", T.INTEGER, 3),
                _p("sleep_mode", T.BOOLEAN, False),
                _p("auto_brightness", T.BOOLEAN, False),
            ),
        ),
        ClassDef(
            name="Alarm",
            properties=(
                _p("silent_mode", T.BOOLEAN, False),
                _p("melody", T.STRING, "Melody1"),
                _p("repetitions", T.INTEGER, 3),
                _p("volume", T.INTEGER, 5),
                _p("duration_s", T.INTEGER, 30),
            ),
        ),
    )
    return DeviceSchema(
        classes=classes,
        root_class="Device",
        enumerations=(DEVICE_STATUS, LANGUAGE, CONNECTION_TYPE),
        constraints=(C1, C2, C3, S1, S2, S3),
    )
