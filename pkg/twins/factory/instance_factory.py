import logging
import time
from typing import Any, Dict, List, Union

import orjson

from twins.exceptions import ConstraintViolationError, ErrorCode, TwinException
from twins.factory.instance import DeviceInstance, ModelObject
from twins.model.schema import ClassDef, DeviceSchema
from twins.model.validation import Violation, key_violations, validate_slots

logger = logging.getLogger(__name__)


def _parse(filled: Union[str, bytes, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(filled, dict):
        return filled
    try:
        data = orjson.loads(filled)
    except orjson.JSONDecodeError as e:
        raise TwinException(ErrorCode.PARSE_ERROR, f"Filled template is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise TwinException(ErrorCode.PARSE_ERROR, "Filled template must be a JSON object")
    return data


def materialize(schema: DeviceSchema, cls: ClassDef, data: Any, path: str,
                violations: List[Violation]) -> ModelObject:
    """
    Build one object (and its contained subtree) from JSON, depth-first.

    Missing properties take their declared default. Constraint violations
    are collected into ``violations``; structural errors raise immediately.
    """
    if not isinstance(data, dict):
        raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}: expected an object for {cls.name}")
    known = {p.name for p in cls.properties} | {a.name for a in cls.associations}
    unknown = sorted(set(data) - known)
    if unknown:
        raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}: {cls.name} has no field(s) {unknown}")

    slots = {p.name: data.get(p.name, p.default) for p in cls.properties}
    violations.extend(validate_slots(schema, cls.name, slots, path).violations)
    obj = ModelObject(cls.name, slots)

    for assoc in cls.associations:
        target = schema.get_class(assoc.target)
        raw = data.get(assoc.name)
        if assoc.many:
            if raw is None:
                raw = []
            if not isinstance(raw, list):
                raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}.{assoc.name}: expected an array")
            if not assoc.admits(len(raw)):
                raise TwinException(
                    ErrorCode.MULTIPLICITY_ERROR,
                    f"{path}.{assoc.name}: {len(raw)} element(s) outside {assoc.multiplicity()}",
                )
            obj.children[assoc.name] = [
                materialize(schema, target, item, f"{path}.{assoc.name}[{i}]", violations)
                for i, item in enumerate(raw)
            ]
            violations.extend(key_violations(schema, target.name, obj.children[assoc.name], f"{path}.{assoc.name}"))
        else:
            if raw is None and assoc.lower == 0:
                obj.children[assoc.name] = []
                continue
            # Required single children fall back to their defaults when omitted
            obj.children[assoc.name] = [
                materialize(schema, target, raw if raw is not None else {}, f"{path}.{assoc.name}", violations)
            ]
    return obj


def instantiate(schema: DeviceSchema, filled: Union[str, bytes, Dict[str, Any]], serial: str) -> DeviceInstance:
    """
    Create a valid DeviceInstance from a filled input template.

    Creation is all-or-nothing: any constraint violation aborts with
    ConstraintViolationError listing every violation found.
    """
    if not serial:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Serial number must not be empty")
    data = _parse(filled)
    root_key = schema.root_class.lower()
    root_data = data[root_key] if isinstance(data.get(root_key), dict) else data

    violations: List[Violation] = []
    root = materialize(schema, schema.root, root_data, root_key, violations)
    if violations:
        logger.info(f"Instance {serial} rejected: {[v.constraint_id for v in violations]}")
        raise ConstraintViolationError(violations)
    if "number" in root.slots:
        root.slots["number"] = serial
    return DeviceInstance(schema, serial, root)


def serials_for_count(count: int, start: int = 1) -> List[str]:
    """Derive serials "1".."N" when only a count is given."""
    if count < 1:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Fleet size must be at least 1")
    return [str(i) for i in range(start, start + count)]


def create_fleet(schema: DeviceSchema, filled: Union[str, bytes, Dict[str, Any]],
                 serials: List[str]) -> List[DeviceInstance]:
    """Create one independent instance per serial from the same filled template."""
    if not serials:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "At least one serial is required")
    seen = set()
    for serial in serials:
        if serial in seen:
            raise TwinException(ErrorCode.DUPLICATE_SERIAL, f"Duplicate serial '{serial}'")
        seen.add(serial)

    started = time.perf_counter()
    prototype = instantiate(schema, filled, serials[0])
    fleet = [prototype] + [prototype.clone(serial) for serial in serials[1:]]
    elapsed = time.perf_counter() - started
    logger.info(f"Created fleet of {len(fleet)} twin(s) in {elapsed:.3f}s")
    return fleet

