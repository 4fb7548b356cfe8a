"""
Request handling inside a twin.

A request is resolved against the route table, the twin is brought up to
the request's virtual send time, and the addressed part of the instance is
read or updated. Updates are all-or-nothing: one violation anywhere in the
body rejects the whole request with 503 and leaves the instance untouched.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from twins.behavior.delay import PLAN_UPDATE, READ, REJECT, SETTINGS_UPDATE
from twins.behavior.runtime import TwinRuntime
from twins.common.response import DeviceResponse
from twins.exceptions import ConstraintViolationError, ErrorCode, TwinException
from twins.factory.instance import ModelObject
from twins.factory.instance_factory import materialize
from twins.model.schema import AssociationDef, ClassDef, DeviceSchema
from twins.model.validation import Violation, key_violations, validate_slots, validate_value
from twins.protocol.records import HttpMethod, RequestRecord, ResponseRecord
from twins.services.mapping_service import ApiMapping, ResolvedRoute, resolve, route_table

logger = logging.getLogger(__name__)

OK = 200
UNAVAILABLE = 503
PLAN_ASSOCIATION = "medication_plans"


@dataclass
class Target:
    """Where a resolved route points inside an instance."""
    cls: ClassDef
    obj: Optional[ModelObject] = None
    parent: Optional[ModelObject] = None
    association: Optional[AssociationDef] = None

    @property
    def is_collection(self) -> bool:
        return self.obj is None and self.association is not None and self.association.many

    def items(self) -> List[ModelObject]:
        return self.parent.children.setdefault(self.association.name, [])


@dataclass
class FieldCheck:
    obj: ModelObject
    name: str
    value: Any
    ok: bool


@dataclass
class ChangeSet:
    """Pending modifications of one request body, applied only once everything validated."""
    slot_updates: List[Tuple[ModelObject, str, Any]] = field(default_factory=list)
    replacements: List[Tuple[ModelObject, str, List[ModelObject]]] = field(default_factory=list)
    violations: List[Violation] = field(default_factory=list)
    child_violations: List[Violation] = field(default_factory=list)
    field_checks: List[FieldCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.child_violations

    def apply(self) -> None:
        for obj, name, value in self.slot_updates:
            obj.slots[name] = value
        for obj, assoc_name, children in self.replacements:
            obj.children[assoc_name] = children

    def is_mixed(self) -> bool:
        """Some fields valid on their own, some not, and no invalid nested replacement."""
        valid = [c for c in self.field_checks if c.ok]
        return bool(valid) and len(valid) < len(self.field_checks) and not self.child_violations

    def apply_valid_fields(self, schema: DeviceSchema) -> bool:
        """Apply only the individually valid scalar fields; returns False when the result would still violate."""
        staged: Dict[int, Dict[str, Any]] = {}
        owners: Dict[int, ModelObject] = {}
        for check in self.field_checks:
            if check.ok:
                staged.setdefault(id(check.obj), dict(check.obj.slots))[check.name] = check.value
                owners[id(check.obj)] = check.obj
        for key, slots in staged.items():
            if not validate_slots(schema, owners[key].class_name, slots).ok:
                return False
        for key, slots in staged.items():
            owners[key].slots.update(slots)
        return True


def _select(cls: ClassDef, items: List[ModelObject], key: str) -> Optional[ModelObject]:
    if cls.key:
        return next((item for item in items if str(item.slots.get(cls.key)) == key), None)
    if key.isdigit() and int(key) < len(items):
        return items[int(key)]
    return None


def locate(rt: TwinRuntime, resolved: ResolvedRoute) -> Target:
    """Walk the containment path of the resolved route; missing objects raise TARGET_NOT_FOUND."""
    schema = rt.instance.schema
    obj = rt.instance.root
    cls = schema.root
    keys = list(resolved.keys)
    path = resolved.entry.class_path
    for i, assoc_name in enumerate(path):
        assoc = cls.get_association(assoc_name)
        target_cls = schema.get_class(assoc.target)
        items = obj.children.setdefault(assoc_name, [])
        last = i == len(path) - 1
        if assoc.many:
            key = resolved.item if last else keys.pop(0)
            if key is None:
                return Target(cls=target_cls, parent=obj, association=assoc)
            child = _select(target_cls, items, key)
            if child is None:
                raise TwinException(ErrorCode.TARGET_NOT_FOUND, f"No {target_cls.name} '{key}' on {rt.serial}")
        else:
            child = items[0] if items else None
            if child is None:
                raise TwinException(ErrorCode.TARGET_NOT_FOUND, f"{rt.serial} has no {assoc_name}")
        parent, obj, cls = obj, child, target_cls
        if last:
            return Target(cls=cls, obj=obj, parent=parent, association=assoc)
    return Target(cls=cls, obj=obj)


def collect_changes(schema: DeviceSchema, obj: ModelObject, body: Any, path: str, changes: ChangeSet) -> None:
    """Stage an update of ``obj`` (and nested children) from a JSON body."""
    cls = schema.get_class(obj.class_name)
    if not isinstance(body, dict):
        raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}: expected an object for {cls.name}")
    unknown = sorted(k for k in body if not cls.has_property(k) and cls.get_association(k) is None)
    if unknown:
        raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{path}: {cls.name} has no field(s) {unknown}")

    scalars = {k: v for k, v in body.items() if cls.has_property(k)}
    if scalars:
        merged = {**obj.slots, **scalars}
        changes.violations.extend(validate_slots(schema, cls.name, merged, path).violations)
        for name, value in scalars.items():
            ok = validate_value(schema, cls.name, name, value, current=obj.slots).ok
            changes.field_checks.append(FieldCheck(obj, name, value, ok))
            changes.slot_updates.append((obj, name, value))

    for assoc_name in (k for k in body if cls.get_association(k) is not None):
        assoc = cls.get_association(assoc_name)
        target = schema.get_class(assoc.target)
        raw = body[assoc_name]
        child_path = f"{path}.{assoc_name}"
        if assoc.many:
            if not isinstance(raw, list):
                raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, f"{child_path}: expected an array")
            if not assoc.admits(len(raw)):
                raise TwinException(ErrorCode.MULTIPLICITY_ERROR,
                                    f"{child_path}: {len(raw)} element(s) outside {assoc.multiplicity()}")
            children = [materialize(schema, target, item, f"{child_path}[{i}]", changes.child_violations)
                        for i, item in enumerate(raw)]
            changes.child_violations.extend(key_violations(schema, target.name, children, child_path))
            changes.replacements.append((obj, assoc_name, children))
        elif obj.child(assoc_name) is not None:
            collect_changes(schema, obj.child(assoc_name), raw, child_path, changes)
        else:
            child = materialize(schema, target, raw, child_path, changes.child_violations)
            changes.replacements.append((obj, assoc_name, [child]))


def _free_key(cls: ClassDef, items: List[ModelObject]) -> str:
    taken = {str(item.slots.get(cls.key)) for item in items}
    n = len(items) + 1
    while f"plan-{n}" in taken:
        n += 1
    return f"plan-{n}"


def _append(rt: TwinRuntime, target: Target, body: Any) -> Dict[str, Any]:
    schema = rt.instance.schema
    items = target.items()
    assoc = target.association
    if not assoc.admits(len(items) + 1):
        raise TwinException(ErrorCode.MULTIPLICITY_ERROR,
                            f"{assoc.name} already holds {len(items)} element(s), limit {assoc.multiplicity()}")
    if isinstance(body, dict) and target.cls.key and target.cls.key not in body:
        body = {**body, target.cls.key: _free_key(target.cls, items)}
    violations: List[Violation] = []
    item = materialize(schema, target.cls, body, f"{assoc.name}[{len(items)}]", violations)
    violations.extend(key_violations(schema, target.cls.name, [*items, item], assoc.name))
    if violations:
        raise ConstraintViolationError(violations)
    items.append(item)
    return item.to_dict(schema)


def _replace_all(rt: TwinRuntime, target: Target, body: Any) -> List[Dict[str, Any]]:
    schema = rt.instance.schema
    changes = ChangeSet()
    collect_changes(schema, target.parent, {target.association.name: body}, "device", changes)
    if not changes.ok:
        raise ConstraintViolationError(changes.violations + changes.child_violations)
    changes.apply()
    return [item.to_dict(schema) for item in target.items()]


def _update(rt: TwinRuntime, obj: ModelObject, body: Any, partial_accept: bool,
            decline_valid: bool = False) -> Dict[str, Any]:
    schema = rt.instance.schema
    changes = ChangeSet()
    collect_changes(schema, obj, body, obj.class_name, changes)
    if changes.ok and decline_valid:
        raise TwinException(ErrorCode.DEVICE_BUSY, f"{rt.serial} did not finish updating {obj.class_name} in time")
    if changes.ok:
        changes.apply()
    elif partial_accept and changes.is_mixed() and changes.apply_valid_fields(schema):
        ignored = sorted({c.name for c in changes.field_checks if not c.ok})
        logger.debug(f"{rt.serial}: partially accepted {obj.class_name}, ignored {ignored}")
    else:
        raise ConstraintViolationError(changes.violations + changes.child_violations)
    return obj.to_dict(schema)


def _status(rt: TwinRuntime) -> Dict[str, Any]:
    return {
        "state": rt.current_state,
        "status": rt.instance.root.slots.get("status"),
        "busy": rt.is_busy(),
    }


def operation_class(method: HttpMethod, resolved: ResolvedRoute) -> str:
    if method == HttpMethod.GET:
        return READ
    if resolved.entry.class_path[:1] == (PLAN_ASSOCIATION,):
        return PLAN_UPDATE
    return SETTINGS_UPDATE


def execute(rt: TwinRuntime, method: HttpMethod, resolved: ResolvedRoute, body: Any,
            partial_accept: bool = False, decline_valid: bool = False) -> Any:
    """
    Perform the request against the instance and return the response data.

    ``partial_accept`` applies the valid fields of a mixed object update;
    ``decline_valid`` rejects an object update that would have succeeded.
    Both are device anomalies and stay off for twins.
    """
    entry = resolved.entry
    if entry.kind == "status":
        if method == HttpMethod.GET:
            return _status(rt)
        if method in (HttpMethod.PUT, HttpMethod.POST):
            if not isinstance(body, dict) or set(body) - {"status"}:
                raise TwinException(ErrorCode.STRUCTURAL_MISMATCH, "Status updates accept only 'status'")
            _update(rt, rt.instance.root, body, partial_accept=False)
            return _status(rt)
        raise TwinException(ErrorCode.UNSUPPORTED_OPERATION, f"{method.value} not supported on status")

    target = locate(rt, resolved)
    schema = rt.instance.schema
    if method == HttpMethod.GET:
        if target.is_collection:
            return [item.to_dict(schema) for item in target.items()]
        return target.obj.to_dict(schema)
    if method == HttpMethod.DELETE:
        if entry.class_path != (PLAN_ASSOCIATION,) or target.is_collection:
            raise TwinException(ErrorCode.UNSUPPORTED_OPERATION, "Only medication plans can be deleted")
        target.items().remove(target.obj)
        return {"deleted": resolved.item}
    if target.is_collection:
        if method == HttpMethod.POST:
            return _append(rt, target, body)
        return _replace_all(rt, target, body)
    return _update(rt, target.obj, body, partial_accept, decline_valid)


def process(rt: TwinRuntime, request: RequestRecord, resolved: ResolvedRoute,
            partial_accept: bool = False, decline_valid: bool = False) -> ResponseRecord:
    """
    Serve one request on a runtime, holding its lock throughout.

    The twin first runs up to the request's virtual send time; a twin that is
    shut down or inside a dispense window rejects with 503. Response time is
    the operation's sampled delay on the virtual clock.
    """
    with rt.lock:
        rt.run_until(max(request.sent_at_ms, rt.clock.now_ms))
        if rt.is_shutdown or rt.is_busy():
            reason = "shut down" if rt.is_shutdown else "busy dispensing"
            error = TwinException(ErrorCode.DEVICE_BUSY, f"{rt.serial} is {reason}").to_dict()
            return _respond(rt, request, UNAVAILABLE, REJECT, error=error)

        op = operation_class(request.method, resolved)
        try:
            data = execute(rt, request.method, resolved, request.body, partial_accept, decline_valid)
        except TwinException as e:
            return _respond(rt, request, UNAVAILABLE, op, error=e.to_dict())
        return _respond(rt, request, OK, op, data=data)


def _respond(rt: TwinRuntime, request: RequestRecord, status: int, op: str,
             data: Any = None, error: Optional[Dict[str, Any]] = None) -> ResponseRecord:
    elapsed = round(rt.delay_profile.sample(op, rt.rng), 3)
    body = DeviceResponse(status=status, response_time_ms=elapsed, data=data, error=error)
    return ResponseRecord(
        request_id=request.id,
        status_code=status,
        response_time_ms=elapsed,
        body=body.model_dump(exclude_none=True),
    )


def handle(request: RequestRecord, twin: TwinRuntime, mapping: Optional[ApiMapping] = None) -> ResponseRecord:
    """Twin-side request handling; unmapped routes raise ROUTE_NOT_FOUND."""
    mapping = mapping or route_table(twin.instance.schema)
    resolved = resolve(mapping, request.route)
    if resolved.serial != twin.serial:
        raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"{request.route} does not address twin {twin.serial}")
    return process(twin, request, resolved)
