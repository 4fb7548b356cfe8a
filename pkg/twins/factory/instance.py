"""Instance model: one populated copy of the domain model for one device."""
from __future__ import annotations

import copy
from typing import Any, Dict, Iterator, List, Optional, Tuple

from twins.common import json_encoder
from twins.model.schema import DeviceSchema


class ModelObject:
    """One object of the instance tree: its class, property slots and contained children."""

    __slots__ = ("class_name", "slots", "children")

    def __init__(self, class_name: str, slots: Optional[Dict[str, Any]] = None,
                 children: Optional[Dict[str, List["ModelObject"]]] = None):
        self.class_name = class_name
        self.slots: Dict[str, Any] = slots or {}
        self.children: Dict[str, List[ModelObject]] = children or {}

    def child(self, association: str) -> Optional["ModelObject"]:
        items = self.children.get(association) or []
        return items[0] if items else None

    def to_dict(self, schema: DeviceSchema) -> Dict[str, Any]:
        cls = schema.get_class(self.class_name)
        data = dict(self.slots)
        for assoc in cls.associations:
            items = self.children.get(assoc.name, [])
            if assoc.many:
                data[assoc.name] = [item.to_dict(schema) for item in items]
            else:
                data[assoc.name] = items[0].to_dict(schema) if items else None
        return data

    def __eq__(self, other):
        if not isinstance(other, ModelObject):
            return NotImplemented
        return (self.class_name, self.slots, self.children) == (other.class_name, other.slots, other.children)

    def __repr__(self):
        return f"ModelObject({self.class_name}, {self.slots})"


class DeviceInstance:
    """A device's structural state, identified by its serial number."""

    def __init__(self, schema: DeviceSchema, serial: str, root: ModelObject):
        self.schema = schema
        self.serial = serial
        self.root = root

    def walk(self) -> Iterator[Tuple[str, ModelObject]]:
        """Yield (path, object) depth-first; paths read like ``device.medication_plans[0]``."""
        def visit(obj: ModelObject, path: str):
            yield path, obj
            for assoc_name, items in obj.children.items():
                for i, item in enumerate(items):
                    yield from visit(item, f"{path}.{assoc_name}[{i}]")

        yield from visit(self.root, "device")

    def to_dict(self) -> Dict[str, Any]:
        return {"serial": self.serial, "device": self.root.to_dict(self.schema)}

    def dump(self) -> bytes:
        """Canonical JSON (sorted keys) used for byte-equality checks."""
        return json_encoder.dumps(self.to_dict())

    def clone(self, serial: Optional[str] = None) -> "DeviceInstance":
        root = copy.deepcopy(self.root)
        instance = DeviceInstance(self.schema, serial or self.serial, root)
        if serial is not None and "number" in root.slots:
            root.slots["number"] = serial
        return instance

    @property
    def settings(self) -> Optional[ModelObject]:
        return self.root.child("settings")

    @property
    def cartridge(self) -> Optional[ModelObject]:
        return self.root.child("cartridge")

    @property
    def medication_plans(self) -> List[ModelObject]:
        return self.root.children.setdefault("medication_plans", [])

    def __eq__(self, other):
        if not isinstance(other, DeviceInstance):
            return NotImplemented
        return self.serial == other.serial and self.root == other.root

    def __repr__(self):
        return f"DeviceInstance(serial={self.serial!r})"
