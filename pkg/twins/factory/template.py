import logging
from typing import Any, Dict

from twins.model.schema import ClassDef, DeviceSchema, SemanticType

logger = logging.getLogger(__name__)


def _object_template(schema: DeviceSchema, cls: ClassDef) -> Dict[str, Any]:
    data: Dict[str, Any] = {p.name: p.default for p in cls.properties}
    for assoc in cls.associations:
        if not assoc.containment:
            continue
        exemplar = _object_template(schema, schema.get_class(assoc.target))
        data[assoc.name] = [exemplar] if assoc.many else exemplar
    return data


def generate_template(schema: DeviceSchema) -> Dict[str, Any]:
    """
    Generate the JSON input template, starting from the root class.

    Single-valued associations become nested objects, multi-valued ones
    arrays holding one exemplar element. Leaves carry the declared defaults.
    """
    root_key = schema.root_class.lower()
    return {root_key: _object_template(schema, schema.root)}


def generate_template_doc(schema: DeviceSchema) -> Dict[str, Any]:
    """Sidecar documentation: type, allowed values and constraint ids per leaf path."""
    doc: Dict[str, Any] = {}
    for path, cls in schema.containment_paths():
        prefix = schema.root_class.lower()
        for assoc in path:
            prefix += f".{assoc.name}" + ("[]" if assoc.many else "")
        if path:
            doc[prefix] = {"class": cls.name, "multiplicity": path[-1].multiplicity()}
        for p in cls.properties:
            entry: Dict[str, Any] = {"type": p.type.value, "default": p.default}
            if p.type == SemanticType.ENUM:
                entry["literals"] = list(schema.get_enum(p.enum).literals)
            lower, upper = schema.bounds_for(cls.name, p.name)
            if lower is not None:
                entry["min"] = lower
            if upper is not None:
                entry["max"] = upper
            ids = [c.id for c in schema.constraints_for(cls.name) if c.involves(p.name)]
            if ids:
                entry["constraints"] = ids
            doc[f"{prefix}.{p.name}"] = entry
    return doc
