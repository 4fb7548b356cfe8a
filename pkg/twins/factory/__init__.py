from twins.factory.instance import DeviceInstance, ModelObject
from twins.factory.instance_factory import create_fleet, instantiate, serials_for_count
from twins.factory.template import generate_template, generate_template_doc

__all__ = [
    "DeviceInstance",
    "ModelObject",
    "create_fleet",
    "generate_template",
    "generate_template_doc",
    "instantiate",
    "serials_for_count",
]
