import pytest

from twins.behavior.runtime import TwinRuntime
from twins.factory import generate_template, instantiate
from twins.model import builtin_dispenser_schema
from twins.services.mapping_service import route_table

# Virtual time of the first 09:00 intake: the clock starts at 08:30
FIRST_INTAKE_MS = 30 * 60 * 1000


@pytest.fixture(scope="session")
def schema():
    return builtin_dispenser_schema()


@pytest.fixture
def filled(schema):
    return generate_template(schema)


@pytest.fixture
def instance(schema, filled):
    return instantiate(schema, filled, "100")


@pytest.fixture
def mapping(schema):
    return route_table(schema)


@pytest.fixture
def runtime(instance):
    return TwinRuntime(instance, seed=1)
