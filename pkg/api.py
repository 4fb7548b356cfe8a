import logging

import uvicorn
from fastapi import FastAPI

from twins.api.app import create_app as create_twin_app
from twins.behavior.runtime import TwinRuntime
from twins.common.config import SETTINGS, ServerConfig
from twins.common.log import Log
from twins.common.otel import Otel
from twins.factory import create_fleet, generate_template, serials_for_count
from twins.model import builtin_dispenser_schema
from twins.services.registry import TwinRegistry

logger = logging.getLogger(__name__)


def create_app() -> FastAPI:
    """Application factory for ``uvicorn api:create_app --factory``: twins 1..FLEET_SIZE from template defaults."""
    Log.init()
    Otel.init()
    logger.info("Server starting...")

    config = ServerConfig()
    schema = builtin_dispenser_schema()
    instances = create_fleet(schema, generate_template(schema), serials_for_count(SETTINGS.FLEET_SIZE))
    twins = [TwinRuntime(instance) for instance in instances]
    for twin in twins:
        twin.clock.acceleration = config.acceleration
    registry = TwinRegistry(schema, twins, vendor_prefix=config.vendor_route_prefix)

    app = create_twin_app(registry, config)
    logger.info("Application initialization complete")
    return app


if __name__ == '__main__':
    uvicorn.run("api:create_app", factory=True, host=SETTINGS.HOST, port=SETTINGS.PORT, workers=SETTINGS.WORKERS)
