from pathlib import Path
from typing import Optional, Union

import orjson
from pydantic import BaseModel, Field, field_validator
from pydantic.v1 import BaseSettings


class Settings(BaseSettings):
    class Config:
        env_file = ['.env', '../.env', '../../.env', '../../../.env']
        env_file_encoding = 'utf-8'
        env_prefix = 'DTW_'
        extra = 'ignore'

    APP_NAME: str = "dispenser-twins"
    OTEL_ENABLED: bool = False
    OTEL_TRACE_UPLOAD_ENABLED: bool = False
    OTEL_TRACE_UPLOAD_URL: str = "http://127.0.0.1:4318/v1/traces"

    HOST: str = "127.0.0.1"
    PORT: int = 8080
    WORKERS: int = 1
    FLEET_SIZE: int = 1
    LOG_LEVEL: str = "INFO"

    # Virtual clock
    ACCELERATION: float = 60.0
    VIRTUAL_EPOCH: str = "2024-01-01T08:30:00"
    PLAN_POLL_INTERVAL_MS: int = 60_000
    TICK_INTERVAL_S: float = 0.25

    # Routing
    DT_ROUTE_PREFIX: str = "/devices"
    VENDOR_ROUTE_PREFIX: str = "/karie"
    DEVICE_UPSTREAM: Optional[str] = None
    FORWARD_TIMEOUT_S: int = 10
    FORWARD_RETRIES: int = 3

    # Experiments
    SEED: int = 7
    INVALID_RATE: float = 0.2
    QUIRK_RATE: float = 0.08
    DISPENSE_BUSY_MS: int = 70_000
    TOLERANCE_MS: float = 1000.0
    HARNESS_WORKERS: int = 16


SETTINGS = Settings()


class ServerConfig(BaseModel):
    """Server config file: ``{bind, acceleration, vendor_route_prefix, device_upstream?}``."""
    bind: str = Field(default_factory=lambda: f"{SETTINGS.HOST}:{SETTINGS.PORT}")
    acceleration: float = Field(default_factory=lambda: SETTINGS.ACCELERATION, gt=0)
    vendor_route_prefix: str = Field(default_factory=lambda: SETTINGS.VENDOR_ROUTE_PREFIX)
    device_upstream: Optional[str] = Field(default_factory=lambda: SETTINGS.DEVICE_UPSTREAM)

    @field_validator("bind")
    @classmethod
    def _host_port(cls, value: str) -> str:
        host, sep, port = value.rpartition(":")
        if not sep or not host or not port.isdigit() or int(port) > 65535:
            raise ValueError(f"bind must look like host:port, got {value!r}")
        return value

    @property
    def host(self) -> str:
        return self.bind.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.bind.rpartition(":")[2])

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, **overrides) -> "ServerConfig":
        """Read the config file (if any); non-None keyword overrides win over file values."""
        data = orjson.loads(Path(path).read_bytes()) if path else {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(data)
