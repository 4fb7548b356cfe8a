"""Reference emulator standing in for the physical dispenser on the vendor routes."""
import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from twins.behavior.clock import VirtualClock
from twins.behavior.delay import (
    DISPENSE,
    PLAN_UPDATE,
    READ,
    REJECT,
    SETTINGS_UPDATE,
    DelayProfile,
    OperationDelay,
)
from twins.behavior.runtime import TwinRuntime
from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.factory.instance import DeviceInstance
from twins.protocol.records import RequestRecord, ResponseRecord
from twins.services.mapping_service import ApiMapping, resolve, route_table
from twins.services.twin_service import process

logger = logging.getLogger(__name__)


class LatencyBounds(BaseModel):
    lower_ms: float = Field(..., ge=0)
    upper_ms: float = Field(..., ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.upper_ms < self.lower_ms:
            raise ValueError(f"latency upper bound {self.upper_ms} below lower bound {self.lower_ms}")
        return self

    def as_delay(self) -> OperationDelay:
        return OperationDelay(lower_ms=self.lower_ms, upper_ms=self.upper_ms,
                              mean_ms=(self.lower_ms + self.upper_ms) / 2)


def _band(lower: float, upper: float) -> LatencyBounds:
    return LatencyBounds(lower_ms=lower, upper_ms=upper)


class EmulatorConfig(BaseModel):
    read: LatencyBounds = Field(default_factory=lambda: _band(2_400, 3_000))
    settings_update: LatencyBounds = Field(default_factory=lambda: _band(2_400, 3_000))
    plan_update: LatencyBounds = Field(default_factory=lambda: _band(2_400, 3_000))
    reject: LatencyBounds = Field(default_factory=lambda: _band(100, 400))
    quirk_rate: float = Field(default_factory=lambda: SETTINGS.QUIRK_RATE, ge=0, le=1,
                              description="Probability of partially accepting a mixed valid/invalid body")
    # unset: follows quirk_rate
    decline_rate: Optional[float] = Field(None, ge=0, le=1,
                                          description="Probability of rejecting a fully valid update with 503")
    dispense_busy_ms: int = Field(default_factory=lambda: SETTINGS.DISPENSE_BUSY_MS, ge=0)
    seed: int = Field(default_factory=lambda: SETTINGS.SEED)

    @property
    def effective_decline_rate(self) -> float:
        return self.quirk_rate if self.decline_rate is None else self.decline_rate

    def delay_profile(self) -> DelayProfile:
        busy = float(self.dispense_busy_ms)
        return DelayProfile(operations={
            READ: self.read.as_delay(),
            SETTINGS_UPDATE: self.settings_update.as_delay(),
            PLAN_UPDATE: self.plan_update.as_delay(),
            REJECT: self.reject.as_delay(),
            DISPENSE: OperationDelay(lower_ms=busy, upper_ms=busy, mean_ms=busy),
        })


class ReferenceEmulator:
    """
    One emulated device. It owns an independent copy of the instance and
    runs the same state machine as a twin, so busy windows and validation
    match. Latency differs, and so do two anomalies seen on the real device:
    a mixed body may be partially accepted, and a valid update may be
    declined with 503 while the device is still processing.
    """

    def __init__(self, cfg: EmulatorConfig, instance: DeviceInstance, clock: Optional[VirtualClock] = None,
                 mapping: Optional[ApiMapping] = None):
        self.cfg = cfg
        self.runtime = TwinRuntime(
            instance.clone(),
            delay_profile=cfg.delay_profile(),
            clock=clock,
            seed=cfg.seed,
        )
        # separate stream for quirk draws
        self._quirk_rng = np.random.default_rng([cfg.seed, 1])
        self.mapping = mapping or route_table(instance.schema)

    @property
    def serial(self) -> str:
        return self.runtime.serial

    def emulate(self, request: RequestRecord) -> ResponseRecord:
        resolved = resolve(self.mapping, request.route)
        if resolved.side != "device" or resolved.serial != self.serial:
            raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"{request.route} is not a vendor route of {self.serial}")
        with self.runtime.lock:
            # one draw per request drives both anomalies; the body decides which one shows
            draw = self._quirk_rng.random() if self.cfg.quirk_rate or self.cfg.effective_decline_rate else 1.0
            return process(self.runtime, request, resolved,
                           partial_accept=draw < self.cfg.quirk_rate,
                           decline_valid=draw < self.cfg.effective_decline_rate)


def emulate(request: RequestRecord, cfg: EmulatorConfig, emulator: ReferenceEmulator) -> ResponseRecord:
    """Functional form: ``emulator`` must have been built with ``cfg``."""
    if emulator.cfg != cfg:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Emulator was built with a different configuration")
    return emulator.emulate(request)
