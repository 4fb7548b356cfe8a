"""Serial-number directory of the twins and emulated devices served by one process."""
import itertools
import logging
from typing import Dict, Iterable, List, Optional

from twins.behavior.runtime import TwinRuntime
from twins.exceptions import ErrorCode, TwinException
from twins.model.schema import DeviceSchema
from twins.protocol.records import HttpMethod, RequestRecord, ResponseRecord
from twins.services.emulator_service import ReferenceEmulator
from twins.services.mapping_service import ApiMapping, resolve, route_table
from twins.services.twin_service import process

logger = logging.getLogger(__name__)


class TwinRegistry:

    def __init__(self, schema: DeviceSchema, twins: Iterable[TwinRuntime] = (),
                 emulators: Iterable[ReferenceEmulator] = (), dt_prefix: Optional[str] = None,
                 vendor_prefix: Optional[str] = None):
        self.schema = schema
        self.mapping: ApiMapping = route_table(schema, dt_prefix, vendor_prefix)
        self.twins: Dict[str, TwinRuntime] = {}
        self.emulators: Dict[str, ReferenceEmulator] = {}
        self._ids = itertools.count(1)
        for twin in twins:
            self.add_twin(twin)
        for emulator in emulators:
            self.add_emulator(emulator)

    def add_twin(self, twin: TwinRuntime) -> None:
        if twin.serial in self.twins:
            raise TwinException(ErrorCode.DUPLICATE_SERIAL, f"Twin '{twin.serial}' already registered")
        self.twins[twin.serial] = twin

    def add_emulator(self, emulator: ReferenceEmulator) -> None:
        if emulator.serial in self.emulators:
            raise TwinException(ErrorCode.DUPLICATE_SERIAL, f"Emulated device '{emulator.serial}' already registered")
        emulator.mapping = self.mapping
        self.emulators[emulator.serial] = emulator

    def runtimes(self) -> List[TwinRuntime]:
        return list(self.twins.values()) + [e.runtime for e in self.emulators.values()]

    def next_request_id(self) -> int:
        return next(self._ids)

    def dispatch(self, method: HttpMethod, path: str, body=None, request_id: Optional[int] = None,
                 sent_at_ms: Optional[int] = None) -> ResponseRecord:
        """Route one request to the twin or emulated device owning the serial in its path."""
        resolved = resolve(self.mapping, path)
        if resolved.side == "twin":
            runtime = self.twins.get(resolved.serial)
            emulator = None
        else:
            emulator = self.emulators.get(resolved.serial)
            runtime = emulator.runtime if emulator else None
        if runtime is None:
            raise TwinException(ErrorCode.ROUTE_NOT_FOUND, f"No {resolved.side} with serial '{resolved.serial}'")

        request = RequestRecord(
            id=request_id if request_id is not None else self.next_request_id(),
            serial=resolved.serial,
            method=method,
            route=path,
            body=body,
            sent_at_ms=sent_at_ms if sent_at_ms is not None else runtime.clock.wall_target_ms(),
        )
        if emulator is not None:
            return emulator.emulate(request)
        return process(runtime, request, resolved)

    def start_wall(self) -> None:
        for runtime in self.runtimes():
            runtime.clock.start_wall()

    def tick(self) -> None:
        """Advance every runtime to the virtual time matching the current wall time."""
        for runtime in self.runtimes():
            if runtime.is_shutdown:
                continue
            try:
                runtime.run_until(max(runtime.clock.wall_target_ms(), runtime.clock.now_ms))
            except TwinException as e:
                logger.error(f"Tick failed for {runtime.serial}: {e}", exc_info=True)

    def shutdown(self) -> None:
        for runtime in self.runtimes():
            runtime.shutdown()
