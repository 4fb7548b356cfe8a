"""Per-operation execution delays and their synchronization from device execution logs."""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import orjson
from pydantic import BaseModel, Field, model_validator

from twins.exceptions import ErrorCode, TwinException

logger = logging.getLogger(__name__)

# Operation classes
READ = "read"
SETTINGS_UPDATE = "settings-update"
PLAN_UPDATE = "plan-update"
REJECT = "reject"
DISPENSE = "dispense"


class OperationDelay(BaseModel):
    lower_ms: float
    upper_ms: float
    mean_ms: float

    @model_validator(mode="after")
    def _ordered(self):
        if min(self.lower_ms, self.upper_ms, self.mean_ms) < 0:
            raise ValueError("delays must be non-negative")
        if not self.lower_ms <= self.mean_ms <= self.upper_ms:
            raise ValueError(f"expected lower <= mean <= upper, got {self.lower_ms}/{self.mean_ms}/{self.upper_ms}")
        return self


class DelayProfile(BaseModel):
    operations: Dict[str, OperationDelay] = Field(default_factory=dict)

    def get(self, operation: str) -> OperationDelay:
        try:
            return self.operations[operation]
        except KeyError:
            raise TwinException(ErrorCode.INVALID_PARAMETERS, f"No delay configured for operation '{operation}'")

    def sample(self, operation: str, rng: np.random.Generator) -> float:
        """Draw a delay uniformly within the operation's bounds."""
        bounds = self.get(operation)
        if bounds.upper_ms == bounds.lower_ms:
            return float(bounds.lower_ms)
        return float(rng.uniform(bounds.lower_ms, bounds.upper_ms))

    def merged(self, other: "DelayProfile") -> "DelayProfile":
        return DelayProfile(operations={**self.operations, **other.operations})


def default_delay_profile() -> DelayProfile:
    """Shipped profile, matching the observed dispenser response-time ranges."""
    return DelayProfile(operations={
        READ: OperationDelay(lower_ms=1_800, upper_ms=2_600, mean_ms=2_200),
        SETTINGS_UPDATE: OperationDelay(lower_ms=2_400, upper_ms=3_000, mean_ms=2_750),
        PLAN_UPDATE: OperationDelay(lower_ms=2_400, upper_ms=3_000, mean_ms=2_750),
        REJECT: OperationDelay(lower_ms=100, upper_ms=400, mean_ms=250),
        DISPENSE: OperationDelay(lower_ms=60_000, upper_ms=80_000, mean_ms=70_000),
    })


def _records(lines: Iterable[Union[str, bytes]]) -> List[dict]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line:
            continue
        try:
            record = orjson.loads(line)
            operation = record["operation"]
            start_ms, end_ms = float(record["start_ms"]), float(record["end_ms"])
        except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise TwinException(ErrorCode.MALFORMED_RECORD, f"line {lineno}: {e}")
        if not isinstance(operation, str) or not operation or end_ms < start_ms:
            raise TwinException(ErrorCode.MALFORMED_RECORD, f"line {lineno}: invalid operation or interval")
        records.append({"operation": operation, "duration": end_ms - start_ms})
    return records


def synchronize_from_logs(logs: Union[str, Path, Iterable[Union[str, bytes]]],
                          base: Optional[DelayProfile] = None) -> DelayProfile:
    """
    Derive a delay profile from a physical device's execution log.

    The log holds one JSON record per line, ``{operation, start_ms, end_ms}``.
    Per operation: lower is the minimum duration, upper the maximum and mean
    the arithmetic mean. Operations the log does not cover keep their bounds
    from ``base`` (the shipped profile by default).
    """
    if isinstance(logs, (str, Path)):
        with Path(logs).open("r", encoding="utf-8") as f:
            records = _records(f)
    else:
        records = _records(logs)
    if not records:
        raise TwinException(ErrorCode.EMPTY_LOG)

    durations: Dict[str, List[float]] = defaultdict(list)
    for record in records:
        durations[record["operation"]].append(record["duration"])

    operations = {}
    for operation, values in durations.items():
        arr = np.asarray(values, dtype=float)
        lower, upper = float(arr.min()), float(arr.max())
        # float rounding can put the mean just outside [lower, upper]
        mean = float(np.clip(arr.mean(), lower, upper))
        operations[operation] = OperationDelay(lower_ms=lower, upper_ms=upper, mean_ms=mean)
        logger.info(f"Synchronized {operation}: {len(values)} record(s) -> [{lower}, {upper}] mean {mean:.1f}")
    synced = DelayProfile(operations=operations)
    return (base or default_delay_profile()).merged(synced)
