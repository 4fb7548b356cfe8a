"""Virtual clock with an acceleration factor relative to wall time."""
import logging
import time
from datetime import datetime, timedelta
from typing import Optional, Union

from twins.common.config import SETTINGS

logger = logging.getLogger(__name__)


def parse_epoch(value: Union[str, datetime, None]) -> datetime:
    if value is None:
        value = SETTINGS.VIRTUAL_EPOCH
    return value if isinstance(value, datetime) else datetime.fromisoformat(value)


class VirtualClock:
    """
    Monotonic virtual time in integer milliseconds since ``epoch``.

    Time only moves when advanced. ``acceleration`` maps wall time onto
    virtual time for live operation (60 means one wall second is one
    virtual minute).
    """

    def __init__(self, epoch: Union[str, datetime, None] = None, acceleration: Optional[float] = None,
                 start_ms: int = 0):
        if start_ms < 0:
            raise ValueError("start_ms must be non-negative")
        self.epoch = parse_epoch(epoch)
        self.acceleration = float(acceleration if acceleration is not None else SETTINGS.ACCELERATION)
        if self.acceleration <= 0:
            raise ValueError("acceleration must be positive")
        self._now_ms = int(start_ms)
        self._wall_anchor: Optional[float] = None
        self._virtual_anchor = 0

    @property
    def now_ms(self) -> int:
        return self._now_ms

    def now(self) -> datetime:
        return self.epoch + timedelta(milliseconds=self._now_ms)

    def advance(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("delta_ms must be non-negative")
        self._now_ms += int(delta_ms)
        return self._now_ms

    def advance_to(self, target_ms: int) -> int:
        """Move forward to ``target_ms``; earlier targets leave the clock unchanged."""
        if target_ms > self._now_ms:
            self._now_ms = int(target_ms)
        return self._now_ms

    def to_ms(self, moment: datetime) -> int:
        return int((moment - self.epoch) / timedelta(milliseconds=1))

    def start_wall(self) -> None:
        """Anchor virtual time to the current wall time for live operation."""
        self._wall_anchor = time.monotonic()
        self._virtual_anchor = self._now_ms

    def wall_target_ms(self) -> int:
        """Virtual time corresponding to the current wall time (live operation)."""
        if self._wall_anchor is None:
            self.start_wall()
        elapsed = time.monotonic() - self._wall_anchor
        return self._virtual_anchor + int(elapsed * 1000 * self.acceleration)

    def wall_seconds(self, virtual_ms: float) -> float:
        """Wall seconds a virtual span lasts under the acceleration factor."""
        return virtual_ms / 1000.0 / self.acceleration

    def __repr__(self):
        return f"VirtualClock(now={self.now().isoformat()}, x{self.acceleration:g})"
