"""A running twin: the dispenser state machine executing against one DeviceInstance."""
import copy
import logging
import math
import threading
from dataclasses import dataclass
from datetime import date, datetime, time as dtime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Set, Union

import numpy as np
from pydantic import BaseModel, Field

from twins.behavior.clock import VirtualClock
from twins.behavior.delay import DISPENSE, DelayProfile, default_delay_profile
from twins.behavior.dispenser_behavior import DispenserState, builtin_dispenser_behavior
from twins.behavior.machine import SHUTDOWN_TRIGGER, BehaviorSpec, Transition, TransitionOutcome, TwinEvent
from twins.common import json_encoder
from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException
from twins.factory.instance import DeviceInstance, ModelObject

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScheduledIntake:
    at_ms: int
    plan_id: str
    intake_index: int
    time: str


@dataclass(frozen=True)
class PendingDispense:
    intake: ScheduledIntake
    started_ms: int
    ends_ms: int


class DispenseResult(BaseModel):
    status: Literal["dispensed", "empty-cartridge", "aborted"]
    plan_id: str
    intake_time: str
    doses: Dict[str, int] = Field(default_factory=dict)
    started_ms: int
    finished_ms: int


class TwinRuntime:
    """
    Single-threaded actor around one DeviceInstance.

    All mutating entry points take ``lock``; callers on other threads may
    hold it across several calls to make a request atomic.
    """

    def __init__(self, instance: DeviceInstance, spec: Optional[BehaviorSpec] = None,
                 delay_profile: Optional[DelayProfile] = None, clock: Optional[VirtualClock] = None,
                 seed: Optional[int] = None, poll_interval_ms: Optional[int] = None):
        self.instance = instance
        self.spec = spec or builtin_dispenser_behavior()
        self.delay_profile = delay_profile or default_delay_profile()
        self.clock = clock or VirtualClock()
        self.rng = np.random.default_rng(SETTINGS.SEED if seed is None else seed)
        self.poll_interval_ms = poll_interval_ms or SETTINGS.PLAN_POLL_INTERVAL_MS
        self.lock = threading.RLock()

        self.current_state: str = self.spec.initial
        self.event_log: List[TwinEvent] = []
        self.pending: Optional[PendingDispense] = None
        self.active_plan_id: Optional[str] = None
        self.completed_plans: Set[str] = set()
        self.cursor_ms: int = -1
        self.dispensed: Dict[str, int] = {}
        self.last_result: Optional[DispenseResult] = None

    @property
    def serial(self) -> str:
        return self.instance.serial

    @property
    def is_shutdown(self) -> bool:
        return self.current_state == DispenserState.SHUTDOWN.value

    def is_busy(self, at_ms: Optional[int] = None) -> bool:
        at_ms = self.clock.now_ms if at_ms is None else at_ms
        return self.pending is not None and at_ms < self.pending.ends_ms

    def log_event(self, event: str, **detail) -> TwinEvent:
        record = TwinEvent(time_ms=self.clock.now_ms, state=self.current_state, event=event, detail=detail)
        self.event_log.append(record)
        return record

    # Medication plans

    def find_plan(self, plan_id: Optional[str]) -> Optional[ModelObject]:
        if plan_id is None:
            return None
        for plan in self.instance.medication_plans:
            if plan.slots.get("plan_id") == plan_id:
                return plan
        return None

    def available_plan(self) -> Optional[ModelObject]:
        for plan in self.instance.medication_plans:
            if plan.slots.get("plan_id") not in self.completed_plans:
                return plan
        return None

    def activate_plan(self) -> None:
        plan = self.available_plan()
        self.active_plan_id = plan.slots.get("plan_id") if plan else None
        self.log_event("plan-loaded", plan_id=self.active_plan_id)

    def complete_plan(self) -> None:
        if self.active_plan_id is not None and self.find_plan(self.active_plan_id) is not None:
            self.completed_plans.add(self.active_plan_id)
            self.log_event("plan-completed", plan_id=self.active_plan_id)
        else:
            self.log_event("plan-removed", plan_id=self.active_plan_id)
        self.active_plan_id = None

    def schedule(self, plan: ModelObject) -> List[ScheduledIntake]:
        """Every intake of the plan over its period, in time order."""
        first = date.fromisoformat(plan.slots["first_dose_date"])
        entries = []
        for day in range(int(plan.slots["period_days"])):
            for index, intake in enumerate(plan.children.get("intake_times", [])):
                at = datetime.combine(first + timedelta(days=day), dtime.fromisoformat(intake.slots["time"]))
                entries.append(ScheduledIntake(self.clock.to_ms(at), plan.slots["plan_id"], index,
                                               intake.slots["time"]))
        entries.sort(key=lambda e: (e.at_ms, e.intake_index))
        return entries

    def next_intake(self) -> Optional[ScheduledIntake]:
        plan = self.find_plan(self.active_plan_id)
        if plan is None:
            return None
        return next((e for e in self.schedule(plan) if e.at_ms > self.cursor_ms), None)

    def plan_finished(self) -> bool:
        return self.next_intake() is None

    def intake_due(self) -> bool:
        upcoming = self.next_intake()
        return upcoming is not None and upcoming.at_ms <= self.clock.now_ms

    def dispense_finished(self) -> bool:
        return self.pending is None or self.clock.now_ms >= self.pending.ends_ms

    # Dispensing

    def begin_dispense(self, intake: Optional[ScheduledIntake]) -> Optional[DispenseResult]:
        """Start dispensing; returns a result right away only when the cartridge is empty."""
        if intake is None or self.find_plan(intake.plan_id) is None:
            raise TwinException(ErrorCode.NO_ACTIVE_PLAN, f"Twin {self.serial} has no intake to dispense")
        self.cursor_ms = max(self.cursor_ms, intake.at_ms)
        cartridge = self.instance.cartridge
        now = self.clock.now_ms
        if cartridge is not None and cartridge.slots.get("is_empty"):
            self.last_result = DispenseResult(status="empty-cartridge", plan_id=intake.plan_id,
                                              intake_time=intake.time, started_ms=now, finished_ms=now)
            self.log_event("empty-cartridge", plan_id=intake.plan_id, intake_time=intake.time)
            return self.last_result
        delay = self.delay_profile.sample(DISPENSE, self.rng)
        self.pending = PendingDispense(intake, now, now + int(math.ceil(delay)))
        self.log_event("dispense-started", plan_id=intake.plan_id, intake_time=intake.time,
                       busy_until_ms=self.pending.ends_ms)
        return None

    def complete_dispense(self) -> Optional[DispenseResult]:
        pending = self.pending
        if pending is None:
            return self.last_result
        self.pending = None
        plan = self.find_plan(pending.intake.plan_id)
        intakes = plan.children.get("intake_times", []) if plan else []
        if pending.intake.intake_index >= len(intakes):
            self.log_event("dispense-aborted", reason="intake removed", plan_id=pending.intake.plan_id)
            self.last_result = DispenseResult(status="aborted", plan_id=pending.intake.plan_id,
                                              intake_time=pending.intake.time,
                                              started_ms=pending.started_ms, finished_ms=self.clock.now_ms)
            return self.last_result

        doses: Dict[str, int] = {}
        intake = intakes[pending.intake.intake_index]
        for i, line in enumerate(intake.children.get("medicine_lines", [])):
            key = f"{pending.intake.plan_id}/{pending.intake.intake_index}/{i}"
            wanted = int(line.slots["doses"])
            taken = max(0, min(wanted, int(line.slots["current_roll"])))
            line.slots["current_roll"] = int(line.slots["current_roll"]) - taken
            self.dispensed[key] = self.dispensed.get(key, 0) + taken
            doses[key] = taken
            if taken < wanted:
                self.log_event("short", line=key, wanted=wanted, taken=taken)

        lines = [line for p in self.instance.medication_plans
                 for it in p.children.get("intake_times", [])
                 for line in it.children.get("medicine_lines", [])]
        cartridge = self.instance.cartridge
        if cartridge is not None and lines and all(int(line.slots["current_roll"]) <= 0 for line in lines):
            cartridge.slots["is_empty"] = True
            self.log_event("cartridge-empty")

        self.last_result = DispenseResult(status="dispensed", plan_id=pending.intake.plan_id,
                                          intake_time=pending.intake.time, doses=doses,
                                          started_ms=pending.started_ms, finished_ms=self.clock.now_ms)
        self.log_event("dispense-complete", plan_id=pending.intake.plan_id,
                       intake_time=pending.intake.time, doses=doses)

        # Intakes that came due during the busy window are missed
        if plan is not None:
            for entry in self.schedule(plan):
                if pending.intake.at_ms < entry.at_ms < pending.ends_ms and entry.at_ms > self.cursor_ms:
                    self.log_event("missed", plan_id=entry.plan_id, intake_time=entry.time, at_ms=entry.at_ms)
                    self.cursor_ms = entry.at_ms
        return self.last_result

    def dispense(self, intake: ScheduledIntake) -> DispenseResult:
        """Run one complete dispense of ``intake``, consuming its delay on the virtual clock."""
        with self.lock:
            if self.current_state != DispenserState.DISPENSE.value:
                raise TwinException(ErrorCode.INVALID_STATE,
                                    f"dispense requires state Dispense, twin is in {self.current_state}")
            if self.active_plan_id is None or intake.plan_id != self.active_plan_id:
                raise TwinException(ErrorCode.NO_ACTIVE_PLAN, "Intake does not belong to the active plan")
            if self.pending is not None and self.pending.intake != intake:
                raise TwinException(ErrorCode.INVALID_STATE, "Another dispense is in progress")
            if self.pending is None:
                result = self.begin_dispense(intake)
                if result is not None:
                    return result
            self.clock.advance_to(self.pending.ends_ms)
            return self.complete_dispense()

    # Execution

    def _snapshot(self) -> Dict[str, Any]:
        return {
            "root": copy.deepcopy(self.instance.root),
            "pending": self.pending,
            "active_plan_id": self.active_plan_id,
            "completed_plans": set(self.completed_plans),
            "cursor_ms": self.cursor_ms,
            "dispensed": dict(self.dispensed),
            "last_result": self.last_result,
            "rng": self.rng.bit_generator.state,
        }

    def _restore(self, saved: Dict[str, Any]) -> None:
        self.instance.root = saved["root"]
        self.pending = saved["pending"]
        self.active_plan_id = saved["active_plan_id"]
        self.completed_plans = saved["completed_plans"]
        self.cursor_ms = saved["cursor_ms"]
        self.dispensed = saved["dispensed"]
        self.last_result = saved["last_result"]
        self.rng.bit_generator.state = saved["rng"]

    def _fire(self, transition: Transition) -> TransitionOutcome:
        """Fire a transition; if its effect or the entry action fails, the twin is left as it was."""
        source = self.current_state
        mark = len(self.event_log)
        saved = self._snapshot()
        try:
            if transition.effect is not None:
                transition.effect(self)
            self.current_state = transition.target
            self.log_event("transition", source=source, target=transition.target, name=transition.name)
            action = self.spec.entry_actions.get(transition.target)
            if action is not None:
                action(self)
        except Exception as e:
            self._restore(saved)
            del self.event_log[mark:]
            self.current_state = source
            self.log_event("action-failure", target=transition.target, error=str(e))
            logger.error(f"Twin {self.serial}: transition to {transition.target} failed: {e}", exc_info=True)
            raise TwinException(ErrorCode.ACTION_FAILURE, f"Entry action of {transition.target} failed: {e}")
        return TransitionOutcome(source=source, state=self.current_state, fired=True,
                                 events=self.event_log[mark:])

    def step(self) -> TransitionOutcome:
        """Fire the first enabled transition from the current state, or stay."""
        with self.lock:
            if self.current_state in self.spec.final:
                raise TwinException(ErrorCode.INVALID_STATE, f"Twin {self.serial} is shut down")
            for transition in self.spec.outgoing(self.current_state):
                if transition.enabled(self):
                    return self._fire(transition)
            event = self.log_event("stay")
            return TransitionOutcome(source=self.current_state, state=self.current_state, fired=False,
                                     events=[event])

    def _next_wakeup(self) -> int:
        now = self.clock.now_ms
        state = self.current_state
        if state == DispenserState.LOAD_MEDICATION_PLAN.value:
            return now if self.available_plan() is not None else now + self.poll_interval_ms
        if state == DispenserState.CHECK_MEDICATION_PLAN.value:
            upcoming = self.next_intake()
            return now if upcoming is None else max(now, upcoming.at_ms)
        if state == DispenserState.DISPENSE.value and self.pending is not None:
            return max(now, self.pending.ends_ms)
        return now

    def run_until(self, deadline_ms: int) -> List[TwinEvent]:
        """Step the machine through virtual time up to ``deadline_ms``; returns the events emitted."""
        with self.lock:
            if deadline_ms < self.clock.now_ms:
                raise TwinException(ErrorCode.INVALID_PARAMETERS,
                                    f"Deadline {deadline_ms} is before virtual time {self.clock.now_ms}")
            mark = len(self.event_log)
            not_before = self.clock.now_ms
            while not self.is_shutdown:
                wake = max(self._next_wakeup(), not_before)
                if wake > deadline_ms:
                    break
                self.clock.advance_to(wake)
                try:
                    fired = self.step().fired
                except TwinException as e:
                    if e.error_code != ErrorCode.ACTION_FAILURE:
                        raise
                    fired = False
                # Nothing fired: wait one poll interval before re-evaluating
                not_before = self.clock.now_ms if fired else self.clock.now_ms + self.poll_interval_ms
            self.clock.advance_to(deadline_ms)
            return self.event_log[mark:]

    def shutdown(self) -> None:
        with self.lock:
            if self.is_shutdown:
                return
            if self.pending is not None:
                self.log_event("dispense-aborted", reason="shutdown", plan_id=self.pending.intake.plan_id,
                               intake_time=self.pending.intake.time)
                self.pending = None
            transitions = self.spec.outgoing(self.current_state, trigger=SHUTDOWN_TRIGGER)
            self._fire(transitions[0])
            logger.info(f"Twin {self.serial} shut down at virtual {self.clock.now().isoformat()}")

    def export_events(self, path: Union[str, Path]) -> Path:
        return json_encoder.write_jsonl(path, (e.model_dump() for e in self.event_log))

    def __repr__(self):
        return f"TwinRuntime(serial={self.serial!r}, state={self.current_state})"


def step(rt: TwinRuntime) -> TransitionOutcome:
    return rt.step()


def dispense(rt: TwinRuntime, intake: ScheduledIntake) -> DispenseResult:
    return rt.dispense(intake)


def run_until(rt: TwinRuntime, deadline_ms: int) -> List[TwinEvent]:
    return rt.run_until(deadline_ms)


def shutdown(rt: TwinRuntime) -> None:
    rt.shutdown()
