from twins.behavior.clock import VirtualClock
from twins.behavior.delay import DelayProfile, OperationDelay, default_delay_profile, synchronize_from_logs
from twins.behavior.dispenser_behavior import DispenserState, builtin_dispenser_behavior
from twins.behavior.machine import BehaviorSpec, Transition, TransitionOutcome, TwinEvent
from twins.behavior.runtime import (
    DispenseResult,
    ScheduledIntake,
    TwinRuntime,
    dispense,
    run_until,
    shutdown,
    step,
)

__all__ = [
    "BehaviorSpec",
    "DelayProfile",
    "DispenseResult",
    "DispenserState",
    "OperationDelay",
    "ScheduledIntake",
    "Transition",
    "TransitionOutcome",
    "TwinEvent",
    "TwinRuntime",
    "VirtualClock",
    "builtin_dispenser_behavior",
    "default_delay_profile",
    "dispense",
    "run_until",
    "shutdown",
    "step",
    "synchronize_from_logs",
]
