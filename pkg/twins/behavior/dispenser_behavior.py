"""The medicine dispenser's state machine."""
from enum import Enum

from twins.behavior.machine import SHUTDOWN_TRIGGER, BehaviorSpec, Transition


class DispenserState(str, Enum):
    SETUP = "Setup"
    LOAD_MEDICATION_PLAN = "LoadMedicationPlan"
    CHECK_MEDICATION_PLAN = "CheckMedicationPlan"
    DISPENSE = "Dispense"
    SHUTDOWN = "Shutdown"


S = DispenserState


def _enter_setup(rt) -> None:
    settings = rt.instance.settings
    rt.log_event("setup", settings=dict(settings.slots) if settings else {})


def _enter_load(rt) -> None:
    rt.log_event("waiting-for-plan")


def _enter_check(rt) -> None:
    upcoming = rt.next_intake()
    rt.log_event("checking-plan", plan_id=rt.active_plan_id,
                 next_intake_ms=upcoming.at_ms if upcoming else None)


def _enter_dispense(rt) -> None:
    rt.begin_dispense(rt.next_intake())


def _enter_shutdown(rt) -> None:
    rt.log_event("shut-down")


def builtin_dispenser_behavior() -> BehaviorSpec:
    """
    Setup -> LoadMedicationPlan; LoadMedicationPlan polls until a plan is
    available, then CheckMedicationPlan waits for the next intake time and
    enters Dispense, which returns to CheckMedicationPlan when done. A
    completed plan sends the dispenser back to LoadMedicationPlan. Every
    state can be shut down.
    """
    transitions = [
        Transition(S.SETUP, S.LOAD_MEDICATION_PLAN, name="configured"),
        Transition(S.LOAD_MEDICATION_PLAN, S.CHECK_MEDICATION_PLAN,
                   guard=lambda rt: rt.available_plan() is not None,
                   effect=lambda rt: rt.activate_plan(), name="plan-loaded"),
        Transition(S.CHECK_MEDICATION_PLAN, S.LOAD_MEDICATION_PLAN,
                   guard=lambda rt: rt.plan_finished(),
                   effect=lambda rt: rt.complete_plan(), name="plan-completed"),
        Transition(S.CHECK_MEDICATION_PLAN, S.DISPENSE,
                   guard=lambda rt: rt.intake_due(), name="intake-time"),
        Transition(S.DISPENSE, S.CHECK_MEDICATION_PLAN,
                   guard=lambda rt: rt.dispense_finished(),
                   effect=lambda rt: rt.complete_dispense(), name="dispensed"),
    ]
    transitions += [
        Transition(state, S.SHUTDOWN, trigger=SHUTDOWN_TRIGGER, name="shutdown")
        for state in (S.SETUP, S.LOAD_MEDICATION_PLAN, S.CHECK_MEDICATION_PLAN, S.DISPENSE)
    ]
    return BehaviorSpec(
        states=tuple(s.value for s in S),
        initial=S.SETUP.value,
        final=(S.SHUTDOWN.value,),
        transitions=tuple(
            Transition(t.source.value, t.target.value, t.guard, t.trigger, t.effect, t.name) for t in transitions
        ),
        entry_actions={
            S.SETUP.value: _enter_setup,
            S.LOAD_MEDICATION_PLAN.value: _enter_load,
            S.CHECK_MEDICATION_PLAN.value: _enter_check,
            S.DISPENSE.value: _enter_dispense,
            S.SHUTDOWN.value: _enter_shutdown,
        },
        shutdown_state=S.SHUTDOWN.value,
    )
