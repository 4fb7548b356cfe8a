import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twins.behavior import (
    DelayProfile,
    DispenserState,
    OperationDelay,
    TwinRuntime,
    VirtualClock,
    builtin_dispenser_behavior,
    default_delay_profile,
    run_until,
    shutdown,
    step,
    synchronize_from_logs,
)
from twins.behavior.delay import DISPENSE, READ
from twins.exceptions import ErrorCode, TwinException
from twins.factory import generate_template, instantiate
from twins.protocol.records import HttpMethod, RequestRecord
from twins.services.twin_service import handle

from .conftest import FIRST_INTAKE_MS

DAY_MS = 24 * 60 * 60 * 1000
SCHEDULE_STEPS = 10_000
FIXED_DISPENSE = default_delay_profile().merged(
    DelayProfile(operations={DISPENSE: OperationDelay(lower_ms=70_000, upper_ms=70_000, mean_ms=70_000)}))


def _events(rt, name):
    return [e for e in rt.event_log if e.event == name]


def _rolls(instance):
    return sum(line.slots["current_roll"]
               for plan in instance.medication_plans
               for intake in plan.children["intake_times"]
               for line in intake.children["medicine_lines"])


def test_clock_moves_only_forward():
    clock = VirtualClock(acceleration=60)
    assert clock.now().isoformat() == "2024-01-01T08:30:00"
    clock.advance(1_000)
    clock.advance_to(500)
    assert clock.now_ms == 1_000
    with pytest.raises(ValueError):
        clock.advance(-1)
    assert clock.wall_seconds(60_000) == pytest.approx(1.0)


def test_initial_steps(runtime):
    assert runtime.current_state == DispenserState.SETUP.value
    outcome = step(runtime)
    assert outcome.fired and outcome.state == DispenserState.LOAD_MEDICATION_PLAN.value
    assert step(runtime).state == DispenserState.CHECK_MEDICATION_PLAN.value
    assert runtime.active_plan_id == "plan-1"
    # nothing due before 09:00
    stay = step(runtime)
    assert not stay.fired and stay.events[0].event == "stay"


def test_machine_is_well_formed():
    spec = builtin_dispenser_behavior()
    graph = spec.graph()
    assert graph.has_edge("Dispense", "CheckMedicationPlan")
    assert all(graph.has_edge(s, "Shutdown") for s in spec.states if s != "Shutdown")


def test_dispense_at_intake_time(runtime):
    run_until(runtime, FIRST_INTAKE_MS)
    assert runtime.current_state == DispenserState.DISPENSE.value
    assert runtime.is_busy()
    started = _events(runtime, "dispense-started")[0]
    assert started.time_ms == FIRST_INTAKE_MS
    assert 60_000 <= started.detail["busy_until_ms"] - FIRST_INTAKE_MS <= 80_000

    run_until(runtime, FIRST_INTAKE_MS + 80_000)
    assert runtime.current_state == DispenserState.CHECK_MEDICATION_PLAN.value
    assert not runtime.is_busy()
    assert runtime.last_result.status == "dispensed"
    assert runtime.last_result.doses == {"plan-1/0/0": 1}
    line = runtime.instance.medication_plans[0].children["intake_times"][0].children["medicine_lines"][0]
    assert line.slots["current_roll"] == 27


def test_dispense_operation(runtime):
    run_until(runtime, FIRST_INTAKE_MS)
    intake = runtime.pending.intake
    result = runtime.dispense(intake)
    assert result.status == "dispensed"
    assert runtime.clock.now_ms == result.finished_ms
    assert result.finished_ms - result.started_ms >= 60_000
    assert step(runtime).state == DispenserState.CHECK_MEDICATION_PLAN.value


def test_dispense_outside_dispense_state(runtime):
    with pytest.raises(TwinException) as e:
        runtime.dispense(runtime.schedule(runtime.instance.medication_plans[0])[0])
    assert e.value.error_code == ErrorCode.INVALID_STATE


def test_no_active_plan(runtime):
    with pytest.raises(TwinException) as e:
        runtime.begin_dispense(None)
    assert e.value.error_code == ErrorCode.NO_ACTIVE_PLAN


def test_plan_completion_returns_to_load(runtime):
    run_until(runtime, 15 * DAY_MS)
    assert runtime.completed_plans == {"plan-1"}
    assert runtime.current_state == DispenserState.LOAD_MEDICATION_PLAN.value
    assert len(_events(runtime, "dispense-complete")) == 14
    assert _rolls(runtime.instance) == 28 - 14
    assert _events(runtime, "plan-completed")


def test_removed_plan_is_abandoned(runtime):
    run_until(runtime, FIRST_INTAKE_MS + 80_000)
    runtime.instance.medication_plans.clear()
    run_until(runtime, FIRST_INTAKE_MS + DAY_MS)
    assert _events(runtime, "plan-removed")
    assert runtime.current_state == DispenserState.LOAD_MEDICATION_PLAN.value
    assert runtime.completed_plans == set()


def test_short_supply_and_empty_cartridge(schema, filled):
    line = filled["device"]["medication_plans"][0]["intake_times"][0]["medicine_lines"][0]
    line["doses"], line["current_roll"] = 5, 3
    rt = TwinRuntime(instantiate(schema, filled, "1"), seed=1)
    run_until(rt, FIRST_INTAKE_MS + 80_000)
    short = _events(rt, "short")[0]
    assert (short.detail["wanted"], short.detail["taken"]) == (5, 3)
    assert rt.instance.cartridge.slots["is_empty"] is True
    assert _events(rt, "cartridge-empty")

    before = rt.instance.dump()
    run_until(rt, FIRST_INTAKE_MS + DAY_MS)
    assert _events(rt, "empty-cartridge")
    assert rt.last_result.status == "empty-cartridge"
    assert rt.instance.dump() == before


def test_intakes_inside_busy_window_are_missed(schema, filled):
    plan = filled["device"]["medication_plans"][0]
    plan["intake_times"] = [{"time": "09:00", "medicine_lines": [{"doses": 1}]},
                            {"time": "09:01", "medicine_lines": [{"doses": 2}]}]
    rt = TwinRuntime(instantiate(schema, filled, "1"), delay_profile=FIXED_DISPENSE, seed=1)
    run_until(rt, FIRST_INTAKE_MS + 10 * 60_000)
    missed = _events(rt, "missed")
    assert [e.detail["intake_time"] for e in missed] == ["09:01"]
    assert len(_events(rt, "dispense-complete")) == 1


def test_busy_window_rejects_requests(runtime, mapping):
    run_until(runtime, FIRST_INTAKE_MS)
    before = runtime.instance.dump()
    ends = runtime.pending.ends_ms
    for i, at in enumerate(range(FIRST_INTAKE_MS, ends, 5_000), start=1):
        request = RequestRecord(id=i, serial="100", method=HttpMethod.PUT, route="/devices/100/settings/alarm",
                                body={"volume": 7}, sent_at_ms=at)
        response = handle(request, runtime, mapping)
        assert response.status_code == 503
        assert response.body["error"]["error"] == "DEVICE_BUSY"
        assert 100 <= response.response_time_ms <= 400
    assert runtime.instance.dump() == before


@pytest.mark.parametrize("deadline", [None, 0, FIRST_INTAKE_MS, FIRST_INTAKE_MS + 90_000, 2 * DAY_MS])
def test_shutdown_from_any_state(runtime, mapping, deadline):
    if deadline is not None:
        run_until(runtime, deadline)
    busy = runtime.pending is not None
    shutdown(runtime)
    assert runtime.current_state == DispenserState.SHUTDOWN.value
    assert runtime.pending is None
    assert bool(_events(runtime, "dispense-aborted")) == busy
    shutdown(runtime)
    with pytest.raises(TwinException) as e:
        step(runtime)
    assert e.value.error_code == ErrorCode.INVALID_STATE
    request = RequestRecord(id=1, serial="100", method=HttpMethod.GET, route="/devices/100/settings",
                            sent_at_ms=runtime.clock.now_ms)
    assert handle(request, runtime, mapping).status_code == 503


def test_failing_entry_action_reverts(runtime):
    def boom(rt):
        raise RuntimeError("motor jammed")

    runtime.spec.entry_actions[DispenserState.LOAD_MEDICATION_PLAN.value] = boom
    with pytest.raises(TwinException) as e:
        step(runtime)
    assert e.value.error_code == ErrorCode.ACTION_FAILURE
    assert runtime.current_state == DispenserState.SETUP.value
    assert runtime.event_log[-1].event == "action-failure"


def test_failing_entry_action_undoes_transition_effect(runtime):
    def boom(rt):
        raise RuntimeError("sensor offline")

    run_until(runtime, FIRST_INTAKE_MS)
    pending = runtime.pending
    check = DispenserState.CHECK_MEDICATION_PLAN.value
    original = runtime.spec.entry_actions.get(check)
    runtime.spec.entry_actions[check] = boom
    runtime.clock.advance_to(pending.ends_ms)
    with pytest.raises(TwinException) as e:
        step(runtime)
    assert e.value.error_code == ErrorCode.ACTION_FAILURE
    assert runtime.current_state == DispenserState.DISPENSE.value
    assert runtime.pending == pending
    assert _rolls(runtime.instance) == 28
    assert runtime.dispensed == {}
    assert not _events(runtime, "dispense-complete")

    if original is None:
        del runtime.spec.entry_actions[check]
    else:
        runtime.spec.entry_actions[check] = original
    assert step(runtime).state == check
    assert _rolls(runtime.instance) == 27


def test_deadline_in_the_past(runtime):
    run_until(runtime, 1_000)
    with pytest.raises(TwinException) as e:
        run_until(runtime, 500)
    assert e.value.error_code == ErrorCode.INVALID_PARAMETERS


def test_event_export(runtime, tmp_path):
    run_until(runtime, FIRST_INTAKE_MS)
    path = runtime.export_events(tmp_path / "events.jsonl")
    assert len(path.read_text().splitlines()) == len(runtime.event_log)


@settings(max_examples=30, deadline=None)
@given(steps=st.lists(st.integers(min_value=1, max_value=6 * 60 * 60 * 1000), min_size=1, max_size=40),
       doses=st.integers(min_value=0, max_value=9), roll=st.integers(min_value=0, max_value=40))
def test_doses_are_conserved(schema, steps, doses, roll):
    filled = generate_template(schema)
    line = filled["device"]["medication_plans"][0]["intake_times"][0]["medicine_lines"][0]
    line["doses"], line["current_roll"] = doses, roll
    rt = TwinRuntime(instantiate(schema, filled, "1"), seed=3)
    now = 0
    for delta in steps:
        now += delta
        rt.run_until(now)
        assert sum(rt.dispensed.values()) + _rolls(rt.instance) == roll
        assert _rolls(rt.instance) >= 0


def test_synchronize_from_logs():
    lines = [
        '{"operation": "read", "start_ms": 0, "end_ms": 2000}',
        '{"operation": "read", "start_ms": 10, "end_ms": 2410}',
        "",
        '{"operation": "dispense", "start_ms": 0, "end_ms": 65000}',
    ]
    profile = synchronize_from_logs(lines)
    read = profile.get(READ)
    assert (read.lower_ms, read.upper_ms, read.mean_ms) == (2000, 2400, 2200)
    assert profile.get(DISPENSE).mean_ms == 65000


def test_synchronize_rejects_bad_logs():
    with pytest.raises(TwinException) as e:
        synchronize_from_logs([])
    assert e.value.error_code == ErrorCode.EMPTY_LOG
    with pytest.raises(TwinException) as e:
        synchronize_from_logs(['{"operation": "read", "start_ms": 5, "end_ms": 1}'])
    assert e.value.error_code == ErrorCode.MALFORMED_RECORD


def test_synced_profile_keeps_unlogged_operations(schema, filled, mapping):
    profile = synchronize_from_logs(['{"operation": "settings-update", "start_ms": 0, "end_ms": 2500}'])
    assert profile.get(READ) == default_delay_profile().get(READ)
    rt = TwinRuntime(instantiate(schema, filled, "100"), delay_profile=profile, seed=1)
    update = handle(RequestRecord(id=1, serial="100", method=HttpMethod.PUT, route="/devices/100/settings/alarm",
                                  body={"volume": 4}), rt, mapping)
    assert update.status_code == 200
    assert update.response_time_ms == 2500
    read = handle(RequestRecord(id=2, serial="100", method=HttpMethod.GET, route="/devices/100/settings/alarm"),
                  rt, mapping)
    assert read.status_code == 200
    assert read.body["data"]["volume"] == 4
    assert 1_800 <= read.response_time_ms <= 2_600


def _random_twin(schema, rng):
    """A twin whose only plan has random intake times, doses, rolls and period, starting the day after."""
    filled = generate_template(schema)
    plan = filled["device"]["medication_plans"][0]
    minutes = sorted(int(m) for m in rng.choice(24 * 60, size=int(rng.integers(1, 4)), replace=False))
    plan["first_dose_date"] = "2024-01-02"
    plan["period_days"] = int(rng.integers(1, 29))
    plan["intake_times"] = [
        {"time": f"{m // 60:02d}:{m % 60:02d}",
         "medicine_lines": [{"doses": int(rng.integers(0, 10)), "current_roll": int(rng.integers(0, 41))}
                            for _ in range(int(rng.integers(1, 3)))]}
        for m in minutes
    ]
    return TwinRuntime(instantiate(schema, filled, "1"), seed=int(rng.integers(0, 2 ** 31)),
                       poll_interval_ms=30 * 60_000)


def _dispense_windows(rt):
    return [(e.time_ms, e.detail["busy_until_ms"]) for e in _events(rt, "dispense-started")]


def test_doses_are_conserved_over_random_schedules(schema):
    rng = np.random.default_rng(11)
    steps = 0
    while steps < SCHEDULE_STEPS:
        rt = _random_twin(schema, rng)
        stock = _rolls(rt.instance)
        now = 0
        for _ in range(200):
            now += int(rng.integers(1_000, 6 * 60 * 60 * 1000))
            rt.run_until(now)
            steps += 1
            assert sum(rt.dispensed.values()) + _rolls(rt.instance) == stock
            assert _rolls(rt.instance) >= 0


def test_requests_inside_dispense_windows_are_rejected(schema, mapping):
    rng = np.random.default_rng(12)
    steps = 0
    rejected = 0
    while steps < SCHEDULE_STEPS:
        rt = _random_twin(schema, rng)
        for i in range(300):
            now = rt.clock.now_ms
            upcoming = rt.pending.intake if rt.pending is not None else rt.next_intake()
            if upcoming is not None and rng.random() < 0.5:
                at = max(now, upcoming.at_ms + int(rng.integers(-5_000, 85_000)))
            else:
                at = now + int(rng.integers(1_000, 60_000))
            volume = int(rng.integers(0, 11))
            before = rt.instance.dump()
            request = RequestRecord(id=i, serial="1", method=HttpMethod.PUT, route="/devices/1/settings/alarm",
                                    body={"volume": volume}, sent_at_ms=at)
            response = handle(request, rt, mapping)
            steps += 1
            busy = any(start <= at < end for start, end in _dispense_windows(rt))
            if busy:
                rejected += 1
                assert response.status_code == 503
                assert response.body["error"]["error"] == "DEVICE_BUSY"
                assert rt.instance.dump() == before
            else:
                assert response.status_code == 200
                assert rt.instance.settings.child("alarm").slots["volume"] == volume
    assert rejected > 500


def test_plans_complete_after_their_last_intake(schema):
    rng = np.random.default_rng(13)
    steps = 0
    while steps < SCHEDULE_STEPS:
        rt = _random_twin(schema, rng)
        schedule = rt.schedule(rt.instance.medication_plans[0])
        last = schedule[-1].at_ms
        settled = last + 80_000 + rt.poll_interval_ms
        now = 0
        while now < settled:
            now += int(rng.integers(60_000, 12 * 60 * 60 * 1000))
            rt.run_until(now)
            steps += 1
            if now < last:
                assert rt.completed_plans == set()
        assert rt.completed_plans == {"plan-1"}
        assert rt.current_state == DispenserState.LOAD_MEDICATION_PLAN.value
        handled = [e for e in rt.event_log if e.event in ("dispense-started", "missed", "empty-cartridge")]
        assert len(handled) == len(schedule)


def test_shutdown_from_random_states(schema, mapping):
    rng = np.random.default_rng(14)
    steps = 0
    while steps < SCHEDULE_STEPS:
        rt = _random_twin(schema, rng)
        now = 0
        for _ in range(int(rng.integers(0, 20))):
            now += int(rng.integers(1_000, 8 * 60 * 60 * 1000))
            rt.run_until(now)
            steps += 1
        busy = rt.pending is not None
        stock = _rolls(rt.instance)
        shutdown(rt)
        steps += 1
        assert rt.current_state == DispenserState.SHUTDOWN.value
        assert rt.pending is None
        assert _rolls(rt.instance) == stock
        assert bool(_events(rt, "dispense-aborted")) == busy

        before = rt.instance.dump()
        events = len(rt.event_log)
        for i in range(5):
            now += int(rng.integers(1_000, 8 * 60 * 60 * 1000))
            request = RequestRecord(id=i, serial="1", method=HttpMethod.PUT, route="/devices/1/settings/alarm",
                                    body={"volume": 2}, sent_at_ms=now)
            assert handle(request, rt, mapping).status_code == 503
            steps += 1
        assert rt.instance.dump() == before
        assert len(rt.event_log) == events
