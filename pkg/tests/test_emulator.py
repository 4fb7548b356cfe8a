import numpy as np
import pytest

from twins.exceptions import ErrorCode, TwinException
from twins.protocol.records import HttpMethod, RequestRecord
from twins.services.emulator_service import EmulatorConfig, LatencyBounds, ReferenceEmulator, emulate
from twins.services.twin_service import handle
from twins.behavior.runtime import TwinRuntime
from twins.fidelity.report import report
from twins.harness.generator import GeneratorConfig
from twins.harness.runner import RunPlan, run

from .conftest import FIRST_INTAKE_MS


def _request(i, route, body=None, method=HttpMethod.PUT, at=None, serial="100"):
    return RequestRecord(id=i, serial=serial, method=method, route=route, body=body,
                         sent_at_ms=i * 2_000 if at is None else at)


def test_latency_within_bounds(instance):
    cfg = EmulatorConfig(read=LatencyBounds(lower_ms=2_000, upper_ms=2_200), seed=5)
    emulator = ReferenceEmulator(cfg, instance)
    times = np.array([
        emulator.emulate(_request(i, "/karie/100/settings", method=HttpMethod.GET)).response_time_ms
        for i in range(1, 301)
    ])
    assert times.min() >= 2_000 and times.max() <= 2_200
    assert times.mean() == pytest.approx(2_100, abs=25)


def test_busy_during_dispense(instance):
    emulator = ReferenceEmulator(EmulatorConfig(dispense_busy_ms=70_000, quirk_rate=0.0), instance)
    inside = emulator.emulate(_request(1, "/karie/100/settings/alarm", {"volume": 2}, at=FIRST_INTAKE_MS + 30_000))
    assert inside.status_code == 503
    assert 100 <= inside.response_time_ms <= 400
    after = emulator.emulate(_request(2, "/karie/100/settings/alarm", {"volume": 2}, at=FIRST_INTAKE_MS + 70_000))
    assert after.status_code == 200


def test_emulator_copy_is_independent(instance):
    emulator = ReferenceEmulator(EmulatorConfig(quirk_rate=0.0), instance)
    emulator.emulate(_request(1, "/karie/100/settings/display", {"brightness": 1}))
    assert instance.settings.child("display").slots["brightness"] == 3
    assert emulator.runtime.instance.settings.child("display").slots["brightness"] == 1


def test_quirk_accepts_valid_part(instance):
    emulator = ReferenceEmulator(EmulatorConfig(quirk_rate=1.0), instance)
    response = emulator.emulate(_request(1, "/karie/100/settings/alarm", {"volume": 4, "repetitions": -2}))
    assert response.status_code == 200
    alarm = emulator.runtime.instance.settings.child("alarm")
    assert (alarm.slots["volume"], alarm.slots["repetitions"]) == (4, 3)


def test_quirk_never_accepts_all_invalid_body(instance):
    emulator = ReferenceEmulator(EmulatorConfig(quirk_rate=1.0), instance)
    response = emulator.emulate(_request(1, "/karie/100/settings/alarm", {"volume": 11}))
    assert response.status_code == 503


def test_without_quirks_emulator_matches_twin(instance, mapping):
    cfg = EmulatorConfig(quirk_rate=0.0, seed=11)
    emulator = ReferenceEmulator(cfg, instance, mapping=mapping)
    twin = TwinRuntime(instance.clone(), delay_profile=cfg.delay_profile(), seed=11)
    bodies = [{"volume": 4}, {"volume": 12}, {"volume": 4, "repetitions": -2}, {"melody": "Melody9"}]
    for i, body in enumerate(bodies * 5, start=1):
        twin_response = handle(_request(i, "/devices/100/settings/alarm", body), twin, mapping)
        device_response = emulator.emulate(_request(i, "/karie/100/settings/alarm", body))
        assert twin_response.status_code == device_response.status_code
        assert twin_response.response_time_ms == device_response.response_time_ms
    assert twin.instance.dump() == emulator.runtime.instance.dump()


def test_rejects_twin_routes(instance):
    emulator = ReferenceEmulator(EmulatorConfig(), instance)
    with pytest.raises(TwinException) as e:
        emulator.emulate(_request(1, "/devices/100/settings", method=HttpMethod.GET))
    assert e.value.error_code == ErrorCode.ROUTE_NOT_FOUND


def test_functional_form_checks_config(instance):
    cfg = EmulatorConfig(seed=1)
    emulator = ReferenceEmulator(cfg, instance)
    assert emulate(_request(1, "/karie/100/settings", method=HttpMethod.GET), cfg, emulator).status_code == 200
    with pytest.raises(TwinException):
        emulate(_request(2, "/karie/100/settings", method=HttpMethod.GET), EmulatorConfig(seed=2), emulator)


def test_bounds_must_be_ordered():
    with pytest.raises(ValueError):
        LatencyBounds(lower_ms=3_000, upper_ms=2_000)


def test_decline_rejects_valid_update_without_applying_it(instance):
    emulator = ReferenceEmulator(EmulatorConfig(quirk_rate=0.0, decline_rate=1.0), instance)
    response = emulator.emulate(_request(1, "/karie/100/settings/alarm", {"volume": 4}))
    assert response.status_code == 503
    assert response.body["error"]["error"] == "DEVICE_BUSY"
    assert 2_400 <= response.response_time_ms <= 3_000
    assert emulator.runtime.instance.settings.child("alarm").slots["volume"] == 5


def test_decline_leaves_reads_alone(instance):
    emulator = ReferenceEmulator(EmulatorConfig(quirk_rate=0.0, decline_rate=1.0), instance)
    response = emulator.emulate(_request(1, "/karie/100/settings/alarm", method=HttpMethod.GET))
    assert response.status_code == 200


def test_decline_rate_follows_quirk_rate_when_unset():
    assert EmulatorConfig(quirk_rate=0.3).effective_decline_rate == 0.3
    assert EmulatorConfig(quirk_rate=0.3, decline_rate=0.0).effective_decline_rate == 0.0


def test_status_flips_are_balanced(instance):
    result = run(RunPlan(hours=0.5, rate=30, custom=True), instance, GeneratorConfig(seed=4), EmulatorConfig(seed=4))
    pairs = list(zip(result.twin_trace.status_codes(), result.device_trace.status_codes()))
    accepted_by_device = sum(1 for t, d in pairs if (t, d) == (503, 200))
    declined_by_device = sum(1 for t, d in pairs if (t, d) == (200, 503))
    assert accepted_by_device > 5 and declined_by_device > 5
    row = report({"half-hour": result}).runs[0]
    assert 88 <= row.similarity_status_pct <= 96
    assert row.p_fisher > 0.05
