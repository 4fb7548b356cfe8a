import httpx
import pytest
from fastapi.testclient import TestClient

from twins.api.app import create_app, serve
from twins.behavior.runtime import TwinRuntime
from twins.common.config import ServerConfig
from twins.exceptions import ErrorCode, TwinException
from twins.harness.endpoints import HttpEndpoint
from twins.protocol.records import HttpMethod, RequestRecord
from twins.services.emulator_service import EmulatorConfig, ReferenceEmulator
from twins.services.registry import TwinRegistry

AT_START = {"X-Virtual-Time-Ms": "0"}


@pytest.fixture
def client(schema, instance):
    registry = TwinRegistry(schema, [TwinRuntime(instance, seed=1)],
                            [ReferenceEmulator(EmulatorConfig(seed=1), instance)])
    return TestClient(create_app(registry, tick=False))


def test_health_and_routes(client):
    assert client.get("/health").json() == {"status": "ok", "twins": 1, "devices": 1}
    routes = client.get("/routes").json()
    assert {"dt_route": "/devices/{serial}/settings/alarm", "device_route": "/karie/{serial}/settings/alarm"}.items() \
        <= next(r for r in routes if r["class_name"] == "Alarm").items()


def test_put_and_get_over_http(client):
    response = client.put("/devices/100/settings/alarm", json={"volume": 8}, headers=AT_START)
    assert response.status_code == 200
    assert response.json()["data"]["volume"] == 8
    assert 2_400 <= float(response.headers["X-Response-Time-Ms"]) <= 3_000
    assert client.get("/devices/100/settings/alarm", headers=AT_START).json()["data"]["volume"] == 8


def test_vendor_route_reaches_emulator(client):
    client.put("/devices/100/settings/alarm", json={"volume": 8}, headers=AT_START)
    response = client.get("/karie/100/settings/alarm", headers=AT_START)
    assert response.status_code == 200
    assert response.json()["data"]["volume"] == 5


def test_invalid_body_is_503(client):
    response = client.post("/devices/100/settings/display", json={"brightness": 6}, headers=AT_START)
    assert response.status_code == 503
    assert response.json()["error"]["error"] == "CONSTRAINT_VIOLATION"
    assert client.get("/devices/100/settings/display", headers=AT_START).json()["data"]["brightness"] == 3


def test_unmapped_route_is_404(client):
    assert client.get("/devices/100/settings/keyboard").status_code == 404
    response = client.get("/devices/999/settings")
    assert response.status_code == 404
    assert response.json()["error"] == "ROUTE_NOT_FOUND"


def test_error_body_shape(client):
    body = client.get("/devices/100/settings/keyboard").json()
    assert set(body) == {"error", "code", "message"}
    assert body["code"] == int(ErrorCode.ROUTE_NOT_FOUND)


def test_bad_json_is_400(client):
    response = client.put("/devices/100/settings", content=b"{oops", headers=AT_START)
    assert response.status_code == 400
    assert response.json()["error"] == "PARSE_ERROR"


def test_bind_must_be_host_port():
    with pytest.raises(ValueError):
        ServerConfig(bind="localhost")


def test_serve_and_stop(instance):
    handle = serve([TwinRuntime(instance.clone(), seed=1)], ServerConfig(bind="127.0.0.1:0"))
    try:
        assert httpx.get(f"{handle.url}/health").json()["twins"] == 1
        endpoint = HttpEndpoint(handle.url, name="twin", pace=False)
        request = RequestRecord(id=1, serial="100", method=HttpMethod.GET, route="/devices/100/settings")
        response = endpoint.send(request)
        endpoint.close()
        assert response.status_code == 200 and 1_800 <= response.response_time_ms <= 2_600

        with pytest.raises(TwinException) as e:
            serve([TwinRuntime(instance.clone(), seed=1)], ServerConfig(bind=f"127.0.0.1:{handle.port}"))
        assert e.value.error_code == ErrorCode.BIND_FAILURE
    finally:
        handle.stop()
    assert not handle.thread.is_alive()


def test_forward_to_device(instance):
    device = serve([], ServerConfig(bind="127.0.0.1:0"),
                   emulators=[ReferenceEmulator(EmulatorConfig(quirk_rate=0.0), instance)])
    twins = serve([TwinRuntime(instance.clone(), seed=1)],
                  ServerConfig(bind="127.0.0.1:0", device_upstream=device.url))
    try:
        response = httpx.put(f"{twins.url}/devices/100/settings/alarm", json={"volume": 9},
                             headers={"X-Forward-To-Device": "1"})
        assert response.status_code == 200
        assert httpx.get(f"{device.url}/karie/100/settings/alarm").json()["data"]["volume"] == 9
        assert httpx.get(f"{twins.url}/devices/100/settings/alarm").json()["data"]["volume"] == 5
    finally:
        twins.stop()
        device.stop()


def test_nothing_to_serve():
    with pytest.raises(TwinException) as e:
        serve([], ServerConfig(bind="127.0.0.1:0"))
    assert e.value.error_code == ErrorCode.INVALID_PARAMETERS
