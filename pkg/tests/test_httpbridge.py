"""Operator HTTP API: state, commands, historian, attacks, event stream."""
import json
import time

import pytest
from fastapi.testclient import TestClient

from icsbed.httpbridge import Bridge, create_app, sse_stream
from icsbed.kernel import SECOND
from icsbed.scenario import ScenarioConfig


@pytest.fixture
def bench():
    """Bridge with a hand-cranked clock: tests advance virtual time."""
    bridge = Bridge(ScenarioConfig(seed=2, duration_s=600))
    bridge.testbed.start()
    client = TestClient(create_app(bridge))

    def advance(seconds):
        with bridge.lock:
            bridge.testbed.kernel.run_until(
                bridge.testbed.kernel.now_us + int(seconds * SECOND)
            )

    return bridge, client, advance


def test_state_endpoint(bench):
    _, client, advance = bench
    advance(2)
    body = client.get("/api/state").json()
    assert body["plc_state"] == 1
    assert body["state_name"] == "Initialize"
    assert body["stale"] is False
    assert body["sensors"]["barrier_a"] is True


def test_order_endpoint_advances_state(bench):
    _, client, advance = bench
    advance(2)
    assert client.post("/api/order").status_code == 200
    advance(1)
    assert client.get("/api/state").json()["plc_state"] == 2


def test_estop_and_reset(bench):
    _, client, advance = bench
    advance(2)
    client.post("/api/estop")
    advance(1)
    assert client.get("/api/state").json()["plc_state"] == 6
    client.post("/api/reset")
    advance(1)
    assert client.get("/api/state").json()["plc_state"] == 1


def test_control_requires_manual_mode(bench):
    _, client, advance = bench
    advance(2)
    r = client.post("/api/control", json={"motor": "punch", "dir": "down"})
    assert r.status_code == 409
    client.post("/api/mode", json={"manual": True})
    advance(1)
    r = client.post("/api/control", json={"motor": "punch", "dir": "down"})
    assert r.status_code == 200
    advance(1)
    assert client.get("/api/state").json()["sensors"]["limit_upper"] is False


def test_control_validates_body(bench):
    _, client, advance = bench
    advance(1)
    assert client.post("/api/mode", json={"manual": "yes"}).status_code == 422
    assert client.post("/api/control", json={"motor": "drill", "dir": "up"}).status_code == 422


def test_historian_endpoints(bench):
    _, client, advance = bench
    advance(5)
    rows = client.get("/api/historian", params={"point": "state"}).json()
    assert len(rows) >= 4
    assert all(r["point"] == "state" for r in rows)
    assert client.get("/api/historian", params={"point": "bogus"}).status_code == 404
    r = client.post("/api/historian/rewrite", json={"point": "state", "value": 6})
    assert r.json()["records_changed"] >= 4


def test_attack_endpoint_schedules(bench):
    bridge, client, advance = bench
    advance(1)
    r = client.post("/api/attack", json={
        "op": "flood", "profile": "remote",
        "params": {"target": "192.168.0.30", "rate_pps": 4000, "duration_s": 5},
    })
    assert r.status_code == 200
    advance(8)
    assert client.get("/api/state").json()["plc_state"] == 6
    assert client.post("/api/attack", json={"op": "teleport"}).status_code == 422


def test_paced_bridge_runs_in_real_time():
    """With the pacing thread, Order moves the shown state 1->2 within 1.2 s."""
    bridge = Bridge(ScenarioConfig(seed=2, duration_s=600), speed=1.0)
    bridge.start()
    client = TestClient(create_app(bridge))
    try:
        deadline = time.monotonic() + 5
        while client.get("/api/state").json()["last_update_us"] < 0:
            assert time.monotonic() < deadline
            time.sleep(0.05)
        client.post("/api/order")
        t0 = time.monotonic()
        while True:
            if client.get("/api/state").json()["plc_state"] == 2:
                break
            assert time.monotonic() - t0 < 1.2, "state change not visible in time"
            time.sleep(0.05)
    finally:
        bridge.stop()


def test_event_stream_delivers_snapshots():
    bridge = Bridge(ScenarioConfig(seed=2, duration_s=600), speed=50.0)
    bridge.start()
    try:
        got = None
        deadline = time.monotonic() + 10
        for chunk in sse_stream(bridge, poll_s=0.02):
            if chunk.startswith("data: "):
                got = json.loads(chunk[len("data: "):].strip())
                break
            assert time.monotonic() < deadline, "no event arrived"
        assert got["kind"] in ("snapshot", "alarm")
        assert "t_us" in got
    finally:
        bridge.stop()


def test_event_stream_ends_on_shutdown():
    bridge = Bridge(ScenarioConfig(seed=2, duration_s=600))
    bridge.start()
    bridge.stop()
    assert list(sse_stream(bridge)) == []
