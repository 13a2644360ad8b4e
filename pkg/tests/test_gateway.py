"""Tests for the HTTP/SSE gateway consumed by the web UI."""

from __future__ import annotations

import json
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from gridscribe.gateway import create_app

FIXTURES = Path(__file__).parent / "fixtures" / "mcp"


@pytest.fixture()
def client(tmp_path):
    scenario = tmp_path / "exec.json"
    scenario.write_text(
        json.dumps(
            {
                "attempts": [
                    {"status": "runtime_error", "error_text": "error: scripted"},
                    {"status": "success", "stdout": "converged\n"},
                ]
            }
        ),
        encoding="utf-8",
    )
    config = {
        "llm_backend": "mock",
        "llm_mock_script": str(FIXTURES.parent / "gateway_llm_script.json"),
        "executor_backend": "mock",
        "mock_executor_scenario": str(scenario),
        "rag_mode": "none",
        "planner": False,
        "validator": False,
    }
    with TestClient(create_app(config)) as tc:
        yield tc


def sse_events(response) -> list[dict]:
    events = []
    buffer = ""
    for chunk in response.iter_text():
        buffer += chunk
    for block in buffer.split("\n\n"):
        block = block.strip()
        if block.startswith("data: "):
            events.append(json.loads(block[len("data: "):]))
    return events


def start_run(client, request="Run a DC power flow") -> str:
    response = client.post("/api/run", json={"request": request})
    assert response.status_code == 200
    return response.json()["session_id"]


class TestRunAndStream:
    def test_events_stream_in_seq_order_ending_done(self, client):
        sid = start_run(client)
        with client.stream("GET", f"/api/sessions/{sid}/events") as response:
            assert response.status_code == 200
            assert response.headers["content-type"].startswith("text/event-stream")
            events = sse_events(response)
        seqs = [e["seq"] for e in events]
        assert seqs == list(range(1, len(seqs) + 1))
        assert events[-1]["phase"] == "done"
        assert events[-1]["payload"]["status"] == "success"

    def test_result_available_after_done(self, client):
        sid = start_run(client)
        with client.stream("GET", f"/api/sessions/{sid}/events") as response:
            sse_events(response)
        result = client.get(f"/api/sessions/{sid}/result")
        assert result.status_code == 200
        body = result.json()
        assert body["status"] == "success"
        assert body["iterations_used"] == 2
        assert body["event_log"][-1]["phase"] == "done"

    def test_late_subscriber_replays_full_timeline(self, client):
        sid = start_run(client)
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            if client.get(f"/api/sessions/{sid}/result").status_code == 200:
                break
            time.sleep(0.02)
        with client.stream("GET", f"/api/sessions/{sid}/events") as response:
            events = sse_events(response)
        assert events[0]["seq"] == 1
        assert events[-1]["phase"] == "done"


class TestErrorPaths:
    def test_unknown_session_events_404(self, client):
        assert client.get("/api/sessions/bogus/events").status_code == 404

    def test_unknown_session_result_404(self, client):
        assert client.get("/api/sessions/bogus/result").status_code == 404

    def test_empty_request_400(self, client):
        assert client.post("/api/run", json={"request": "   "}).status_code == 400

    def test_result_while_running_409(self, tmp_path):
        scenario = tmp_path / "slow.json"
        scenario.write_text(
            json.dumps({"attempts": [{"status": "success", "sleep_ms": 400}]}),
            encoding="utf-8",
        )
        config = {
            "llm_backend": "mock",
            "llm_mock_script": str(FIXTURES.parent / "gateway_llm_script.json"),
            "executor_backend": "mock",
            "mock_executor_scenario": str(scenario),
            "rag_mode": "none",
            "planner": False,
            "validator": False,
        }
        with TestClient(create_app(config)) as tc:
            sid = start_run(tc)
            response = tc.get(f"/api/sessions/{sid}/result")
            assert response.status_code == 409
            with tc.stream("GET", f"/api/sessions/{sid}/events") as stream:
                sse_events(stream)
            assert tc.get(f"/api/sessions/{sid}/result").status_code == 200

    def test_setup_failure_yields_terminal_done_event(self, tmp_path):
        config = {
            "llm_backend": "mock",
            "llm_mock_script": str(FIXTURES.parent / "gateway_llm_script.json"),
            "executor_backend": "mock",
            "rag_mode": "none",
            "planner": False,
            "validator": False,
        }
        with TestClient(create_app(config)) as tc:
            response = tc.post("/api/run", json={"request": "x", "rag_mode": "bogus-mode"})
            sid = response.json()["session_id"]
            with tc.stream("GET", f"/api/sessions/{sid}/events") as stream:
                events = sse_events(stream)
            assert events[-1]["phase"] == "done"
            assert events[-1]["payload"]["status"] == "failure"
            result = tc.get(f"/api/sessions/{sid}/result")
            assert result.status_code == 200
            assert result.json()["status"] == "failure"
