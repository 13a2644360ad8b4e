"""Tests for the MCP stdio service: frames, workers, sentinel parsing."""

from __future__ import annotations

import json
import time
from pathlib import Path

import pytest

from mcp_harness import StdioServer
from gridscribe.errors import BusyError, MalformedPacketError, NoResultError
from gridscribe.mcp import (
    INVALID_PARAMS,
    METHOD_NOT_FOUND,
    PARSE_ERROR,
    SENTINEL,
    SERVER_BUSY,
    McpServer,
    ResultPacket,
    WorkerPool,
    parse_sentinel_stream,
    result_packet,
)

FIXTURES = Path(__file__).parent / "fixtures" / "mcp"


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def fixture_line(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8").strip()


class TestParseSentinelStream:
    def test_log_polluted_fixture(self):
        lines = (FIXTURES / "polluted_stream.txt").read_text(encoding="utf-8").splitlines()
        packet, log = parse_sentinel_stream(lines)
        assert packet.status == "success"
        assert packet.iterations == 2
        assert packet.final_code == "x = 1;"
        assert log == [
            "octave: warning: some interpreter noise",
            "processing case file ...",
            "trailing shutdown noise",
        ]

    def test_no_sentinel_raises(self):
        with pytest.raises(NoResultError):
            parse_sentinel_stream(["just logs", "no result here"])

    def test_last_sentinel_wins(self):
        lines = [
            SENTINEL + '{"status":"failure","iterations":1}',
            "retry noise",
            SENTINEL + '{"status":"success","iterations":2}',
        ]
        packet, log = parse_sentinel_stream(lines)
        assert packet.status == "success"
        assert packet.iterations == 2
        assert log == ["retry noise"]

    def test_malformed_packet(self):
        with pytest.raises(MalformedPacketError):
            parse_sentinel_stream([SENTINEL + "{not json"])
        with pytest.raises(MalformedPacketError):
            parse_sentinel_stream([SENTINEL + '["no", "status"]'])

    def test_sentinel_without_trailing_space_is_log(self):
        with pytest.raises(NoResultError):
            parse_sentinel_stream(["@@GRIDSCRIBE_RESULT@@{\"status\":\"x\"}"])

    def test_round_trip_with_result_packet(self):
        packet = ResultPacket(final_code="a", status="success", iterations=1)
        reparsed, _ = parse_sentinel_stream([SENTINEL + packet.to_json_line()])
        assert reparsed == packet


def make_server(**config_overrides) -> McpServer:
    config = {
        "llm_backend": "mock",
        "llm_mock_script": str(FIXTURES / "golden_llm_script.json"),
        "executor_backend": "mock",
        "mock_executor_scenario": str(FIXTURES / "golden_exec_scenario.json"),
        "rag_mode": "none",
        "planner": False,
        "validator": False,
    }
    config.update(config_overrides)
    return McpServer(config=config, config_path=str(FIXTURES / "server_config.json"))


class TestHandleFrame:
    def test_initialize_echoes_protocol_version(self):
        server = make_server()
        response = server.handle_frame(
            {"jsonrpc": "2.0", "id": 9, "method": "initialize",
             "params": {"protocolVersion": "2099-01-01"}}
        )
        assert response["result"]["protocolVersion"] == "2099-01-01"
        assert response["result"]["serverInfo"]["name"] == "gridscribe"

    def test_tools_list_single_tool(self):
        response = make_server().handle_frame(
            {"jsonrpc": "2.0", "id": 1, "method": "tools/list"}
        )
        tools = response["result"]["tools"]
        assert [t["name"] for t in tools] == ["run_matpower_task"]
        assert tools[0]["inputSchema"]["required"] == ["request"]

    def test_unknown_method(self):
        response = make_server().handle_frame({"jsonrpc": "2.0", "id": 2, "method": "foo"})
        assert response["error"]["code"] == METHOD_NOT_FOUND

    def test_notification_not_answered(self):
        server = make_server()
        assert server.handle_frame(
            {"jsonrpc": "2.0", "method": "notifications/initialized"}
        ) is None
        assert server.handle_frame({"jsonrpc": "2.0", "method": "some/notify"}) is None

    def test_invalid_request_frame(self):
        response = make_server().handle_frame({"id": 1, "method": "x"})
        assert response["error"]["code"] == -32600

    @pytest.mark.parametrize(
        "params",
        [
            {},
            {"name": "run_matpower_task"},
            {"name": "run_matpower_task", "arguments": {}},
            {"name": "run_matpower_task", "arguments": {"request": "   "}},
            {"name": "other_tool", "arguments": {"request": "x"}},
            {"name": "run_matpower_task", "arguments": {"request": "x", "rag_mode": "bogus"}},
            {"name": "run_matpower_task", "arguments": {"request": "x", "backend": "weird"}},
        ],
    )
    def test_tools_call_invalid_params(self, params):
        response = make_server().handle_frame(
            {"jsonrpc": "2.0", "id": 3, "method": "tools/call", "params": params}
        )
        assert response["error"]["code"] == INVALID_PARAMS

    def test_busy_when_limit_reached(self):
        server = make_server()
        server.pool.limit = 0
        response = server.handle_frame(
            {"jsonrpc": "2.0", "id": 4, "method": "tools/call",
             "params": {"name": "run_matpower_task", "arguments": {"request": "x"}}}
        )
        assert response["error"]["code"] == SERVER_BUSY


@pytest.fixture()
def stdio_server():
    server = StdioServer(FIXTURES / "server_config.json")
    yield server
    server.close()


class TestGoldenFrames:
    def test_initialize_tools_list_tools_call_byte_identical(self, stdio_server):
        for name in ("initialize", "tools_list", "tools_call"):
            request_line = fixture_line(f"{name}.request.json")
            frame_id = load_fixture(f"{name}.request.json")["id"]
            stdio_server.send(request_line)
            _, response = stdio_server.wait_for_id(frame_id, timeout=30.0)
            assert response == fixture_line(f"{name}.response.json"), name

    def test_unknown_method_error_frame(self, stdio_server):
        stdio_server.send(fixture_line("unknown_method.request.json"))
        _, response = stdio_server.wait_for_id(4)
        assert response == fixture_line("unknown_method.response.json")

    def test_parse_error_on_garbage_line(self, stdio_server):
        stdio_server.send("{this is not json")
        _, response = stdio_server.wait_for(lambda line: str(PARSE_ERROR) in line)
        frame = json.loads(response)
        assert frame["error"]["code"] == PARSE_ERROR
        assert frame["id"] is None


class TestWorkerLifecycle:
    def test_worker_timeout_kills_process(self, tmp_path):
        scenario = tmp_path / "hang.json"
        scenario.write_text(json.dumps({"attempts": [{"hang": True}]}), encoding="utf-8")
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "llm_backend": "mock",
                    "llm_mock_script": str(FIXTURES / "golden_llm_script.json"),
                    "executor_backend": "mock",
                    "mock_executor_scenario": str(scenario),
                    "rag_mode": "none",
                    "planner": False,
                    "validator": False,
                    "feedback": False,
                    "exec_timeout_ms": 60_000,
                }
            ),
            encoding="utf-8",
        )
        pool = WorkerPool(limit=2, budget_ms=2_000, config_path=str(config))
        started = time.monotonic()
        handle = pool.run_task("hang forever", "none", "mock")
        elapsed = time.monotonic() - started
        assert handle.state == "failed"
        assert handle.error == "worker timeout"
        assert elapsed < 15
        assert pool.active_count() == 0

    def test_worker_crash_reports_failure(self, tmp_path):
        # a config the worker cannot load -> nonzero exit, no sentinel
        config = tmp_path / "config.json"
        config.write_text('{"llm_backend": "definitely-not-real"}', encoding="utf-8")
        pool = WorkerPool(limit=2, budget_ms=30_000, config_path=str(config))
        handle = pool.run_task("x", "none", "mock")
        assert handle.state == "failed"
        assert "sentinel" in handle.error

    def test_busy_error_raised_at_limit(self):
        pool = WorkerPool(limit=0, budget_ms=1_000)
        with pytest.raises(BusyError):
            pool.run_task("x", "none", "mock")


def test_result_packet_from_agent_result():
    from gridscribe.agent import AgentEvent, AgentResult

    result = AgentResult(
        status="success",
        final_code="x = 1;",
        iterations_used=1,
        warnings=["w"],
        event_log=[
            AgentEvent(1, "plan", {"origin": "fallback", "subrequests": [{}]}, 0.0),
            AgentEvent(2, "done", {"status": "success", "iterations": 1}, 0.0),
        ],
    )
    packet = result_packet(result)
    assert packet.status == "success"
    assert packet.debug_log == [
        "plan: fallback (1 subrequests)",
        "done: success after 1 iteration(s)",
    ]
    assert json.loads(packet.to_json_line())["warnings"] == ["w"]
    assert "\n" not in packet.to_json_line()
