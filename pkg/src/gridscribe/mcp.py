"""MCP tool server: JSON-RPC 2.0 over stdio with asynchronous workers.

Each tools/call forks an independent worker process running the agent
CLI; the worker appends a sentinel-framed one-line JSON result packet to
its output stream, which the server recovers even when the stream is
polluted by interpreter logs. Frames are dispatched on their own threads
so a hanging simulation never delays tools/list.
"""

from __future__ import annotations

import json
import logging
import sys
import threading
from dataclasses import dataclass, field
from typing import Iterable

from . import __version__
from .agent import AgentResult
from .errors import BusyError, MalformedPacketError, NoResultError, SpawnError
from .retrieval import RetrievalMode

# subprocess/os/signal are imported lazily inside WorkerPool so that worker
# processes (which import this module only for the sentinel) start faster

logger = logging.getLogger(__name__)

SENTINEL = "@@GRIDSCRIBE_RESULT@@ "

PROTOCOL_VERSION = "2024-11-05"
TOOL_NAME = "run_matpower_task"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
SERVER_BUSY = -32000

WORKER_RUNNING = "running"
WORKER_FINISHED = "finished"
WORKER_FAILED = "failed"


@dataclass
class ResultPacket:
    """The worker's structured result: one JSON object on one line."""

    final_code: str = ""
    status: str = "failure"
    iterations: int = 0
    debug_log: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_code": self.final_code,
            "status": self.status,
            "iterations": self.iterations,
            "debug_log": list(self.debug_log),
            "warnings": list(self.warnings),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def debug_log_lines(result: AgentResult) -> list[str]:
    """Timing-free one-line renderings of the event log (deterministic
    for scripted runs, so packets can be byte-compared in tests)."""
    lines = []
    for event in result.event_log:
        p = event.payload
        phase = event.phase
        if phase == "plan":
            lines.append(f"plan: {p.get('origin')} ({len(p.get('subrequests', []))} subrequests)")
        elif phase == "retrieve":
            lines.append(
                f"retrieve: {p.get('mode')} ({len(p.get('fragments', []))} fragments, "
                f"{p.get('total_chars', 0)} chars)"
            )
        elif phase == "generate":
            lines.append(f"generate[{p.get('attempt')}]: {len(p.get('code', ''))} chars")
        elif phase == "precheck":
            lines.append(f"precheck[{p.get('attempt')}]: {len(p.get('findings', []))} findings")
        elif phase == "execute":
            lines.append(f"execute[{p.get('attempt')}]: {p.get('status')}")
        elif phase == "validate":
            lines.append(f"validate[{p.get('attempt')}]: {p.get('severity')}")
        elif phase == "feedback":
            first = str(p.get("error_text", "")).splitlines()
            lines.append(f"feedback[{p.get('attempt')}]: {first[0][:80] if first else ''}")
        elif phase == "done":
            lines.append(f"done: {p.get('status')} after {p.get('iterations')} iteration(s)")
    return lines


def result_packet(result: AgentResult) -> ResultPacket:
    return ResultPacket(
        final_code=result.final_code,
        status=result.status,
        iterations=result.iterations_used,
        debug_log=debug_log_lines(result),
        warnings=list(result.warnings),
    )


def parse_sentinel_stream(lines: Iterable[str]) -> tuple[ResultPacket, list[str]]:
    """Recover the result packet from a log-polluted output stream.

    Returns (packet, worker_log). When several sentinel lines exist the
    last wins; raises NoResultError without any sentinel and
    MalformedPacketError when the winning payload is not a valid packet.
    """
    log: list[str] = []
    payload: str | None = None
    for line in lines:
        line = line.rstrip("\n")
        if line.startswith(SENTINEL):
            payload = line[len(SENTINEL):]
        else:
            log.append(line)
    if payload is None:
        raise NoResultError("stream ended without a sentinel line")
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedPacketError(f"sentinel payload is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "status" not in data:
        raise MalformedPacketError("sentinel payload is not a result packet")
    packet = ResultPacket(
        final_code=str(data.get("final_code", "")),
        status=str(data["status"]),
        iterations=int(data.get("iterations", 0)),
        debug_log=[str(x) for x in data.get("debug_log", [])],
        warnings=[str(x) for x in data.get("warnings", [])],
    )
    return packet, log


@dataclass
class WorkerHandle:
    worker_id: int
    state: str = WORKER_RUNNING
    packet: ResultPacket | None = None
    log: list[str] = field(default_factory=list)
    error: str = ""


class WorkerPool:
    """Spawns agent-CLI worker processes, bounded by a concurrency limit."""

    def __init__(self, limit: int = 4, budget_ms: int = 300_000, config_path: str | None = None):
        self.limit = limit
        self.budget_ms = budget_ms
        self.config_path = config_path
        self._active = 0
        self._next_id = 0
        self._lock = threading.Lock()

    def active_count(self) -> int:
        with self._lock:
            return self._active

    def worker_command(self, request: str, rag_mode: str, backend: str) -> list[str]:
        cmd = [
            sys.executable,
            "-m",
            "gridscribe",
            "run",
            "--request",
            request,
            "--rag-mode",
            rag_mode,
            "--backend",
            backend,
            "--emit-result-packet",
        ]
        if self.config_path:
            cmd += ["--config", self.config_path]
        return cmd

    def run_task(self, request: str, rag_mode: str, backend: str) -> WorkerHandle:
        """Run one worker to completion; raises BusyError over the limit."""
        import os
        import signal
        import subprocess

        with self._lock:
            if self._active >= self.limit:
                raise BusyError(f"worker limit {self.limit} reached")
            self._active += 1
            self._next_id += 1
            handle = WorkerHandle(worker_id=self._next_id)
        try:
            cmd = self.worker_command(request, rag_mode, backend)
            try:
                proc = subprocess.Popen(
                    cmd,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    start_new_session=True,
                )
            except OSError as exc:
                raise SpawnError(f"failed to spawn worker: {exc}") from exc
            try:
                stdout, stderr = proc.communicate(timeout=self.budget_ms / 1000.0)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                proc.communicate()
                handle.state = WORKER_FAILED
                handle.error = "worker timeout"
                return handle
            try:
                packet, log = parse_sentinel_stream(stdout.splitlines())
            except (NoResultError, MalformedPacketError) as exc:
                handle.state = WORKER_FAILED
                handle.error = f"{exc} (exit code {proc.returncode}; stderr: {stderr[-400:]})"
                return handle
            handle.state = WORKER_FINISHED
            handle.packet = packet
            handle.log = log
            return handle
        finally:
            with self._lock:
                self._active -= 1


def _response(frame_id, result=None, error=None) -> dict:
    if error is not None:
        return {"jsonrpc": "2.0", "id": frame_id, "error": error}
    return {"jsonrpc": "2.0", "id": frame_id, "result": result}


def _error(code: int, message: str) -> dict:
    return {"code": code, "message": message}


def tool_listing() -> dict:
    mode_values = [m.value for m in RetrievalMode] + ["ocr", "pdf", "enhanced"]
    return {
        "tools": [
            {
                "name": TOOL_NAME,
                "description": (
                    "Turn a natural-language power-grid analysis request into an "
                    "executed MATPOWER script via the self-correcting agent."
                ),
                "inputSchema": {
                    "type": "object",
                    "properties": {
                        "request": {
                            "type": "string",
                            "description": "natural-language analysis request",
                        },
                        "rag_mode": {
                            "type": "string",
                            "enum": sorted(set(mode_values)),
                            "description": "retrieval mode override",
                        },
                        "backend": {
                            "type": "string",
                            "enum": ["mock", "octave"],
                            "description": "execution backend override",
                        },
                    },
                    "required": ["request"],
                },
            }
        ]
    }


class McpServer:
    """Newline-delimited JSON-RPC dispatcher over a pair of streams."""

    def __init__(
        self,
        config: dict | None = None,
        config_path: str | None = None,
        in_stream=None,
        out_stream=None,
    ):
        from .config import DEFAULTS

        self.config = dict(DEFAULTS, **(config or {}))
        self.pool = WorkerPool(
            limit=int(self.config.get("mcp_worker_limit", 4)),
            budget_ms=int(self.config.get("mcp_worker_budget_ms", 300_000)),
            config_path=config_path,
        )
        self._in = in_stream if in_stream is not None else sys.stdin
        self._out = out_stream if out_stream is not None else sys.stdout
        self._write_lock = threading.Lock()

    # -- frame handling ------------------------------------------------

    def handle_frame(self, frame) -> dict | None:
        """Response object for one decoded frame; None for notifications."""
        if not isinstance(frame, dict) or frame.get("jsonrpc") != "2.0" or "method" not in frame:
            return _response(
                frame.get("id") if isinstance(frame, dict) else None,
                error=_error(INVALID_REQUEST, "not a JSON-RPC 2.0 request"),
            )
        method = frame["method"]
        frame_id = frame.get("id")
        is_notification = "id" not in frame
        params = frame.get("params") or {}

        if method == "initialize":
            result = {
                "protocolVersion": params.get("protocolVersion", PROTOCOL_VERSION),
                "capabilities": {"tools": {}},
                "serverInfo": {"name": "gridscribe", "version": __version__},
            }
            return None if is_notification else _response(frame_id, result=result)
        if method.startswith("notifications/"):
            return None
        if method == "tools/list":
            return None if is_notification else _response(frame_id, result=tool_listing())
        if method == "tools/call":
            if is_notification:
                return None
            return self._handle_tools_call(frame_id, params)
        if is_notification:
            return None
        return _response(frame_id, error=_error(METHOD_NOT_FOUND, f"unknown method {method!r}"))

    def _handle_tools_call(self, frame_id, params) -> dict:
        name = params.get("name")
        if name != TOOL_NAME:
            return _response(frame_id, error=_error(INVALID_PARAMS, f"unknown tool {name!r}"))
        arguments = params.get("arguments")
        if not isinstance(arguments, dict):
            return _response(frame_id, error=_error(INVALID_PARAMS, "missing arguments object"))
        request = arguments.get("request")
        if not isinstance(request, str) or not request.strip():
            return _response(
                frame_id, error=_error(INVALID_PARAMS, "'request' must be a non-empty string")
            )
        rag_mode = arguments.get("rag_mode", self.config.get("rag_mode", "none"))
        backend = arguments.get("backend", self.config.get("executor_backend", "mock"))
        try:
            RetrievalMode.from_cli(str(rag_mode))
        except ValueError as exc:
            return _response(frame_id, error=_error(INVALID_PARAMS, str(exc)))
        if backend not in ("mock", "octave"):
            return _response(frame_id, error=_error(INVALID_PARAMS, f"unknown backend {backend!r}"))

        try:
            handle = self.pool.run_task(request.strip(), str(rag_mode), str(backend))
        except BusyError as exc:
            return _response(frame_id, error=_error(SERVER_BUSY, str(exc)))
        except SpawnError as exc:
            return _response(
                frame_id,
                result={"content": [{"type": "text", "text": str(exc)}], "isError": True},
            )
        if handle.state == WORKER_FAILED:
            return _response(
                frame_id,
                result={
                    "content": [{"type": "text", "text": f"worker failed: {handle.error}"}],
                    "isError": True,
                },
            )
        assert handle.packet is not None
        return _response(
            frame_id,
            result={
                "content": [{"type": "text", "text": handle.packet.to_json_line()}],
                "isError": False,
            },
        )

    # -- stream loop ----------------------------------------------------

    def _write(self, obj: dict) -> None:
        line = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        with self._write_lock:
            self._out.write(line + "\n")
            self._out.flush()

    def _dispatch(self, raw_line: str) -> None:
        try:
            frame = json.loads(raw_line)
        except json.JSONDecodeError as exc:
            self._write(_response(None, error=_error(PARSE_ERROR, f"parse error: {exc}")))
            return
        response = self.handle_frame(frame)
        if response is not None:
            self._write(response)

    def serve_forever(self) -> None:
        """Read frames until EOF, dispatching each on its own thread so a
        slow tools/call never delays other responses."""
        threads = []
        for line in self._in:
            if not line.strip():
                continue
            t = threading.Thread(target=self._dispatch, args=(line,), daemon=True)
            t.start()
            threads.append(t)
        for t in threads:
            t.join(timeout=self.pool.budget_ms / 1000.0 + 5)
