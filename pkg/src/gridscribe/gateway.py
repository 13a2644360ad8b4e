"""HTTP + server-sent-events gateway for the web UI.

POST /api/run starts an agent session in a background thread and returns
its id; GET /api/sessions/{id}/events streams the event timeline as SSE
(replaying from the first event for late subscribers); GET
/api/sessions/{id}/result returns the final result once done.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .agent import run_agent
from .config import DEFAULTS, build_agent_setup

logger = logging.getLogger(__name__)

RUNNING = "running"
DONE = "done"


class RunRequest(BaseModel):
    request: str
    rag_mode: str | None = None
    backend: str | None = None
    feedback: bool | None = None
    planner: bool | None = None
    validator: bool | None = None
    n_threshold: int | None = None


@dataclass
class Session:
    id: str
    request: str
    status: str = RUNNING
    events: list[dict] = field(default_factory=list)
    result: dict | None = None
    cond: threading.Condition = field(default_factory=threading.Condition)

    def push(self, event: dict) -> None:
        with self.cond:
            self.events.append(event)
            self.cond.notify_all()

    def finish(self, result: dict) -> None:
        with self.cond:
            self.result = result
            self.status = DONE
            self.cond.notify_all()


class SessionRegistry:
    def __init__(self) -> None:
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, request: str) -> Session:
        session = Session(id=uuid.uuid4().hex[:12], request=request)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)


def _run_session(session: Session, body: RunRequest, config: dict) -> None:
    try:
        agent_config, deps = build_agent_setup(
            config,
            rag_mode=body.rag_mode,
            backend=body.backend,
            feedback=body.feedback,
            planner=body.planner,
            validator=body.validator,
            n_threshold=body.n_threshold,
        )
        result = run_agent(
            session.request,
            agent_config,
            deps,
            on_event=lambda e: session.push(e.to_dict()),
        )
        session.finish(result.to_dict())
    except Exception as exc:  # surface setup/run errors as a terminal event
        logger.exception("session %s failed", session.id)
        seq = len(session.events) + 1
        session.push(
            {
                "seq": seq,
                "phase": "done",
                "payload": {"status": "failure", "error": str(exc)},
                "ts": time.time(),
            }
        )
        session.finish(
            {
                "status": "failure",
                "final_code": "",
                "iterations_used": 0,
                "warnings": [],
                "last_error": str(exc),
                "event_log": list(session.events),
            }
        )


def create_app(config: dict | None = None) -> FastAPI:
    cfg = dict(DEFAULTS, **(config or {}))
    app = FastAPI(title="gridscribe gateway")
    registry = SessionRegistry()
    app.state.registry = registry

    @app.post("/api/run")
    def start_run(body: RunRequest) -> dict:
        if not body.request.strip():
            raise HTTPException(status_code=400, detail="request must be non-empty")
        session = registry.create(body.request.strip())
        thread = threading.Thread(
            target=_run_session, args=(session, body, cfg), daemon=True
        )
        thread.start()
        return {"session_id": session.id}

    @app.get("/api/sessions/{session_id}/events")
    def stream_events(session_id: str) -> StreamingResponse:
        session = registry.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")

        def generate():
            sent = 0
            while True:
                with session.cond:
                    while sent >= len(session.events) and session.status == RUNNING:
                        session.cond.wait(timeout=0.5)
                    pending = session.events[sent:]
                for event in pending:
                    yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
                    sent += 1
                    if event.get("phase") == "done":
                        return
                with session.cond:
                    if session.status == DONE and sent >= len(session.events):
                        return

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/api/sessions/{session_id}/result")
    def get_result(session_id: str) -> dict:
        session = registry.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if session.status == RUNNING:
            raise HTTPException(status_code=409, detail="session still running")
        assert session.result is not None
        return session.result

    return app
