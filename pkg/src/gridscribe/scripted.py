"""Deterministic scripted dependencies for offline benchmark runs.

A bench scenario file maps configuration label -> task_id -> a list of
rounds, each naming the executor outcome and (when the validator is on)
the verdict. From that, fresh mock LLM and executor backends are built
per task, with response queues sized by walking the same loop state
machine the agent follows, so a whole benchmark matrix replays exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .agent import AgentDeps
from .bench import BenchConfigEntry, TaskRecord
from .errors import ParseError
from .executor import MockExecutorBackend, RUNTIME_ERROR, SUCCESS, TIMEOUT
from .llm import MockChatBackend, MockScript
from .retrieval import RetrievalMode
from .validator import SEVERITY_CRITICAL, SEVERITY_NONE

_EXEC_STATUSES = (SUCCESS, RUNTIME_ERROR, TIMEOUT)


def load_scenario(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("bench scenario must be an object keyed by configuration label")
    return data


def _attempt_code(task_id: str, attempt: int) -> str:
    return (
        f"% scripted attempt {attempt} for {task_id}\n"
        f"mpc = loadcase('case14');\nresults = runpf(mpc);\ndisp(results.success);"
    )


def _plan_json(task: TaskRecord) -> str:
    return json.dumps(
        {"subrequests": [{"text": task.request, "keywords": []}]}, sort_keys=True
    )


def _walk_rounds(entry: BenchConfigEntry, rounds: list[dict], task: TaskRecord):
    """Replay the agent loop over the scripted rounds.

    Returns (llm_responses, executor_attempts); raises ParseError when the
    scenario cannot drive the configuration to a terminal state.
    """
    cfg = entry.agent_config
    responses: list[str] = []
    attempts: list[dict] = []
    if cfg.planner_enabled:
        responses.append(_plan_json(task))

    effective = rounds if cfg.feedback_enabled else rounds[:1]
    for i, rnd in enumerate(effective, start=1):
        exec_status = rnd.get("exec", SUCCESS)
        if exec_status not in _EXEC_STATUSES:
            raise ParseError(f"{entry.label}/{task.task_id}: bad exec status {exec_status!r}")
        responses.append(f"```matlab\n{_attempt_code(task.task_id, i)}\n```")
        attempt: dict = {"status": exec_status}
        if exec_status == RUNTIME_ERROR:
            attempt["error_text"] = f"error: scripted failure (attempt {i})"
        attempts.append(attempt)

        if exec_status == SUCCESS:
            if not cfg.validator_enabled:
                return responses, attempts
            severity = rnd.get("verdict", SEVERITY_NONE)
            issues = rnd.get("issues") or (
                [] if severity == SEVERITY_NONE else [f"scripted {severity} issue"]
            )
            responses.append(json.dumps({"severity": severity, "issues": issues}))
            if severity != SEVERITY_CRITICAL:
                return responses, attempts
        # failed round: loop continues only under feedback below the cap
        if not (cfg.feedback_enabled and i < cfg.n_threshold):
            return responses, attempts
    raise ParseError(
        f"{entry.label}/{task.task_id}: rounds end before the loop terminates"
    )


class ScriptedDepsFactory:
    """deps_factory for run_benchmark, driven by a scenario mapping."""

    def __init__(self, scenario: dict, stores=None):
        self.scenario = scenario
        self.stores = stores

    def __call__(self, entry: BenchConfigEntry, task: TaskRecord) -> AgentDeps:
        per_config = self.scenario.get(entry.label)
        if per_config is None:
            raise ParseError(f"scenario has no entry for configuration {entry.label!r}")
        spec = per_config.get(task.task_id)
        if spec is None or not isinstance(spec.get("rounds"), list) or not spec["rounds"]:
            raise ParseError(f"scenario {entry.label!r} has no rounds for task {task.task_id!r}")
        responses, attempts = _walk_rounds(entry, spec["rounds"], task)
        stores = self.stores
        if entry.agent_config.rag_mode == RetrievalMode.NONE:
            stores = None
        return AgentDeps(
            llm=MockChatBackend(MockScript.from_dict({"responses": responses})),
            executor=MockExecutorBackend({"attempts": attempts}),
            stores=stores,
        )


def build_sample_stores():
    """Retrieval stores over the bundled sample corpus (all three modes)."""
    from . import assets
    from .corpus import build_section_index, chunk_sliding, load_manifest, load_source, merge_enhanced
    from .embedding import HashingEmbedder
    from .retrieval import RetrievalStores
    from .vectorstore import build_index

    manifest = load_manifest(assets.asset_path("corpus_manifest.json"))
    md = None
    raw = None
    for path, kind in manifest.sources:
        doc = load_source(path, kind)
        if kind == "ocr_markdown" and md is None:
            md = doc
        elif kind == "raw_text" and raw is None:
            raw = doc
    if md is None or raw is None:
        raise ParseError("bundled corpus manifest must list one markdown and one raw source")
    embedder = HashingEmbedder()
    return RetrievalStores(
        section_index=build_section_index(md),
        pdf_index=build_index(chunk_sliding(raw, manifest.window, manifest.stride), embedder),
        enhanced_index=build_index(
            chunk_sliding(merge_enhanced(md, raw), manifest.window, manifest.stride), embedder
        ),
        embedder=embedder,
    )
