"""Tests for the generate-execute-correct loop."""

from __future__ import annotations

import pytest

from conftest import make_llm
from gridscribe.agent import (
    PHASE_DONE,
    PHASE_FEEDBACK,
    PHASE_GENERATE,
    PHASE_VALIDATE,
    AgentConfig,
    AgentDeps,
    run_agent,
)
from gridscribe.errors import ConfigError, EmptyRequestError
from gridscribe.executor import MockExecutorBackend
from gridscribe.retrieval import RetrievalMode

CODE_1 = "```matlab\nresults = rundcpf(mpc);\n```"
CODE_2 = "```matlab\nmpc = loadcase('case14');\nresults = rundcpf(mpc);\n```"
VERDICT_NONE = '{"severity": "none", "issues": []}'
VERDICT_MINOR = '{"severity": "minor", "issues": ["output format differs"]}'
VERDICT_CRITICAL = '{"severity": "critical", "issues": ["wrong case file"]}'


def executor_with(*statuses: str) -> MockExecutorBackend:
    attempts = []
    for i, status in enumerate(statuses, 1):
        spec = {"status": status}
        if status == "runtime_error":
            spec["error_text"] = f"error: scripted failure {i}"
        attempts.append(spec)
    return MockExecutorBackend({"attempts": attempts})


def base_config(**kwargs) -> AgentConfig:
    defaults = dict(rag_mode=RetrievalMode.NONE, planner_enabled=False, exec_timeout_ms=500)
    defaults.update(kwargs)
    return AgentConfig(**defaults)


def phases(result):
    return [e.phase for e in result.event_log]


class TestRecoveryLoop:
    def test_error_then_success(self):
        deps = AgentDeps(
            llm=make_llm(CODE_1, CODE_2, VERDICT_NONE),
            executor=executor_with("runtime_error", "success"),
        )
        result = run_agent("Run a DC power flow on case14", base_config(), deps)
        assert result.status == "success"
        assert result.iterations_used == 2
        assert result.final_code == "mpc = loadcase('case14');\nresults = rundcpf(mpc);"
        assert phases(result).count(PHASE_GENERATE) == 2
        assert phases(result).count(PHASE_FEEDBACK) == 1

    def test_threshold_exhaustion(self):
        deps = AgentDeps(
            llm=make_llm(*[CODE_1] * 5),
            executor=executor_with("runtime_error"),
        )
        result = run_agent("Run it", base_config(), deps)
        assert result.status == "failure"
        assert result.iterations_used == 5
        assert result.last_error == "error: scripted failure 1"
        assert phases(result).count(PHASE_GENERATE) == 5

    def test_single_pass_failure(self):
        deps = AgentDeps(llm=make_llm(CODE_1), executor=executor_with("runtime_error"))
        result = run_agent("Run it", base_config(feedback_enabled=False), deps)
        assert result.status == "failure"
        assert result.iterations_used == 1
        assert phases(result).count(PHASE_GENERATE) == 1
        assert PHASE_FEEDBACK not in phases(result)

    def test_critical_verdict_consumes_iteration(self):
        deps = AgentDeps(
            llm=make_llm(CODE_1, VERDICT_CRITICAL, CODE_2, VERDICT_NONE),
            executor=executor_with("success", "success"),
        )
        result = run_agent("Run it", base_config(), deps)
        assert result.status == "success"
        assert result.iterations_used == 2
        feedback = [e for e in result.event_log if e.phase == PHASE_FEEDBACK]
        assert feedback[0].payload["error_text"] == "SEMANTIC: wrong case file"

    def test_minor_verdict_passes_with_warnings(self):
        deps = AgentDeps(
            llm=make_llm(CODE_1, VERDICT_MINOR),
            executor=executor_with("success"),
        )
        result = run_agent("Run it", base_config(), deps)
        assert result.status == "success"
        assert result.warnings == ["output format differs"]

    def test_timeout_treated_as_failure_for_loop(self):
        deps = AgentDeps(
            llm=make_llm(CODE_1, CODE_2, VERDICT_NONE),
            executor=MockExecutorBackend(
                {"attempts": [{"hang": True}, {"status": "success"}]}
            ),
        )
        result = run_agent("Run it", base_config(exec_timeout_ms=50), deps)
        assert result.status == "success"
        assert result.iterations_used == 2
        feedback = [e for e in result.event_log if e.phase == PHASE_FEEDBACK]
        assert feedback[0].payload["error_text"] == "Execution timed out after 50 ms"


class TestAblationFlags:
    def test_validator_disabled_no_validate_events(self):
        deps = AgentDeps(llm=make_llm(CODE_1), executor=executor_with("success"))
        result = run_agent("Run it", base_config(validator_enabled=False), deps)
        assert result.status == "success"
        assert PHASE_VALIDATE not in phases(result)

    def test_planner_disabled_consumes_no_llm_call(self):
        # exactly generate + verdict responses are provided; a planner call
        # would exhaust the queue and fail the run
        deps = AgentDeps(
            llm=make_llm(CODE_1, VERDICT_NONE), executor=executor_with("success")
        )
        result = run_agent("Run it", base_config(planner_enabled=False), deps)
        assert result.status == "success"
        assert result.event_log[0].payload["origin"] == "fallback (planner disabled)"

    def test_planner_enabled_uses_llm_plan(self):
        plan = '{"subrequests": [{"text": "run dc pf", "keywords": ["rundcpf"]}]}'
        deps = AgentDeps(
            llm=make_llm(plan, CODE_1, VERDICT_NONE), executor=executor_with("success")
        )
        result = run_agent("Run it", base_config(planner_enabled=True), deps)
        assert result.status == "success"
        assert result.event_log[0].payload["origin"] == "llm"


class TestEventLog:
    def test_seq_gapless_single_done(self):
        deps = AgentDeps(
            llm=make_llm(CODE_1, CODE_2, VERDICT_NONE),
            executor=executor_with("runtime_error", "success"),
        )
        result = run_agent("Run it", base_config(), deps)
        seqs = [e.seq for e in result.event_log]
        assert seqs == list(range(1, len(seqs) + 1))
        assert phases(result).count(PHASE_DONE) == 1
        assert result.event_log[-1].phase == PHASE_DONE

    def test_n_matches_generate_count(self):
        deps = AgentDeps(
            llm=make_llm(*[CODE_1] * 3, VERDICT_NONE),
            executor=executor_with("runtime_error", "runtime_error", "success"),
        )
        result = run_agent("Run it", base_config(), deps)
        assert result.iterations_used == phases(result).count(PHASE_GENERATE) == 3

    def test_on_event_receives_ordered_events(self):
        seen = []
        deps = AgentDeps(llm=make_llm(CODE_1, VERDICT_NONE), executor=executor_with("success"))
        run_agent("Run it", base_config(), deps, on_event=seen.append)
        assert [e.seq for e in seen] == list(range(1, len(seen) + 1))
        assert seen[-1].phase == PHASE_DONE

    def test_precheck_hints_flow_into_feedback(self):
        code_with_unknown = "```matlab\nmpoption('xyzzy', 1);\nresults = runpf(mpc);\n```"
        deps = AgentDeps(
            llm=make_llm(code_with_unknown, CODE_2, VERDICT_NONE),
            executor=executor_with("runtime_error", "success"),
        )
        result = run_agent("Run it", base_config(), deps)
        feedback = [e for e in result.event_log if e.phase == PHASE_FEEDBACK]
        assert feedback[0].payload["hints"] == ["unknown option 'xyzzy'"]


class TestPreconditions:
    def test_empty_request(self):
        deps = AgentDeps(llm=make_llm("x"), executor=executor_with("success"))
        with pytest.raises(EmptyRequestError):
            run_agent("   ", base_config(), deps)

    def test_vector_mode_without_index(self):
        deps = AgentDeps(llm=make_llm("x"), executor=executor_with("success"))
        with pytest.raises(ConfigError):
            run_agent("Run it", base_config(rag_mode=RetrievalMode.ENHANCED_VECTOR), deps)

    def test_ocr_mode_without_sections(self):
        deps = AgentDeps(llm=make_llm("x"), executor=executor_with("success"))
        with pytest.raises(ConfigError):
            run_agent("Run it", base_config(rag_mode=RetrievalMode.OCR_KEYWORD), deps)

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            AgentConfig(n_threshold=0)


def test_empty_completion_counts_as_failed_attempt():
    deps = AgentDeps(
        llm=make_llm("   ", CODE_1, VERDICT_NONE),
        executor=executor_with("success"),
    )
    result = run_agent("Run it", base_config(), deps)
    assert result.status == "success"
    assert result.iterations_used == 2
    assert phases(result).count(PHASE_GENERATE) == 2
