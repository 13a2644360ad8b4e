"""The generate-execute-correct loop.

One run: plan -> retrieve -> (generate -> precheck -> execute ->
validate)* with correction rounds bounded by the iteration threshold.
Structured progress events stream to an optional consumer and are
retained in the result for audit and the UI timeline.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import ConfigError, EmptyOutputError, EmptyRequestError
from .executor import SUCCESS, TIMEOUT, ExecutionReport, execute
from .llm import GENERATION_TEMPERATURE, complete
from .precheck import ConventionCatalog, precheck
from .prompts import (
    ErrorReport,
    build_feedback_prompt,
    build_system_prompt,
    default_fewshots,
    extract_code,
)
from .retrieval import (
    DEFAULT_CONTEXT_BUDGET,
    DEFAULT_K,
    KnowledgeContext,
    QueryPlan,
    RetrievalMode,
    RetrievalStores,
    fallback_plan,
    plan_query,
    retrieve_context,
)
from .validator import SEVERITY_CRITICAL, SEVERITY_MINOR, ValidationVerdict, validate

logger = logging.getLogger(__name__)

DEFAULT_N_THRESHOLD = 5

PHASE_PLAN = "plan"
PHASE_RETRIEVE = "retrieve"
PHASE_GENERATE = "generate"
PHASE_PRECHECK = "precheck"
PHASE_EXECUTE = "execute"
PHASE_VALIDATE = "validate"
PHASE_FEEDBACK = "feedback"
PHASE_DONE = "done"

STATUS_SUCCESS = "success"
STATUS_FAILURE = "failure"


@dataclass(frozen=True)
class AgentConfig:
    """Run-shaping switches; the four booleans map onto the ablation matrix."""

    rag_mode: RetrievalMode = RetrievalMode.NONE
    feedback_enabled: bool = True
    planner_enabled: bool = True
    validator_enabled: bool = True
    n_threshold: int = DEFAULT_N_THRESHOLD
    k: int = DEFAULT_K
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    exec_timeout_ms: int = 120_000

    def __post_init__(self) -> None:
        if self.n_threshold < 1:
            raise ConfigError("n_threshold must be >= 1")


@dataclass
class AgentDeps:
    """Collaborators resolved by the caller: completion backend, executor
    backend, optional retrieval stores, optional separate validator LLM."""

    llm: object
    executor: object
    stores: RetrievalStores | None = None
    fewshots: list[tuple[str, str]] | None = None
    validator_llm: object | None = None
    catalog: ConventionCatalog | None = None


@dataclass(frozen=True)
class AgentEvent:
    seq: int
    phase: str
    payload: dict
    ts: float

    def to_dict(self) -> dict:
        return {"seq": self.seq, "phase": self.phase, "payload": self.payload, "ts": self.ts}


@dataclass
class AgentResult:
    status: str
    final_code: str
    iterations_used: int
    warnings: list[str] = field(default_factory=list)
    event_log: list[AgentEvent] = field(default_factory=list)
    last_error: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "final_code": self.final_code,
            "iterations_used": self.iterations_used,
            "warnings": list(self.warnings),
            "last_error": self.last_error,
            "event_log": [e.to_dict() for e in self.event_log],
        }


@dataclass
class _Attempt:
    index: int
    code: str = ""
    hints: tuple[str, ...] = ()
    exec_report: ExecutionReport | None = None
    verdict: ValidationVerdict | None = None


def _failure_text(attempt: _Attempt) -> str:
    if attempt.verdict is not None and attempt.verdict.severity == SEVERITY_CRITICAL:
        return "SEMANTIC: " + "; ".join(attempt.verdict.issues)
    if attempt.exec_report is not None:
        return attempt.exec_report.error_text
    return "LLM returned no usable code"


def build_error_report(
    attempt: _Attempt, request: str, context: KnowledgeContext | None
) -> ErrorReport:
    """Error report for the next feedback round, from a failed attempt."""
    return ErrorReport(
        user_request=request,
        failed_code=attempt.code,
        error_text=_failure_text(attempt),
        precheck_hints=attempt.hints,
        context=context,
        iteration=attempt.index,
    )


def _check_config(config: AgentConfig, deps: AgentDeps) -> None:
    mode = config.rag_mode
    stores = deps.stores
    if mode == RetrievalMode.OCR_KEYWORD and (stores is None or stores.section_index is None):
        raise ConfigError("ocr_keyword mode configured without a section index")
    if mode == RetrievalMode.PDF_VECTOR and (
        stores is None or stores.pdf_index is None or stores.embedder is None
    ):
        raise ConfigError("pdf_vector mode configured without an index/embedder")
    if mode == RetrievalMode.ENHANCED_VECTOR and (
        stores is None or stores.enhanced_index is None or stores.embedder is None
    ):
        raise ConfigError("enhanced_vector mode configured without an index/embedder")


def run_agent(request: str, config: AgentConfig, deps: AgentDeps, on_event=None) -> AgentResult:
    """Drive one full agent session and return the structured result.

    Events are delivered to ``on_event`` synchronously in seq order, so a
    slow consumer naturally backpressures the loop.
    """
    if not request.strip():
        raise EmptyRequestError("request is empty")
    _check_config(config, deps)
    request = request.strip()

    events: list[AgentEvent] = []

    def emit(phase: str, payload: dict) -> None:
        event = AgentEvent(seq=len(events) + 1, phase=phase, payload=payload, ts=time.time())
        events.append(event)
        if on_event is not None:
            on_event(event)

    if config.planner_enabled:
        plan = plan_query(request, deps.llm)
    else:
        plan = fallback_plan(request)
    emit(PHASE_PLAN, {
        "origin": plan.origin if config.planner_enabled else "fallback (planner disabled)",
        "subrequests": [{"text": s.text, "keywords": list(s.keywords)} for s in plan.subrequests],
    })

    context = retrieve_context(
        plan, config.rag_mode, deps.stores, k=config.k, budget=config.context_budget
    )
    emit(PHASE_RETRIEVE, {
        "mode": config.rag_mode.value,
        "k": config.k,
        "total_chars": context.total_chars,
        "fragments": [{"label": label, "text": text} for label, text in context.fragments],
    })

    fewshots = deps.fewshots if deps.fewshots is not None else default_fewshots()
    catalog = deps.catalog or ConventionCatalog.bundled()
    validator_llm = deps.validator_llm or deps.llm

    warnings: list[str] = []
    report: ErrorReport | None = None
    final: _Attempt | None = None
    succeeded = False

    for i in range(1, config.n_threshold + 1):
        attempt = _Attempt(index=i)
        final = attempt
        if report is None:
            bundle = build_system_prompt(context, request, fewshots)
        else:
            bundle = build_feedback_prompt(report, config.n_threshold)
        completion = complete(
            deps.llm, list(bundle.messages), temperature=GENERATION_TEMPERATURE
        )
        try:
            attempt.code = extract_code(completion.text)
        except EmptyOutputError:
            attempt.code = ""
        emit(PHASE_GENERATE, {"attempt": i, "code": attempt.code})

        if attempt.code:
            pre = precheck(attempt.code, catalog)
            attempt.code = pre.corrected_code
            attempt.hints = pre.hints
            emit(PHASE_PRECHECK, {
                "attempt": i,
                "findings": [
                    {"kind": f.kind, "line": f.line, "message": f.message,
                     "before": f.before, "after": f.after}
                    for f in pre.findings
                ],
            })

            attempt.exec_report = execute(deps.executor, attempt.code, config.exec_timeout_ms)
            emit(PHASE_EXECUTE, {
                "attempt": i,
                "status": attempt.exec_report.status,
                "stdout": attempt.exec_report.stdout,
                "stderr": attempt.exec_report.stderr,
                "error_text": attempt.exec_report.error_text,
                "warnings": list(attempt.exec_report.warnings),
                "duration_ms": attempt.exec_report.duration_ms,
            })

            if attempt.exec_report.status == SUCCESS:
                if config.validator_enabled:
                    attempt.verdict = validate(
                        request, attempt.code, attempt.exec_report, validator_llm
                    )
                    emit(PHASE_VALIDATE, {
                        "attempt": i,
                        "severity": attempt.verdict.severity,
                        "issues": list(attempt.verdict.issues),
                    })
                    if attempt.verdict.severity == SEVERITY_MINOR:
                        warnings.extend(attempt.verdict.issues)
                    if attempt.verdict.severity != SEVERITY_CRITICAL:
                        succeeded = True
                        break
                else:
                    succeeded = True
                    break

        # attempt failed (runtime error, timeout, critical verdict, or no code)
        if config.feedback_enabled and i < config.n_threshold:
            report = build_error_report(attempt, request, context)
            emit(PHASE_FEEDBACK, {
                "attempt": i,
                "error_text": report.error_text,
                "hints": list(report.precheck_hints),
            })
        else:
            break

    assert final is not None
    n = final.index
    if succeeded:
        result = AgentResult(
            status=STATUS_SUCCESS,
            final_code=final.code,
            iterations_used=n,
            warnings=warnings,
            event_log=events,
        )
    else:
        result = AgentResult(
            status=STATUS_FAILURE,
            final_code=final.code,
            iterations_used=n,
            warnings=warnings,
            event_log=events,
            last_error=_failure_text(final),
        )
    emit(PHASE_DONE, {
        "status": result.status,
        "iterations": n,
        "warnings": list(warnings),
    })
    return result
