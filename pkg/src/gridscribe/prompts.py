"""Prompt construction and completion post-processing.

The system prompt stacks three layers inside a single system message:
role constraints, retrieved knowledge, then the task (few-shot pairs and
the user request). Feedback rounds and the validator get their own
bundles. All builders are pure; prompt wording lives in data assets.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from string import Template
from typing import TYPE_CHECKING

from . import assets
from .errors import EmptyOutputError
from .llm import ChatMessage

if TYPE_CHECKING:
    from .retrieval import KnowledgeContext

NO_CONTEXT_LINE = "No retrieved context."

_FENCE_BLOCK_RE = re.compile(r"```[ \t]*[A-Za-z0-9_+-]*[ \t]*\r?\n?(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class PromptBundle:
    """Messages ready for the completion backend, plus layer offsets into
    ``rendered()`` kept for auditability."""

    messages: tuple[ChatMessage, ...]
    layer_spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    def rendered(self) -> str:
        return "\n\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ErrorReport:
    """Everything a feedback round needs to rewrite a failed script."""

    user_request: str
    failed_code: str
    error_text: str
    precheck_hints: tuple[str, ...] = ()
    context: "KnowledgeContext | None" = None
    iteration: int = 1

    def __post_init__(self) -> None:
        if not self.error_text:
            raise ValueError("error report needs a non-empty error_text")
        if self.iteration < 1:
            raise ValueError("iteration is 1-based")


def default_fewshots() -> list[tuple[str, str]]:
    return [(e["request"], e["script"]) for e in assets.read_json("fewshots.json")]


def _knowledge_block(context: "KnowledgeContext | None") -> str:
    if context is None or not context.fragments:
        return NO_CONTEXT_LINE
    parts = ["Retrieved context:"]
    for label, text in context.fragments:
        parts.append(f"[{label}]\n{text}")
    return "\n\n".join(parts)


def build_system_prompt(
    context: "KnowledgeContext | None",
    request: str,
    fewshots: list[tuple[str, str]] | None = None,
) -> PromptBundle:
    """Assemble the role -> knowledge -> task system prompt."""
    if not request.strip():
        raise ValueError("request must be non-empty")
    role = assets.read_text("role_layer.txt").strip()
    knowledge = _knowledge_block(context)

    task_parts = []
    if fewshots:
        shots = [f"Request: {req}\n```matlab\n{script}\n```" for req, script in fewshots]
        task_parts.append("Examples:\n\n" + "\n\n".join(shots))
    task_parts.append(f"Request: {request}")
    task = "\n\n".join(task_parts)

    system = f"{role}\n\n{knowledge}\n\n{task}"
    spans = {
        "role": (0, len(role)),
        "knowledge": (len(role) + 2, len(role) + 2 + len(knowledge)),
        "task": (len(system) - len(task), len(system)),
    }
    return PromptBundle(
        messages=(ChatMessage("system", system), ChatMessage("user", request)),
        layer_spans=spans,
    )


def build_feedback_prompt(report: ErrorReport, n_threshold: int = 5) -> PromptBundle:
    """Prompt for a correction round: request, failed code, error, hints,
    context, in that order, with a full-rewrite instruction."""
    hints_section = ""
    if report.precheck_hints:
        hints_section = "\nPre-check hints:\n" + "\n".join(
            f"- {h}" for h in report.precheck_hints
        ) + "\n"
    context_section = ""
    if report.context is not None and report.context.fragments:
        context_section = "\n" + _knowledge_block(report.context) + "\n"

    body = Template(assets.read_text("feedback_template.txt")).substitute(
        attempt=report.iteration + 1,
        total=n_threshold,
        request=report.user_request,
        failed_code=report.failed_code,
        error_text=report.error_text,
        hints_section=hints_section,
        context_section=context_section,
    ).rstrip() + "\n"

    role = assets.read_text("role_layer.txt").strip()
    rendered_prefix = role + "\n\n"
    spans = {
        "role": (0, len(role)),
        "task": (len(rendered_prefix), len(rendered_prefix) + len(body)),
    }
    if context_section:
        offset = rendered_prefix + body
        start = offset.index("Retrieved context:")
        spans["knowledge"] = (start, len(rendered_prefix) + len(body))
    return PromptBundle(
        messages=(ChatMessage("system", role), ChatMessage("user", body)),
        layer_spans=spans,
    )


def build_validator_prompt(request: str, final_code: str) -> PromptBundle:
    if not request.strip() or not final_code.strip():
        raise ValueError("request and final_code must be non-empty")
    system = assets.read_text("validator_prompt.txt").strip()
    user = (
        f"User request:\n{request}\n\n"
        f"Final script:\n```matlab\n{final_code}\n```\n\n"
        "Return the verdict JSON now."
    )
    rendered_len = len(system) + 2 + len(user)
    spans = {"role": (0, len(system)), "task": (len(system) + 2, rendered_len)}
    return PromptBundle(
        messages=(ChatMessage("system", system), ChatMessage("user", user)),
        layer_spans=spans,
    )


def extract_code(completion_text: str) -> str:
    """Pull the script out of a completion.

    Returns the contents of the first fenced code block; without a fence
    the whole text is returned trimmed. Never returns fence markers.
    """
    m = _FENCE_BLOCK_RE.search(completion_text)
    if m:
        code = m.group(1)
    elif "```" in completion_text:
        # unterminated fence: everything after the fence header line
        after = completion_text.split("```", 1)[1]
        after = after.split("\n", 1)[1] if "\n" in after else ""
        code = after.replace("```", "")
    else:
        code = completion_text
    code = code.strip()
    if not code:
        raise EmptyOutputError("completion contained no code")
    return code


def extract_json_object(text: str):
    """First JSON object embedded anywhere in the text, or None."""
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch == "{":
            try:
                obj, _ = decoder.raw_decode(text[i:])
            except json.JSONDecodeError:
                continue
            if isinstance(obj, dict):
                return obj
    return None
