"""Post-execution semantic check of the final script against the request.

An independent LLM pass grades the match as none/minor/critical. Parsing
is total: anything that does not match the verdict schema degrades to a
minor verdict with an "unparsable" issue, so a brittle validator can
never wedge the correction loop.
"""

from __future__ import annotations

from dataclasses import dataclass

from .executor import ExecutionReport, SUCCESS
from .llm import VALIDATION_TEMPERATURE, complete
from .prompts import build_validator_prompt, extract_json_object

SEVERITY_NONE = "none"
SEVERITY_MINOR = "minor"
SEVERITY_CRITICAL = "critical"

SEVERITIES = (SEVERITY_NONE, SEVERITY_MINOR, SEVERITY_CRITICAL)

UNPARSABLE_ISSUE = "validator output unparsable"


@dataclass(frozen=True)
class ValidationVerdict:
    severity: str
    issues: tuple[str, ...]
    raw_text: str = ""

    @property
    def passed(self) -> bool:
        return self.severity != SEVERITY_CRITICAL


def parse_verdict(text: str) -> ValidationVerdict:
    """Total parser: first JSON object in the text, schema-checked.

    Severity casing is normalized; missing fields, unknown severities, and
    non-none verdicts without issues all fall back to minor + unparsable.
    """
    data = extract_json_object(text)
    if data is None:
        return ValidationVerdict(SEVERITY_MINOR, (UNPARSABLE_ISSUE,), raw_text=text)
    severity = data.get("severity")
    if not isinstance(severity, str) or severity.strip().lower() not in SEVERITIES:
        return ValidationVerdict(SEVERITY_MINOR, (UNPARSABLE_ISSUE,), raw_text=text)
    severity = severity.strip().lower()
    raw_issues = data.get("issues", [])
    if not isinstance(raw_issues, list) or any(not isinstance(i, str) for i in raw_issues):
        return ValidationVerdict(SEVERITY_MINOR, (UNPARSABLE_ISSUE,), raw_text=text)
    issues = tuple(i.strip() for i in raw_issues if i.strip())
    if severity != SEVERITY_NONE and not issues:
        return ValidationVerdict(SEVERITY_MINOR, (UNPARSABLE_ISSUE,), raw_text=text)
    return ValidationVerdict(severity, issues, raw_text=text)


def validate(request: str, final_code: str, exec_report: ExecutionReport, llm) -> ValidationVerdict:
    """Run the validator LLM on executable code and parse its verdict.

    Uses temperature 0 and a fresh message history independent of the
    generation conversation.
    """
    if exec_report.status != SUCCESS:
        raise ValueError("validator runs only on successfully executed code")
    bundle = build_validator_prompt(request, final_code)
    result = complete(llm, list(bundle.messages), temperature=VALIDATION_TEMPERATURE)
    return parse_verdict(result.text)
