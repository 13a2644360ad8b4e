"""Task benchmark: fidelity metrics, grading, and the configuration matrix runner.

Per-task fidelity combines the semantic score with how many correction
rounds were spent; the per-configuration aggregate is an RMS-style
accuracy percentage. Both are tiny closed-form formulas, implemented
with order-independent summation so permuting the task list can never
change the aggregate.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .agent import (
    DEFAULT_N_THRESHOLD,
    PHASE_VALIDATE,
    STATUS_FAILURE,
    AgentConfig,
    AgentResult,
    run_agent,
)
from .errors import ConfigError, DomainError
from .retrieval import RetrievalMode
from .validator import SEVERITY_CRITICAL, SEVERITY_MINOR, SEVERITY_NONE, ValidationVerdict

logger = logging.getLogger(__name__)

VALID_S = (1.0, 0.8, 0.0)

COMPLEXITY_EASY = "easy"
COMPLEXITY_HARD = "hard"


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    complexity: str
    request: str
    source: str = "authored"

    def __post_init__(self) -> None:
        if not self.request.strip():
            raise ValueError(f"task {self.task_id}: empty request")
        if self.complexity not in (COMPLEXITY_EASY, COMPLEXITY_HARD):
            raise ValueError(f"task {self.task_id}: complexity must be easy or hard")


@dataclass(frozen=True)
class ScoreRecord:
    task_id: str
    S: float
    n: int
    csgf: float


@dataclass
class BenchSummary:
    label: str
    records: list[ScoreRecord] = field(default_factory=list)
    gca_percent: float = 0.0
    mean_easy: float | None = None
    mean_hard: float | None = None
    k: int = 0
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "k": self.k,
            "gca_percent": self.gca_percent,
            "mean_easy": self.mean_easy,
            "mean_hard": self.mean_hard,
            "error": self.error,
            "records": [
                {"task_id": r.task_id, "S": r.S, "n": r.n, "csgf": r.csgf}
                for r in self.records
            ],
        }


def csgf(s: float, n: int, n_threshold: int = DEFAULT_N_THRESHOLD) -> float:
    """Per-task fidelity: semantic score discounted by iterations spent."""
    if n_threshold < 1:
        raise DomainError(f"n_threshold must be >= 1, got {n_threshold}")
    if s not in VALID_S:
        raise DomainError(f"semantic score must be one of {VALID_S}, got {s}")
    if not 1 <= n <= n_threshold:
        raise DomainError(f"n must be in [1, {n_threshold}], got {n}")
    return s * (n_threshold - (n - 1)) / n_threshold


def gca(scores) -> float:
    """RMS-style aggregate accuracy over per-task fidelity scores, as a
    percentage. 100 iff every score is 1; order of scores never matters."""
    scores = list(scores)
    if not scores:
        raise DomainError("gca needs at least one score")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"csgf values must lie in [0, 1], got {s}")
    mean_sq = math.fsum((1.0 - s) ** 2 for s in scores) / len(scores)
    return (1.0 - math.sqrt(mean_sq)) * 100.0


def grade_task(
    result: AgentResult,
    verdict: ValidationVerdict | None = None,
    override_s: float | None = None,
    n_threshold: int = DEFAULT_N_THRESHOLD,
    task_id: str = "",
) -> ScoreRecord:
    """Map an agent outcome to the semantic score and fidelity.

    Failure or a critical verdict scores 0, a minor verdict 0.8, a clean
    pass 1.0. A manual override (the recalibration escape hatch) always
    wins, including when the validator was disabled.
    """
    if override_s is not None:
        if override_s not in VALID_S:
            raise DomainError(f"override S must be one of {VALID_S}, got {override_s}")
        s = override_s
    elif result.status == STATUS_FAILURE:
        s = 0.0
    elif verdict is not None and verdict.severity == SEVERITY_CRITICAL:
        s = 0.0
    elif verdict is not None and verdict.severity == SEVERITY_MINOR:
        s = 0.8
    else:
        s = 1.0
    n = result.iterations_used
    return ScoreRecord(task_id=task_id, S=s, n=n, csgf=csgf(s, n, n_threshold))


def final_verdict(result: AgentResult) -> ValidationVerdict | None:
    """Verdict of the last validate event in the run, if any."""
    for event in reversed(result.event_log):
        if event.phase == PHASE_VALIDATE:
            return ValidationVerdict(
                severity=event.payload.get("severity", SEVERITY_NONE),
                issues=tuple(event.payload.get("issues", ())),
            )
    return None


def load_tasks(path: str | Path) -> list[TaskRecord]:
    tasks: list[TaskRecord] = []
    seen: set[str] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        record = TaskRecord(
            task_id=data["task_id"],
            complexity=data["complexity"],
            request=data["request"],
            source=data.get("source", "authored"),
        )
        if record.task_id in seen:
            raise ValueError(f"duplicate task_id {record.task_id}")
        seen.add(record.task_id)
        tasks.append(record)
    return tasks


def load_overrides(path: str | Path) -> dict[str, float]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k): float(v) for k, v in data.items()}


@dataclass(frozen=True)
class BenchConfigEntry:
    """One row of the configuration matrix."""

    label: str
    agent_config: AgentConfig
    overrides: dict[str, float] = field(default_factory=dict)


def load_matrix(path: str | Path) -> list[BenchConfigEntry]:
    p = Path(path)
    data = json.loads(p.read_text(encoding="utf-8"))
    entries = []
    for row in data["configurations"]:
        overrides: dict[str, float] = {}
        if row.get("overrides"):
            override_path = Path(row["overrides"])
            if not override_path.is_absolute():
                override_path = p.parent / override_path
            overrides = load_overrides(override_path)
        entries.append(
            BenchConfigEntry(
                label=row["label"],
                agent_config=AgentConfig(
                    rag_mode=RetrievalMode.from_cli(row.get("rag_mode", "none")),
                    feedback_enabled=bool(row.get("feedback", True)),
                    planner_enabled=bool(row.get("planner", True)),
                    validator_enabled=bool(row.get("validator", True)),
                    n_threshold=int(row.get("n_threshold", DEFAULT_N_THRESHOLD)),
                ),
                overrides=overrides,
            )
        )
    return entries


def _group_mean(records: list[ScoreRecord], tasks: dict[str, TaskRecord], group: str):
    values = [r.csgf for r in records if tasks[r.task_id].complexity == group]
    return (math.fsum(values) / len(values)) if values else None


def run_benchmark(
    tasks: list[TaskRecord],
    matrix: list[BenchConfigEntry],
    deps_factory,
    out_dir: str | Path | None = None,
) -> list[BenchSummary]:
    """Run every configuration over every task, each task in a fresh agent
    session, and aggregate fidelity per configuration.

    ``deps_factory(entry, task)`` must return fresh AgentDeps for one run.
    A configuration that cannot be satisfied is recorded as an error row
    without aborting the rest of the matrix.
    """
    by_id = {t.task_id: t for t in tasks}
    summaries: list[BenchSummary] = []
    for entry in matrix:
        summary = BenchSummary(label=entry.label)
        try:
            for task in tasks:
                deps = deps_factory(entry, task)
                result = run_agent(task.request, entry.agent_config, deps)
                record = grade_task(
                    result,
                    verdict=final_verdict(result),
                    override_s=entry.overrides.get(task.task_id),
                    n_threshold=entry.agent_config.n_threshold,
                    task_id=task.task_id,
                )
                summary.records.append(record)
        except ConfigError as exc:
            logger.warning("configuration %s failed: %s", entry.label, exc)
            summary.error = str(exc)
            summary.records.clear()
            summaries.append(summary)
            continue
        summary.k = len(summary.records)
        summary.gca_percent = gca([r.csgf for r in summary.records])
        summary.mean_easy = _group_mean(summary.records, by_id, COMPLEXITY_EASY)
        summary.mean_hard = _group_mean(summary.records, by_id, COMPLEXITY_HARD)
        summaries.append(summary)

    if out_dir is not None:
        write_reports(summaries, out_dir)
    return summaries


def format_table(summaries: list[BenchSummary]) -> str:
    """Plain-text accuracy table: GCA per configuration plus the per-group
    fidelity means (the shape of the paper-style bar charts)."""
    width = max([len("Configuration")] + [len(s.label) for s in summaries]) + 2
    lines = [
        f"{'Configuration':<{width}}{'GCA %':>8}  {'easy mean':>10}  {'hard mean':>10}  {'K':>3}",
        "-" * (width + 37),
    ]
    for s in summaries:
        if s.error:
            lines.append(f"{s.label:<{width}}{'ERROR':>8}  {s.error}")
            continue
        easy = f"{s.mean_easy:.3f}" if s.mean_easy is not None else "-"
        hard = f"{s.mean_hard:.3f}" if s.mean_hard is not None else "-"
        lines.append(
            f"{s.label:<{width}}{s.gca_percent:>8.2f}  {easy:>10}  {hard:>10}  {s.k:>3}"
        )
    return "\n".join(lines) + "\n"


def write_reports(summaries: list[BenchSummary], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in summaries:
        safe = s.label.lower().replace(" ", "_")
        (out / f"{safe}.json").write_text(
            json.dumps(s.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    (out / "summary.json").write_text(
        json.dumps([s.to_dict() for s in summaries], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out / "summary.txt").write_text(format_table(summaries), encoding="utf-8")
