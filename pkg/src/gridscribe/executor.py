"""Script execution backends: a GNU Octave subprocess and a scripted mock.

Each call gets a fresh temporary working directory; timeouts kill the
whole child process tree. Warnings are lines starting with "warning:"
(case-insensitive), errors are detected from the exit code and lines
starting with "error:".
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import BackendUnavailableError, ParseError

# subprocess/shutil/tempfile are imported lazily: worker processes using the
# mock backend never pay for them, which keeps MCP worker spawn latency low

logger = logging.getLogger(__name__)

SUCCESS = "success"
RUNTIME_ERROR = "runtime_error"
TIMEOUT = "timeout"

DEFAULT_TIMEOUT_MS = 120_000
DEFAULT_POOL = 2


@dataclass(frozen=True)
class ExecutionReport:
    status: str
    stdout: str = ""
    stderr: str = ""
    error_text: str = ""
    warnings: tuple[str, ...] = ()
    duration_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.status == SUCCESS and self.error_text:
            raise ValueError("success reports must have empty error_text")
        if self.status != SUCCESS and not self.error_text:
            raise ValueError(f"{self.status} reports need a non-empty error_text")


def timeout_message(timeout_ms: int) -> str:
    return f"Execution timed out after {timeout_ms} ms"


def parse_warnings(*streams: str) -> tuple[str, ...]:
    warnings = []
    for stream in streams:
        for line in stream.splitlines():
            if line.lstrip().lower().startswith("warning:"):
                warnings.append(line.strip())
    return tuple(warnings)


def first_error_block(*streams: str) -> str:
    """First run of consecutive non-blank lines starting at an "error:" line."""
    for stream in streams:
        lines = stream.splitlines()
        for i, line in enumerate(lines):
            if line.lstrip().lower().startswith("error:"):
                block = [line.strip()]
                for follow in lines[i + 1 :]:
                    if not follow.strip():
                        break
                    block.append(follow.rstrip())
                return "\n".join(block)
    return ""


class MockExecutorBackend:
    """Scenario-driven stand-in for the interpreter.

    The scenario maps attempt ordinals to report fields; when attempts run
    out the last entry repeats. ``sleep_ms`` burns real wall time (so
    concurrency and timeout behavior can be exercised), and ``hang`` makes
    the attempt outlast any timeout budget.
    """

    name = "mock"

    def __init__(self, scenario: dict | None = None):
        scenario = scenario or {"attempts": [{"status": SUCCESS}]}
        attempts = scenario.get("attempts")
        if not isinstance(attempts, list) or not attempts:
            raise ParseError("mock executor scenario needs a non-empty 'attempts' array")
        for i, a in enumerate(attempts):
            if not isinstance(a, dict) or a.get("status", SUCCESS) not in (
                SUCCESS,
                RUNTIME_ERROR,
                TIMEOUT,
            ):
                raise ParseError(f"attempts[{i}] has an invalid status")
        self._attempts = attempts
        self._calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockExecutorBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        return cls(data)

    def run_script(self, code: str, timeout_ms: int, workdir: Path) -> ExecutionReport:
        with self._lock:
            spec = self._attempts[min(self._calls, len(self._attempts) - 1)]
            self._calls += 1
        started = time.monotonic()
        sleep_ms = int(spec.get("sleep_ms", 0))
        hang = bool(spec.get("hang", False))
        if hang or sleep_ms >= timeout_ms:
            time.sleep(timeout_ms / 1000.0)
            elapsed = (time.monotonic() - started) * 1000.0
            return ExecutionReport(
                status=TIMEOUT,
                stdout=str(spec.get("stdout", "")),
                stderr=str(spec.get("stderr", "")),
                error_text=timeout_message(timeout_ms),
                duration_ms=max(elapsed, float(timeout_ms)),
            )
        if sleep_ms:
            time.sleep(sleep_ms / 1000.0)
        status = spec.get("status", SUCCESS)
        stdout = str(spec.get("stdout", ""))
        stderr = str(spec.get("stderr", ""))
        error_text = ""
        if status == RUNTIME_ERROR:
            error_text = str(spec.get("error_text", "")) or first_error_block(stderr, stdout)
            if not error_text:
                error_text = "error: scripted failure"
        elif status == TIMEOUT:
            error_text = timeout_message(timeout_ms)
        warnings = tuple(spec.get("warnings", ())) or parse_warnings(stdout, stderr)
        elapsed = (time.monotonic() - started) * 1000.0
        if status == TIMEOUT:
            elapsed = max(elapsed, float(timeout_ms))
        return ExecutionReport(
            status=status,
            stdout=stdout,
            stderr=stderr,
            error_text=error_text,
            warnings=warnings,
            duration_ms=elapsed,
        )


class OctaveBackend:
    """Runs scripts in a GNU Octave subprocess with MATPOWER on the path.

    Stands in for the proprietary MATLAB engine: per-call processes give
    the same observable contract with simpler isolation. Concurrent runs
    are bounded by a small pool.
    """

    name = "octave"

    def __init__(
        self,
        octave_bin: str = "octave-cli",
        matpower_dir: str | None = None,
        pool: int = DEFAULT_POOL,
    ):
        self.octave_bin = octave_bin
        self.matpower_dir = matpower_dir
        self._pool = threading.BoundedSemaphore(max(1, pool))

    def run_script(self, code: str, timeout_ms: int, workdir: Path) -> ExecutionReport:
        import os
        import shutil
        import signal
        import subprocess

        binary = shutil.which(self.octave_bin)
        if binary is None:
            raise BackendUnavailableError(f"octave binary {self.octave_bin!r} not found")
        script = workdir / "task.m"
        script.write_text(code, encoding="utf-8")
        cmd = [binary, "--no-gui", "--norc", "--quiet"]
        if self.matpower_dir:
            cmd += ["--path", self.matpower_dir]
        cmd.append(str(script))

        with self._pool:
            started = time.monotonic()
            proc = subprocess.Popen(
                cmd,
                cwd=workdir,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                start_new_session=True,
            )
            try:
                stdout, stderr = proc.communicate(timeout=timeout_ms / 1000.0)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                stdout, stderr = proc.communicate()
                elapsed = (time.monotonic() - started) * 1000.0
                return ExecutionReport(
                    status=TIMEOUT,
                    stdout=stdout or "",
                    stderr=stderr or "",
                    error_text=timeout_message(timeout_ms),
                    warnings=parse_warnings(stdout or "", stderr or ""),
                    duration_ms=max(elapsed, float(timeout_ms)),
                )
        elapsed = (time.monotonic() - started) * 1000.0
        warnings = parse_warnings(stdout, stderr)
        error_block = first_error_block(stderr, stdout)
        if proc.returncode == 0 and not error_block:
            return ExecutionReport(
                status=SUCCESS, stdout=stdout, stderr=stderr, warnings=warnings,
                duration_ms=elapsed,
            )
        return ExecutionReport(
            status=RUNTIME_ERROR,
            stdout=stdout,
            stderr=stderr,
            error_text=error_block or f"error: octave exited with code {proc.returncode}",
            warnings=warnings,
            duration_ms=elapsed,
        )


def execute(backend, code: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> ExecutionReport:
    """Run a script hermetically: fresh temp directory, bounded by timeout."""
    import tempfile

    if timeout_ms < 1:
        raise ValueError("timeout_ms must be >= 1")
    with tempfile.TemporaryDirectory(prefix="gridscribe-exec-") as tmp:
        return backend.run_script(code, timeout_ms, Path(tmp))


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    detail: str = ""


def list_backends(config: dict | None = None) -> list[BackendDescriptor]:
    """Available execution backends: the mock always, octave only when the
    binary resolves and the MATPOWER directory is usable."""
    import shutil

    config = config or {}
    found = [BackendDescriptor(name="mock", detail="scenario-driven test double")]
    octave_bin = config.get("octave_bin", "octave-cli")
    matpower_dir = config.get("matpower_dir")
    binary = shutil.which(octave_bin)
    if binary and matpower_dir:
        if Path(matpower_dir).is_dir():
            found.append(BackendDescriptor(name="octave", detail=binary))
        else:
            logger.warning("matpower_dir %r is not a directory; octave backend disabled", matpower_dir)
    return found
