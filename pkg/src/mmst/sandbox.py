"""Out-of-process execution of code artifacts with timeouts.

The orchestrator never evaluates artifact text in-process: every artifact is
sent to a runner subprocess over a line-delimited JSON protocol (one request,
one response, strictly alternating). Each worker thread owns its own runner
process; a runner is restarted after any error or timeout so one bad artifact
cannot poison the next.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
import queue
import shutil
import signal
import subprocess
import sys
import threading
import time
from dataclasses import dataclass

logger = logging.getLogger(__name__)

STDERR_LIMIT = 2048
DEFAULT_TIMEOUT_S = 5.0
CLEAN_TIMEOUT_S = 10.0
DEFAULT_MEMORY_LIMIT = 1 << 30  # 1 GiB address space for the runner

DEFAULT_RUNNER_COMMAND: tuple[str, ...] = (sys.executable, "-m", "mmst.runner_stub")


class ExecutionStatus(enum.Enum):
    VALUE = "value"
    ERROR = "error"
    TIMEOUT = "timeout"
    NONNUMERIC = "nonnumeric"


@dataclass(frozen=True, slots=True)
class ExecutionOutcome:
    status: ExecutionStatus
    value: float | None = None
    stderr_excerpt: str = ""
    duration: float = 0.0

    def __post_init__(self) -> None:
        has_finite = self.value is not None and math.isfinite(self.value)
        if (self.status is ExecutionStatus.VALUE) != has_finite:
            raise ValueError("status is VALUE iff a finite value is present")


class RunnerUnavailableError(RuntimeError):
    """The runner command cannot be launched; a configuration error."""


class _RunnerCrash(Exception):
    pass


def _set_limits(memory_limit: int | None):
    if memory_limit is None:
        return None

    def preexec():  # pragma: no cover - runs in the forked child
        try:
            import resource

            resource.setrlimit(resource.RLIMIT_AS, (memory_limit, memory_limit))
        except Exception:
            pass

    return preexec


class RunnerProcess:
    """One runner subprocess, owned by exactly one worker."""

    def __init__(self, command: tuple[str, ...], memory_limit: int | None = DEFAULT_MEMORY_LIMIT):
        self.command = command
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                start_new_session=True,
                preexec_fn=_set_limits(memory_limit),
            )
        except OSError as exc:
            raise RunnerUnavailableError(f"cannot launch runner {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_lines, daemon=True)
        self._reader.start()

    def _read_lines(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        for line in stdout:
            self._lines.put(line)
        self._lines.put(None)

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def request(self, payload: dict, deadline_s: float) -> dict | None:
        """Send one request; return the response, or None on deadline expiry.

        Raises _RunnerCrash if the runner died or answered garbage.
        """
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise _RunnerCrash(f"runner stdin closed: {exc}") from exc
        try:
            line = self._lines.get(timeout=deadline_s)
        except queue.Empty:
            return None
        if line is None:
            raise _RunnerCrash("runner exited without responding")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _RunnerCrash(f"undecodable runner response: {line[:200]!r}") from exc
        if not isinstance(response, dict):
            raise _RunnerCrash(f"non-object runner response: {line[:200]!r}")
        return response

    def kill(self) -> None:
        if self._proc.poll() is None:
            try:
                os.killpg(self._proc.pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                self._proc.kill()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:  # pragma: no cover - kill -9 should land
            pass


class Sandbox:
    """Orchestrates runner processes for N concurrent workers.

    Each calling thread gets its own warm runner; there is no shared mutable
    state between workers beyond the process table.
    """

    def __init__(
        self,
        command: tuple[str, ...] | None = None,
        *,
        timeout: float = DEFAULT_TIMEOUT_S,
        restart_per_call: bool = False,
        memory_limit: int | None = DEFAULT_MEMORY_LIMIT,
    ):
        self.command = tuple(command) if command else DEFAULT_RUNNER_COMMAND
        self.timeout = timeout
        self.restart_per_call = restart_per_call
        self.memory_limit = memory_limit
        binary = self.command[0]
        if shutil.which(binary) is None and not os.path.exists(binary):
            raise RunnerUnavailableError(f"runner binary not found: {binary!r}")
        self._runners: dict[int, RunnerProcess] = {}
        self._lock = threading.Lock()

    def _runner(self) -> RunnerProcess:
        ident = threading.get_ident()
        with self._lock:
            runner = self._runners.get(ident)
            if runner is None or not runner.alive:
                runner = RunnerProcess(self.command, self.memory_limit)
                self._runners[ident] = runner
            return runner

    def _recycle(self, runner: RunnerProcess) -> None:
        runner.kill()
        ident = threading.get_ident()
        with self._lock:
            if self._runners.get(ident) is runner:
                del self._runners[ident]

    def execute(self, artifact: str, timeout: float | None = None) -> ExecutionOutcome:
        """Run one artifact; timeouts kill the runner process tree."""
        timeout = self.timeout if timeout is None else timeout
        runner = self._runner()
        start = time.monotonic()
        try:
            response = runner.request(
                {"op": "exec", "code": artifact, "timeout_ms": int(timeout * 1000)},
                deadline_s=timeout,
            )
        except _RunnerCrash as exc:
            self._recycle(runner)
            return ExecutionOutcome(
                ExecutionStatus.ERROR,
                stderr_excerpt=str(exc)[:STDERR_LIMIT],
                duration=time.monotonic() - start,
            )
        duration = time.monotonic() - start
        if response is None:
            self._recycle(runner)
            return ExecutionOutcome(ExecutionStatus.TIMEOUT, duration=duration)
        outcome = self._classify(response, duration)
        if self.restart_per_call or outcome.status in (ExecutionStatus.ERROR, ExecutionStatus.TIMEOUT):
            self._recycle(runner)
        return outcome

    @staticmethod
    def _classify(response: dict, duration: float) -> ExecutionOutcome:
        status = response.get("status")
        if status == "value":
            value = response.get("value")
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                return ExecutionOutcome(
                    ExecutionStatus.ERROR,
                    stderr_excerpt=f"malformed value response: {value!r}",
                    duration=duration,
                )
            return ExecutionOutcome(ExecutionStatus.VALUE, value=float(value), duration=duration)
        if status == "nonnumeric":
            return ExecutionOutcome(ExecutionStatus.NONNUMERIC, duration=duration)
        if status == "error":
            stderr = str(response.get("stderr", ""))[:STDERR_LIMIT]
            return ExecutionOutcome(ExecutionStatus.ERROR, stderr_excerpt=stderr, duration=duration)
        return ExecutionOutcome(
            ExecutionStatus.ERROR,
            stderr_excerpt=f"unexpected runner status: {status!r}",
            duration=duration,
        )

    def cleanup(self, artifact: str) -> str:
        """Remove dead code from an artifact via the runner's clean endpoint.

        Semantics are preserved by contract; on any failure the artifact is
        returned unchanged and a warning is recorded.
        """
        runner = self._runner()
        try:
            response = runner.request({"op": "clean", "code": artifact}, deadline_s=CLEAN_TIMEOUT_S)
        except _RunnerCrash as exc:
            self._recycle(runner)
            logger.warning("cleanup failed (%s); keeping artifact unchanged", exc)
            return artifact
        if response is None:
            self._recycle(runner)
            logger.warning("cleanup timed out; keeping artifact unchanged")
            return artifact
        if response.get("status") != "cleaned" or not isinstance(response.get("code"), str):
            logger.warning("cleanup returned %r; keeping artifact unchanged", response.get("status"))
            return artifact
        return response["code"]

    def close(self) -> None:
        with self._lock:
            runners = list(self._runners.values())
            self._runners.clear()
        for runner in runners:
            runner.kill()

    def __enter__(self) -> "Sandbox":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def execute_solution(
    artifact: str,
    timeout: float = DEFAULT_TIMEOUT_S,
    command: tuple[str, ...] | None = None,
) -> ExecutionOutcome:
    """One-shot convenience: run a single artifact in a fresh sandbox."""
    with Sandbox(command, timeout=timeout) as sandbox:
        return sandbox.execute(artifact)
