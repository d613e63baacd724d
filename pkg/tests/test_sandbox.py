import sys
import time

import pytest

from conftest import STUB_COMMAND
from golden_problems import GOLDEN_PROBLEMS
from mmst.sandbox import (
    ExecutionStatus,
    RunnerUnavailableError,
    Sandbox,
    execute_solution,
)

RAISING = "def solution():\n  raise RuntimeError('boom')"
NONTERMINATING = "def solution():\n  while True: pass"
NONNUMERIC = "def solution():\n  return 'a word'"


class TestExecute:
    def test_golden_programs_execute(self, stub_sandbox):
        for problem in GOLDEN_PROBLEMS:
            outcome = stub_sandbox.execute(problem["code"])
            assert outcome.status is ExecutionStatus.VALUE, problem["name"]
            assert outcome.value == problem["answer"]

    def test_raising_body_is_error(self, stub_sandbox):
        outcome = stub_sandbox.execute(RAISING)
        assert outcome.status is ExecutionStatus.ERROR
        assert "boom" in outcome.stderr_excerpt

    def test_nonterminating_body_times_out_within_grace(self):
        with Sandbox(STUB_COMMAND, timeout=1.0) as sandbox:
            start = time.monotonic()
            outcome = sandbox.execute(NONTERMINATING)
            elapsed = time.monotonic() - start
        assert outcome.status is ExecutionStatus.TIMEOUT
        assert elapsed < 1.0 + 1.0

    def test_non_numeric_return(self, stub_sandbox):
        assert stub_sandbox.execute(NONNUMERIC).status is ExecutionStatus.NONNUMERIC

    def test_no_return_is_nonnumeric(self, stub_sandbox):
        assert stub_sandbox.execute("def solution():\n  x = 1").status is ExecutionStatus.NONNUMERIC

    def test_bool_return_counts_as_numeric(self, stub_sandbox):
        outcome = stub_sandbox.execute("def solution():\n  return 3 > 2")
        assert outcome.status is ExecutionStatus.VALUE
        assert outcome.value == 1.0

    def test_syntax_error_is_error(self, stub_sandbox):
        assert stub_sandbox.execute("def solution(:\n  return 1").status is ExecutionStatus.ERROR

    def test_stderr_truncated_to_2kib(self, stub_sandbox):
        artifact = "def solution():\n  raise RuntimeError('x' * 100000)"
        outcome = stub_sandbox.execute(artifact)
        assert outcome.status is ExecutionStatus.ERROR
        assert len(outcome.stderr_excerpt) <= 2048

    def test_one_shot_convenience(self):
        outcome = execute_solution("def solution():\n  return 41 + 1", timeout=5.0)
        assert outcome.value == 42


class TestRunnerLifecycle:
    def test_missing_binary_fails_at_startup(self):
        with pytest.raises(RunnerUnavailableError):
            Sandbox(("definitely-not-a-binary-9321",))

    def test_runner_restarted_after_error(self):
        with Sandbox(STUB_COMMAND) as sandbox:
            first = sandbox._runner()
            pid_before = first._proc.pid
            assert sandbox.execute(RAISING).status is ExecutionStatus.ERROR
            second = sandbox._runner()
            assert second._proc.pid != pid_before
            # and the fresh runner still works
            assert sandbox.execute("def solution():\n  return 1").value == 1

    def test_warm_runner_reused_after_success(self):
        with Sandbox(STUB_COMMAND) as sandbox:
            sandbox.execute("def solution():\n  return 1")
            pid = sandbox._runner()._proc.pid
            sandbox.execute("def solution():\n  return 2")
            assert sandbox._runner()._proc.pid == pid

    def test_restart_per_call_option(self):
        import threading

        with Sandbox(STUB_COMMAND, restart_per_call=True) as sandbox:
            sandbox.execute("def solution():\n  return 1")
            assert sandbox._runners.get(threading.get_ident()) is None  # recycled immediately

    def test_crashed_runner_maps_to_error(self):
        with Sandbox(STUB_COMMAND) as sandbox:
            runner = sandbox._runner()
            runner.kill()
            outcome = sandbox.execute("def solution():\n  return 1")
            # the dead runner is replaced lazily, so this call already works
            assert outcome.status is ExecutionStatus.VALUE


class TestCleanup:
    def test_stub_cleanup_echoes(self, stub_sandbox):
        artifact = "def solution():\n  import os\n  return 5"
        assert stub_sandbox.cleanup(artifact) == artifact

    def test_cleanup_failure_returns_artifact_unchanged(self):
        # a runner that answers garbage to clean requests
        bad = (
            sys.executable,
            "-c",
            (
                "import sys\n"
                "for line in sys.stdin:\n"
                "    sys.stdout.write('not json\\n'); sys.stdout.flush()\n"
            ),
        )
        with Sandbox(bad) as sandbox:
            artifact = "def solution():\n  return 1"
            assert sandbox.cleanup(artifact) == artifact

    def test_cleanup_preserves_execution(self, stub_sandbox):
        for problem in GOLDEN_PROBLEMS[:3]:
            cleaned = stub_sandbox.cleanup(problem["code"])
            before = stub_sandbox.execute(problem["code"])
            after = stub_sandbox.execute(cleaned)
            assert (before.status, before.value) == (after.status, after.value)
