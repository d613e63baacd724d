"""Execute one `solution` definition in a fresh, deny-by-default namespace."""

from __future__ import annotations

import ast
import builtins
import io
import math
import os
import signal
import socket
import sys
import traceback

STDERR_LIMIT = 2048

# Margin past the requested timeout before the in-process alarm fires. Under
# an orchestrator the process is killed at the timeout proper; the alarm
# keeps a standalone runner responsive on nonterminating artifacts.
ALARM_MARGIN_S = 0.25


class SandboxViolation(RuntimeError):
    pass


class _Alarm(Exception):
    pass


def _raise_alarm(signum, frame):  # pragma: no cover - signal plumbing
    raise _Alarm()


def _deny(what: str):
    def blocked(*args, **kwargs):
        raise SandboxViolation(f"{what} is not available during execution")

    return blocked


def _error(message: str) -> dict:
    return {"status": "error", "stderr": message[:STDERR_LIMIT]}


def to_number(value) -> float | None:
    """Finite-float view of a return value; booleans count as numeric."""
    if isinstance(value, bool):
        return float(value)
    if not isinstance(value, (int, float)):
        return None
    try:
        out = float(value)
    except OverflowError:
        return None
    return out if math.isfinite(out) else None


def serialize_number(value: float):
    """Integers without a decimal point; fractional values with up to 12
    significant digits."""
    if value == int(value) and abs(value) < 2**53:
        return int(value)
    return float(f"{value:.12g}")


def first_solution_def(tree: ast.Module) -> ast.FunctionDef | None:
    for node in tree.body:
        if isinstance(node, ast.FunctionDef) and node.name == "solution":
            return node
    return None


def _nonstdlib_imports(node: ast.AST) -> list[str]:
    missing = []
    for child in ast.walk(node):
        if isinstance(child, ast.Import):
            roots = [alias.name.split(".")[0] for alias in child.names]
        elif isinstance(child, ast.ImportFrom):
            roots = [child.module.split(".")[0]] if child.module and not child.level else []
        else:
            continue
        for root in roots:
            if root not in sys.stdlib_module_names:
                missing.append(root)
    return missing


def _restricted_builtins() -> dict:
    table = dict(vars(builtins))
    table["open"] = _deny("open()")
    return table


def execute_artifact(code: str, timeout_ms: int) -> dict:
    """Define the first `solution` function from the artifact, call it under
    an alarm, and classify the result. All other code in the artifact is
    ignored; imports are limited to the standard library; file and socket
    access are denied for the duration of the call.
    """
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError) as exc:
        return _error(f"syntax error: {exc}")
    target = first_solution_def(tree)
    if target is None:
        return _error("no `solution` function defined")
    blocked = _nonstdlib_imports(target)
    if blocked:
        return _error(f"non-standard-library import(s): {', '.join(sorted(set(blocked)))}")

    module = ast.Module(body=[target], type_ignores=[])
    try:
        compiled = compile(module, "<artifact>", "exec")
    except (SyntaxError, ValueError) as exc:
        return _error(f"compile error: {exc}")

    namespace: dict = {"__builtins__": _restricted_builtins()}
    patched = [
        (io, "open", io.open),
        (os, "open", os.open),
        (socket, "socket", socket.socket),
        (socket, "create_connection", socket.create_connection),
        (socket, "create_server", getattr(socket, "create_server", None)),
    ]
    old_handler = signal.signal(signal.SIGALRM, _raise_alarm)
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0 + ALARM_MARGIN_S)
    try:
        for module_obj, name, original in patched:
            if original is not None:
                setattr(module_obj, name, _deny(f"{module_obj.__name__}.{name}"))
        exec(compiled, namespace)
        result = namespace["solution"]()
    except _Alarm:
        return _error(f"execution exceeded {timeout_ms} ms")
    except BaseException:
        return _error(traceback.format_exc(limit=8)[-STDERR_LIMIT:])
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, old_handler)
        for module_obj, name, original in patched:
            if original is not None:
                setattr(module_obj, name, original)

    number = to_number(result)
    if number is None:
        return {"status": "nonnumeric"}
    return {"status": "value", "value": serialize_number(number)}
