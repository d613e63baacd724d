"""Protocol-conformant reference executor, used as the default desk-scale runner.

Speaks the sandbox wire protocol on stdin/stdout: one JSON request per line,
one JSON response per line, strictly alternating.

    request:  {"op": "exec"|"clean", "code": str, "timeout_ms": int}
    response: {"status": "value", "value": number}
              {"status": "nonnumeric"}
              {"status": "error", "stderr": str}
              {"status": "cleaned", "code": str}

"clean" echoes the code unchanged here; real dead-code removal lives in the
production runner package. Intentionally dependency-free so it starts fast
under a tight address-space limit.
"""

from __future__ import annotations

import json
import math
import signal
import sys
import traceback

STDERR_LIMIT = 2048

# Margin past the requested timeout before the in-process alarm fires: under
# an orchestrator the process is killed at the timeout proper, so the alarm
# only protects standalone use from hanging forever.
ALARM_MARGIN_S = 0.25


class _Alarm(Exception):
    pass


def _raise_alarm(signum, frame):  # pragma: no cover - signal plumbing
    raise _Alarm()


def to_number(value) -> float | None:
    """Map a solution() return value to a finite float, or None.

    Booleans count as numeric (True -> 1.0); anything non-finite or
    non-numeric is None.
    """
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
    """Plain-decimal serialization: integers without a decimal point,
    fractional values with up to 12 significant digits."""
    if value == int(value) and abs(value) < 2**53:
        return int(value)
    return float(f"{value:.12g}")


def run_exec(code: str, timeout_ms: int) -> dict:
    namespace: dict = {}
    old_handler = signal.signal(signal.SIGALRM, _raise_alarm)
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0 + ALARM_MARGIN_S)
    try:
        exec(compile(code, "<artifact>", "exec"), namespace)
        fn = namespace.get("solution")
        if not callable(fn):
            return {"status": "error", "stderr": "no callable `solution` defined"}
        result = fn()
    except _Alarm:
        return {"status": "error", "stderr": f"execution exceeded {timeout_ms} ms"}
    except BaseException:
        return {"status": "error", "stderr": traceback.format_exc(limit=8)[-STDERR_LIMIT:]}
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, old_handler)
    number = to_number(result)
    if number is None:
        return {"status": "nonnumeric"}
    return {"status": "value", "value": serialize_number(number)}


def handle_request(line: str) -> dict:
    try:
        request = json.loads(line)
        op = request.get("op")
        if op == "exec":
            return run_exec(str(request["code"]), int(request.get("timeout_ms", 5000)))
        if op == "clean":
            return {"status": "cleaned", "code": str(request["code"])}
        return {"status": "error", "stderr": f"unknown op: {op!r}"}
    except Exception as exc:
        return {"status": "error", "stderr": f"protocol error: {exc}"}


def main() -> None:
    for line in sys.stdin:
        if not line.strip():
            continue
        response = handle_request(line)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
