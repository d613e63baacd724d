"""Protocol loop: one JSON request per stdin line, one JSON response out."""

from __future__ import annotations

import json
import sys

from .cleanup import clean_source
from .executor import STDERR_LIMIT, execute_artifact

DEFAULT_TIMEOUT_MS = 5000


def handle_request(line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"status": "error", "stderr": f"protocol error: undecodable request ({exc.msg})"}
    if not isinstance(request, dict):
        return {"status": "error", "stderr": "protocol error: request must be a JSON object"}
    op = request.get("op")
    if op == "exec":
        code = request.get("code")
        if not isinstance(code, str):
            return {"status": "error", "stderr": "protocol error: 'code' must be a string"}
        try:
            timeout_ms = int(request.get("timeout_ms", DEFAULT_TIMEOUT_MS))
        except (TypeError, ValueError):
            return {"status": "error", "stderr": "protocol error: 'timeout_ms' must be an integer"}
        return execute_artifact(code, timeout_ms)
    if op == "clean":
        code = request.get("code")
        if not isinstance(code, str):
            return {"status": "error", "stderr": "protocol error: 'code' must be a string"}
        try:
            return {"status": "cleaned", "code": clean_source(code)}
        except (SyntaxError, ValueError) as exc:
            return {"status": "error", "stderr": f"unparseable code: {exc}"[:STDERR_LIMIT]}
    return {"status": "error", "stderr": f"protocol error: unknown op {op!r}"}


def main() -> None:
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            response = handle_request(line)
        except Exception as exc:  # keep the alternation alive no matter what
            response = {"status": "error", "stderr": f"internal error: {exc}"[:STDERR_LIMIT]}
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
