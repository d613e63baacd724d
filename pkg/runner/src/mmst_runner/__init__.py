"""Out-of-process executor for generated `solution` functions.

Speaks a line-delimited JSON protocol on stdin/stdout, one request per line,
one response per line, strictly alternating:

    {"op": "exec",  "code": str, "timeout_ms": int}
        -> {"status": "value", "value": number}
         | {"status": "nonnumeric"}
         | {"status": "error", "stderr": str}
    {"op": "clean", "code": str}
        -> {"status": "cleaned", "code": str}
         | {"status": "error", "stderr": str}

Only the first `solution` definition in the artifact is executed; everything
else is ignored. Errors and non-numeric returns are reported, never raised
across the protocol; malformed requests get an error response and the
process stays alive. Logs go to stderr only.
"""

from .cleanup import clean_source
from .executor import execute_artifact, serialize_number, to_number

__version__ = "0.1.0"

__all__ = ["clean_source", "execute_artifact", "serialize_number", "to_number", "__version__"]
