"""Monte Carlo hot loop with backend selection at import.

The compiled Cython kernel is used when its extension built; the pure-numpy
fallback otherwise. Set MMST_MC_BACKEND=python|compiled to force one (forcing
"compiled" without the extension is an error). Both backends are
draw-for-draw identical, so estimates do not depend on the choice.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback
from ._fallback import AGG_MAX, AGG_WEIGHTED_QUADRATIC_MEAN

BACKEND_ENV_VAR = "MMST_MC_BACKEND"

try:
    from . import _kernel
except ImportError:  # pragma: no cover - depends on the build
    _kernel = None


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _kernel is not None else ("python",)


def _select():
    requested = os.environ.get(BACKEND_ENV_VAR, "").strip().lower()
    if requested == "python":
        return _fallback
    if requested == "compiled":
        if _kernel is None:
            raise RuntimeError("MMST_MC_BACKEND=compiled but the kernel extension is not built")
        return _kernel
    if requested:
        raise RuntimeError(f"unknown {BACKEND_ENV_VAR} value {requested!r}")
    return _kernel if _kernel is not None else _fallback


def backend_name() -> str:
    return "compiled" if _select() is _kernel and _kernel is not None else "python"


def block_aggregates(
    bit_generator,
    mu: np.ndarray,
    L: np.ndarray,
    aggregator: int,
    weights: np.ndarray | None,
    n: int,
) -> np.ndarray:
    """Per-draw aggregate values for one block of n draws."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.float64)
    if weights is None:
        weights = np.zeros(mu.shape[0])
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return _select().block_aggregates(bit_generator, mu, L, aggregator, weights, n)
