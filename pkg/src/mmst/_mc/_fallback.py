"""Pure-numpy Monte Carlo block, bit-compatible with the compiled kernel.

The accumulation order below (k-inner for the correlation transform, j-order
for the aggregators) mirrors the kernel's scalar loops exactly, so both
backends produce identical float64 arrays for the same bit generator state.
"""

from __future__ import annotations

import numpy as np

AGG_MAX = 0
AGG_WEIGHTED_QUADRATIC_MEAN = 1


def block_aggregates(
    bit_generator,
    mu: np.ndarray,
    L: np.ndarray,
    aggregator: int,
    weights: np.ndarray,
    n: int,
) -> np.ndarray:
    gen = np.random.Generator(bit_generator)
    m = mu.shape[0]
    z = gen.standard_normal((n, m))
    x = np.empty((n, m))
    for j in range(m):
        acc = np.full(n, mu[j])
        for k in range(m):
            acc += L[j, k] * z[:, k]
        x[:, j] = acc
    if aggregator == AGG_MAX:
        out = x[:, 0].copy()
        for j in range(1, m):
            np.maximum(out, x[:, j], out=out)
        return out
    if aggregator == AGG_WEIGHTED_QUADRATIC_MEAN:
        out = np.zeros(n)
        for j in range(m):
            out += weights[j] * np.square(x[:, j])
        np.sqrt(out, out=out)
        return out
    raise ValueError(f"unknown aggregator code {aggregator}")
