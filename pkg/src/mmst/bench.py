"""Benchmark the compiled Monte Carlo kernel against the numpy fallback.

    python -m mmst.bench [--draws N] [--repeat R]

Reports draws/second per backend and cross-checks that both produce the same
estimate for the same seed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import _mc
from .analysis import Aggregator, expected_aggregate, two_method_model


def _time_backend(module, model, n_draws: int, repeat: int, seed: int) -> tuple[float, float]:
    mu = np.ascontiguousarray(model.means, dtype=np.float64)
    L = np.ascontiguousarray(model.factor(), dtype=np.float64)
    weights = np.zeros(mu.shape[0]) if model.weights is None else np.asarray(model.weights)
    code = _mc.AGG_MAX if model.aggregator is Aggregator.MAX else _mc.AGG_WEIGHTED_QUADRATIC_MEAN
    best = float("inf")
    total = 0.0
    for _ in range(repeat):
        root = np.random.Philox(key=seed)
        start = time.perf_counter()
        values = module.block_aggregates(root, mu, L, code, weights, n_draws)
        elapsed = time.perf_counter() - start
        best = min(best, elapsed)
        total = float(values.sum())
    return best, total


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--draws", type=int, default=2_000_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=20_240_601)
    args = parser.parse_args(argv)

    model = two_method_model(rho=-0.5)
    backends = []
    from ._mc import _fallback

    backends.append(("python", _fallback))
    try:
        from ._mc import _kernel

        backends.append(("compiled", _kernel))
    except ImportError:
        print("compiled kernel not built; benchmarking the fallback only")

    sums = {}
    for name, module in backends:
        best, total = _time_backend(module, model, args.draws, args.repeat, args.seed)
        sums[name] = total
        print(f"{name:>8}: {args.draws / best / 1e6:8.2f} M draws/s  (best of {args.repeat})")
    if len(sums) == 2 and sums["python"] != sums["compiled"]:
        print("WARNING: backends disagree; draw streams are no longer aligned")
        return 1
    estimate = expected_aggregate(model, max(args.draws, 10_000), args.seed)
    print(f"E[max] at rho=-0.5: {estimate.estimate:.6f} +- {estimate.std_error:.6f} "
          f"(backend: {_mc.backend_name()})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
