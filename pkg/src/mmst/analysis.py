"""Why multi-method self-training works: pseudo-label correlation and the
aggregation-function Monte Carlo.

Two threads of evidence live here. First, the phi correlation of per-method
success indicators, on all examples and on the subset with at least one
positive pseudo-label (the subset the model actually trains on). Second, a
Monte Carlo study of E[A(X)] for correlated method performances X and convex
aggregators A: the confidence filter makes training max-like, and
E[max] - max(E) grows as the cross-method correlation falls. For two equal
marginals the closed form is E[max] = mu + sigma * sqrt((1 - rho) / pi).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _mc
from .core import MethodKind
from .solvers import (
    SimModel,
    implied_bernoulli_correlation,
    success_matrix,
)

BLOCK_SIZE = 1 << 14
MIN_DRAWS = 10_000
PSD_EIGENVALUE_FLOOR = -1e-10


class Aggregator(enum.Enum):
    MAX = "max"
    WEIGHTED_QUADRATIC_MEAN = "weighted_quadratic_mean"


class SubsetRule(enum.Enum):
    ALL = "all"
    AT_LEAST_ONE_POSITIVE = "at_least_one_positive"


@dataclass(frozen=True)
class AggregationModel:
    """Correlated performance model: X ~ N(mu, diag(sigma) R diag(sigma)),
    plus the aggregation function applied to each draw."""

    means: tuple[float, ...]
    stds: tuple[float, ...]
    correlation: tuple[tuple[float, ...], ...]
    aggregator: Aggregator = Aggregator.MAX
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        m = len(self.means)
        if m < 1 or len(self.stds) != m:
            raise ValueError("means and stds must be nonempty and equal length")
        if any(s < 0 for s in self.stds):
            raise ValueError("standard deviations must be >= 0")
        R = np.asarray(self.correlation, dtype=np.float64)
        if R.shape != (m, m):
            raise ValueError(f"correlation matrix must be {m}x{m}")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(R), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        if np.linalg.eigvalsh(R).min() < PSD_EIGENVALUE_FLOOR:
            raise ValueError("correlation matrix must be positive semidefinite")
        if self.aggregator is Aggregator.WEIGHTED_QUADRATIC_MEAN:
            if self.weights is None or len(self.weights) != m:
                raise ValueError("weighted quadratic mean needs one weight per method")
            w = np.asarray(self.weights, dtype=np.float64)
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def m(self) -> int:
        return len(self.means)

    def factor(self) -> np.ndarray:
        """L with L L^T = diag(sigma) R diag(sigma), via eigendecomposition
        with eigenvalues clipped at 0 (handles the rho = +-1 boundary)."""
        sigma = np.diag(np.asarray(self.stds, dtype=np.float64))
        cov = sigma @ np.asarray(self.correlation, dtype=np.float64) @ sigma
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))

    def aggregate_of_means(self) -> float:
        """A(E[X])."""
        mu = np.asarray(self.means, dtype=np.float64)
        if self.aggregator is Aggregator.MAX:
            return float(mu.max())
        w = np.asarray(self.weights, dtype=np.float64)
        return float(math.sqrt(float((w * mu**2).sum())))


def two_method_model(
    mu: float = 0.0,
    sigma: float = 1.0,
    rho: float = 0.0,
    aggregator: Aggregator = Aggregator.MAX,
    weights: tuple[float, float] | None = None,
) -> AggregationModel:
    return AggregationModel(
        means=(mu, mu),
        stds=(sigma, sigma),
        correlation=((1.0, rho), (rho, 1.0)),
        aggregator=aggregator,
        weights=weights,
    )


def bivariate_equal_max_mean(mu: float, sigma: float, rho: float) -> float:
    """Closed form for E[max(X1, X2)] with equal marginals N(mu, sigma^2)
    and correlation rho."""
    return mu + sigma * math.sqrt((1.0 - rho) / math.pi)


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    estimate: float
    std_error: float
    n_draws: int


def _block_plan(n_draws: int) -> list[tuple[int, int]]:
    blocks = []
    index = 0
    remaining = n_draws
    while remaining > 0:
        size = min(BLOCK_SIZE, remaining)
        blocks.append((index, size))
        index += 1
        remaining -= size
    return blocks


_AGG_CODE = {
    Aggregator.MAX: _mc.AGG_MAX,
    Aggregator.WEIGHTED_QUADRATIC_MEAN: _mc.AGG_WEIGHTED_QUADRATIC_MEAN,
}


def expected_aggregate(
    model: AggregationModel, n_draws: int, seed: int, workers: int = 1
) -> MonteCarloEstimate:
    """Monte Carlo estimate of E[A(X)].

    Draws are partitioned into fixed-size blocks, each with its own
    counter-based substream (Philox jumped by block index), and block results
    are merged in block order: the same seed gives the same estimate for any
    worker count.
    """
    if n_draws < MIN_DRAWS:
        raise ValueError(f"n_draws must be >= {MIN_DRAWS}")
    mu = np.asarray(model.means, dtype=np.float64)
    L = model.factor()
    weights = None if model.weights is None else np.asarray(model.weights, dtype=np.float64)
    code = _AGG_CODE[model.aggregator]
    root = np.random.Philox(key=seed)

    def run_block(block: tuple[int, int]) -> tuple[float, float]:
        index, size = block
        values = _mc.block_aggregates(root.jumped(index), mu, L, code, weights, size)
        return float(np.sum(values)), float(np.dot(values, values))

    plan = _block_plan(n_draws)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_block, plan))
    else:
        partials = [run_block(b) for b in plan]

    total = 0.0
    total_sq = 0.0
    for s, ss in partials:  # merge in block order for float determinism
        total += s
        total_sq += ss
    mean = total / n_draws
    variance = max(0.0, (total_sq - n_draws * mean * mean) / max(1, n_draws - 1))
    return MonteCarloEstimate(mean, math.sqrt(variance / n_draws), n_draws)


@dataclass(frozen=True, slots=True)
class JensenGap:
    gap: float
    std_error: float
    expected_aggregate: float
    aggregate_of_means: float
    n_draws: int


def jensen_gap(model: AggregationModel, n_draws: int, seed: int, workers: int = 1) -> JensenGap:
    """E[A(X)] - A(E[X]); nonnegative up to Monte Carlo error for the convex
    aggregators provided here."""
    estimate = expected_aggregate(model, n_draws, seed, workers=workers)
    baseline = model.aggregate_of_means()
    return JensenGap(
        gap=estimate.estimate - baseline,
        std_error=estimate.std_error,
        expected_aggregate=estimate.estimate,
        aggregate_of_means=baseline,
        n_draws=n_draws,
    )


# Ten-point model grid used by the analyze command and the acceptance suite.
JENSEN_GRID: tuple[AggregationModel, ...] = (
    two_method_model(rho=-1.0),
    two_method_model(rho=-0.5),
    two_method_model(rho=0.0),
    two_method_model(rho=0.5),
    two_method_model(rho=1.0),
    two_method_model(mu=1.5, sigma=2.0, rho=-0.25),
    two_method_model(rho=0.0, aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN, weights=(0.5, 0.5)),
    two_method_model(rho=-0.5, aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN, weights=(0.25, 0.75)),
    AggregationModel(
        means=(0.0, 0.5, 1.0),
        stds=(1.0, 1.0, 2.0),
        correlation=((1.0, 0.2, -0.3), (0.2, 1.0, 0.1), (-0.3, 0.1, 1.0)),
    ),
    AggregationModel(
        means=(1.0, 1.0, 1.0),
        stds=(1.0, 0.5, 1.5),
        correlation=((1.0, -0.4, 0.0), (-0.4, 1.0, -0.2), (0.0, -0.2, 1.0)),
        aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN,
        weights=(0.2, 0.3, 0.5),
    ),
)


@dataclass(frozen=True)
class VerdictMatrix:
    """One binary indicator per (example, method): 1 iff any candidate for
    that method was correct."""

    methods: tuple[MethodKind, ...]
    rows: np.ndarray  # shape (n_examples, len(methods)), values in {0, 1}

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[1] != len(self.methods):
            raise ValueError("rows must be (n_examples, n_methods)")
        if not np.isin(rows, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")

    @classmethod
    def from_candidates(cls, candidates, methods: tuple[MethodKind, ...]) -> "VerdictMatrix":
        from .core import Verdict

        example_ids = sorted({c.example_id for c in candidates})
        index = {example_id: i for i, example_id in enumerate(example_ids)}
        rows = np.zeros((len(example_ids), len(methods)), dtype=np.int8)
        column = {method: j for j, method in enumerate(methods)}
        for candidate in candidates:
            if candidate.verdict is Verdict.CORRECT and candidate.method in column:
                rows[index[candidate.example_id], column[candidate.method]] = 1
        return cls(methods=methods, rows=rows)


def phi_correlation(
    matrix: VerdictMatrix,
    subset: SubsetRule = SubsetRule.ALL,
    columns: tuple[int, int] = (0, 1),
) -> float | None:
    """Pearson correlation of two binary columns via the contingency form
    (n11*n00 - n10*n01) / sqrt(n1. * n0. * n.1 * n.0).

    Returns None (undefined, never 0) when fewer than two rows remain after
    subsetting or either column is constant.
    """
    a = np.asarray(matrix.rows[:, columns[0]], dtype=np.int64)
    b = np.asarray(matrix.rows[:, columns[1]], dtype=np.int64)
    if subset is SubsetRule.AT_LEAST_ONE_POSITIVE:
        keep = (a | b) > 0
        a, b = a[keep], b[keep]
    if a.size < 2:
        return None
    n11 = int(np.sum((a == 1) & (b == 1)))
    n10 = int(np.sum((a == 1) & (b == 0)))
    n01 = int(np.sum((a == 0) & (b == 1)))
    n00 = int(np.sum((a == 0) & (b == 0)))
    n1_, n0_ = n11 + n10, n01 + n00
    n_1, n_0 = n11 + n01, n10 + n00
    denominator = n1_ * n0_ * n_1 * n_0
    if denominator == 0:
        return None
    return (n11 * n00 - n10 * n01) / math.sqrt(denominator)


@dataclass(frozen=True)
class SweepRow:
    rho: float
    feasible: bool
    phi_all: float | None = None
    phi_positives: float | None = None
    union_coverage: float | None = None
    single_sizes: dict[str, int] = field(default_factory=dict)
    mmst_sizes: dict[str, int] = field(default_factory=dict)
    implied_bernoulli: float | None = None
    infeasible_reason: str | None = None


def correlation_sweep(
    p_text: float,
    p_code: float,
    rho_grid: list[float],
    n_examples: int,
    k: int,
    seed: int,
) -> list[SweepRow]:
    """Run the simulated pipeline's closed path over a latent-correlation grid.

    Reports measured phi on both subsets, union coverage (examples with at
    least one positive pseudo-label), and the assembled dataset sizes under
    multi-method versus single-method self-training. With the simulator,
    exact dedup collapses repeat successes and every translation validates,
    so sizes follow directly from the success matrix; the pipeline test suite
    pins this equivalence against the full staged run.
    """
    from .solvers import make_synthetic_dataset

    example_ids = [e.id for e in make_synthetic_dataset(n_examples)]
    rows = []
    for rho in rho_grid:
        try:
            sim = SimModel(p_text=p_text, p_code=p_code, rho=rho)
        except ValueError as exc:
            rows.append(SweepRow(rho=rho, feasible=False, infeasible_reason=str(exc)))
            continue
        success = success_matrix(sim, seed, example_ids, k).astype(np.int8)
        matrix = VerdictMatrix(methods=(MethodKind.TEXT, MethodKind.CODE), rows=success)
        singles = {
            method.value: int(success[:, j].sum())
            for j, method in enumerate(matrix.methods)
        }
        total_positives = sum(singles.values())
        rows.append(
            SweepRow(
                rho=rho,
                feasible=True,
                phi_all=phi_correlation(matrix, SubsetRule.ALL),
                phi_positives=phi_correlation(matrix, SubsetRule.AT_LEAST_ONE_POSITIVE),
                union_coverage=float(success.any(axis=1).mean()),
                single_sizes=singles,
                mmst_sizes={method.value: total_positives for method in matrix.methods},
                implied_bernoulli=implied_bernoulli_correlation(p_text, p_code, rho),
            )
        )
    return rows
