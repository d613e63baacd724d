"""Multi-method self-training: generate candidate solutions with several
methods, pseudo-label them by final-answer match, translate positives across
methods, and assemble fine-tuning datasets, plus the analysis machinery that
explains when the approach helps.

Kept import-light: heavy modules (solvers, pipeline, analysis) are imported
where needed so the runner stub starts fast under its address-space limit.
"""

from .core import (
    AnswerKey,
    AnswerKind,
    CandidateSolution,
    MethodKind,
    Provenance,
    RunConfig,
    Split,
    TaskExample,
    TrainingRecord,
    Verdict,
    match_answer,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerKey",
    "AnswerKind",
    "CandidateSolution",
    "MethodKind",
    "Provenance",
    "RunConfig",
    "Split",
    "TaskExample",
    "TrainingRecord",
    "Verdict",
    "match_answer",
    "__version__",
]
