"""Domain types shared by every pipeline stage, answer matching, and dataset file IO.

All types here are immutable values and safe to share across worker threads.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable


class MethodKind(enum.Enum):
    """One way the model can solve a problem. Two members here; the design admits more."""

    TEXT = "text"
    CODE = "code"


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"


class AnswerKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class Verdict(enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    EXTRACTION_FAILED = "extraction_failed"
    EXECUTION_ERROR = "execution_error"
    TIMEOUT = "timeout"


class Provenance(enum.Enum):
    NATIVE = "native"
    TRANSLATED = "translated"


_TERMINAL_PUNCTUATION = ".,!?;:"


def normalize_label(text: str) -> str:
    """Canonical form for categorical answers: lowercase, trimmed, terminal
    punctuation stripped, internal whitespace collapsed."""
    out = text.strip().lower().rstrip(_TERMINAL_PUNCTUATION)
    out = re.sub(r"\s+", " ", out)
    return out.strip()


@dataclass(frozen=True, slots=True)
class AnswerKey:
    """Gold answer for one example: a finite number or a normalized label."""

    kind: AnswerKind
    numeric_value: float | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if self.kind is AnswerKind.NUMERIC:
            if self.numeric_value is None or not math.isfinite(self.numeric_value):
                raise ValueError("numeric answer key requires a finite value")
            if self.label is not None:
                raise ValueError("numeric answer key must not carry a label")
        else:
            if self.numeric_value is not None:
                raise ValueError("categorical answer key must not carry a numeric value")
            if self.label is None or not normalize_label(self.label):
                raise ValueError("categorical answer key requires a nonempty label")

    @classmethod
    def numeric(cls, value: float) -> "AnswerKey":
        return cls(AnswerKind.NUMERIC, numeric_value=float(value))

    @classmethod
    def categorical(cls, label: str) -> "AnswerKey":
        return cls(AnswerKind.CATEGORICAL, label=normalize_label(label))


def match_answer(extracted: Any, key: AnswerKey, tol: float) -> bool:
    """Final-answer confidence check.

    Numeric keys match within a relative tolerance with an absolute floor:
    |extracted - value| <= tol * max(1, |value|). Categorical keys match on
    normalized string equality. Type mismatches (and NaN/infinite values)
    return False; this function never raises on a bad extracted value.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if extracted is None:
        return False
    if key.kind is AnswerKind.NUMERIC:
        if isinstance(extracted, bool):
            extracted = float(extracted)
        if not isinstance(extracted, (int, float)):
            return False
        value = float(extracted)
        if not math.isfinite(value):
            return False
        ref = float(key.numeric_value)  # type: ignore[arg-type]
        return abs(value - ref) <= tol * max(1.0, abs(ref))
    if not isinstance(extracted, str):
        return False
    return normalize_label(extracted) == key.label


@dataclass(frozen=True, slots=True)
class TaskExample:
    """One unlabeled problem: opaque id, question text, gold answer key."""

    id: str
    question: str
    answer_key: AnswerKey
    split: Split = Split.TRAIN

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("example id must be nonempty")
        if not self.question:
            raise ValueError("example question must be nonempty")


@dataclass(frozen=True, slots=True)
class CandidateSolution:
    """One generated solution with its extraction artifact and verdict."""

    example_id: str
    method: MethodKind
    raw_completion: str
    artifact: str
    extracted_answer: float | str | None
    verdict: Verdict
    sample_index: int

    def __post_init__(self) -> None:
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")
        if self.verdict in (Verdict.EXECUTION_ERROR, Verdict.TIMEOUT) and self.method is not MethodKind.CODE:
            raise ValueError(f"verdict {self.verdict.value} only occurs for the code method")
        if self.verdict is Verdict.CORRECT and self.extracted_answer is None:
            raise ValueError("a correct candidate must carry its extracted answer")

    def as_dict(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "method": self.method.value,
            "raw_completion": self.raw_completion,
            "artifact": self.artifact,
            "extracted_answer": self.extracted_answer,
            "verdict": self.verdict.value,
            "sample_index": self.sample_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CandidateSolution":
        return cls(
            example_id=data["example_id"],
            method=MethodKind(data["method"]),
            raw_completion=data["raw_completion"],
            artifact=data["artifact"],
            extracted_answer=data["extracted_answer"],
            verdict=Verdict(data["verdict"]),
            sample_index=data["sample_index"],
        )


@dataclass(frozen=True, slots=True)
class TrainingRecord:
    """One pseudo-labeled, method-targeted fine-tuning pair with provenance."""

    example_id: str
    target_method: MethodKind
    source_method: MethodKind
    input_text: str
    target_text: str
    provenance: Provenance
    validated: bool

    def __post_init__(self) -> None:
        native = self.source_method is self.target_method
        if native != (self.provenance is Provenance.NATIVE):
            raise ValueError("provenance must be native iff source and target methods agree")

    def as_dict(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "target_method": self.target_method.value,
            "source_method": self.source_method.value,
            "input_text": self.input_text,
            "target_text": self.target_text,
            "provenance": self.provenance.value,
            "validated": self.validated,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainingRecord":
        return cls(
            example_id=data["example_id"],
            target_method=MethodKind(data["target_method"]),
            source_method=MethodKind(data["source_method"]),
            input_text=data["input_text"],
            target_text=data["target_text"],
            provenance=Provenance(data["provenance"]),
            validated=data["validated"],
        )


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Sampling and export configuration for one self-training run.

    epochs / learning_rate / batch_size are export metadata for the external
    trainer; nothing here performs any training.
    """

    k: int
    seed: int
    top_p: float = 0.9
    temperature: float = 0.2
    epochs: int = 6
    learning_rate: float = 1e-5
    batch_size: int = 32
    numeric_tolerance: float = 1e-6
    sandbox_timeout: float = 5.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.numeric_tolerance <= 0:
            raise ValueError("numeric_tolerance must be > 0")
        if self.sandbox_timeout <= 0:
            raise ValueError("sandbox_timeout must be > 0")


class DatasetError(ValueError):
    """Raised for malformed dataset files; carries the offending line number."""


def _answer_key_from_value(value: Any, line_no: int) -> AnswerKey:
    if isinstance(value, bool):
        return AnswerKey.categorical("yes" if value else "no")
    if isinstance(value, (int, float)):
        if not math.isfinite(float(value)):
            raise DatasetError(f"line {line_no}: answer must be finite")
        return AnswerKey.numeric(float(value))
    if isinstance(value, str):
        if not normalize_label(value):
            raise DatasetError(f"line {line_no}: string answer is empty after normalization")
        return AnswerKey.categorical(value)
    raise DatasetError(f"line {line_no}: answer must be a number or a string")


def load_dataset(path: str | Path) -> list[TaskExample]:
    """Read a dataset file: one JSON record per line with fields
    {id, question, answer, split}; lines beginning with '#' are ignored."""
    examples: list[TaskExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            try:
                example_id = str(record["id"])
                question = str(record["question"])
                answer = record["answer"]
                split = Split(record["split"])
            except KeyError as exc:
                raise DatasetError(f"line {line_no}: missing field {exc.args[0]!r}") from exc
            except ValueError as exc:
                raise DatasetError(f"line {line_no}: {exc}") from exc
            if not example_id:
                raise DatasetError(f"line {line_no}: empty id")
            if example_id in seen:
                raise DatasetError(f"line {line_no}: duplicate id {example_id!r}")
            if not question:
                raise DatasetError(f"line {line_no}: empty question")
            seen.add(example_id)
            examples.append(
                TaskExample(
                    id=example_id,
                    question=question,
                    answer_key=_answer_key_from_value(answer, line_no),
                    split=split,
                )
            )
    return examples


def dump_dataset(examples: Iterable[TaskExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            key = example.answer_key
            answer: Any = key.numeric_value if key.kind is AnswerKind.NUMERIC else key.label
            fh.write(
                json.dumps(
                    {
                        "id": example.id,
                        "question": example.question,
                        "answer": answer,
                        "split": example.split.value,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
