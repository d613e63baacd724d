"""Extract answers and artifacts from raw model completions.

Few-shot models keep generating past their own answer, fabricating new
questions, so every extractor first truncates the completion at a stop
sequence before looking for the answer. All parsing failures are values,
not exceptions, except parse_number which raises UnparseableNumber.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

ANSWER_PHRASE = "the answer is"

# A blank line separates few-shot exemplars in the solving prompts; "Q:"
# starts one in the translation prompts.
DEFAULT_TEXT_STOPS: tuple[str, ...] = ("\nQ:", "\n\n")
DEFAULT_CODE_STOPS: tuple[str, ...] = ('\n\n"""',)

_NUMBER_TOKEN = re.compile(r"[-+]?[$€£]?\s?\d[\d,]*(?:\.\d+)?%?")
_SOLUTION_DEF = re.compile(r"^def\s+solution\s*\(")


class FailureReason(enum.Enum):
    NO_ANSWER_PHRASE = "no_answer_phrase"
    NO_FUNCTION = "no_function"
    UNPARSEABLE_NUMBER = "unparseable_number"


@dataclass(frozen=True, slots=True)
class ExtractionResult:
    """Artifact plus either an answer literal (text method) or a failure.

    Code-method extraction yields only the artifact; its answer comes from
    execution.
    """

    artifact: str
    answer_literal: str | None = None
    failure_reason: FailureReason | None = None

    def __post_init__(self) -> None:
        if self.answer_literal is not None and self.failure_reason is not None:
            raise ValueError("an extraction cannot both succeed and fail")

    @property
    def failed(self) -> bool:
        return self.failure_reason is not None


class UnparseableNumber(ValueError):
    """The literal does not denote a finite number."""

    reason = FailureReason.UNPARSEABLE_NUMBER


def truncate_completion(completion: str, stop_sequences: tuple[str, ...]) -> str:
    """Cut the completion at the earliest occurrence of any stop sequence."""
    cut = len(completion)
    for stop in stop_sequences:
        idx = completion.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return completion[:cut]


def extract_cot_answer(
    completion: str, stop_sequences: tuple[str, ...] = DEFAULT_TEXT_STOPS
) -> ExtractionResult:
    """Pull the final answer out of a chain-of-thought completion.

    The artifact is the completion truncated at the first few-shot delimiter;
    the answer literal follows the last occurrence of "the answer is"
    (case-insensitive). Prefers a number token; falls back to the trailing
    word phrase so categorical answers ("The answer is yes.") survive.
    """
    artifact = truncate_completion(completion, stop_sequences).strip()
    idx = artifact.lower().rfind(ANSWER_PHRASE)
    if idx < 0:
        return ExtractionResult(artifact, failure_reason=FailureReason.NO_ANSWER_PHRASE)
    tail = artifact[idx + len(ANSWER_PHRASE):].split("\n", 1)[0]
    match = _NUMBER_TOKEN.search(tail)
    if match:
        return ExtractionResult(artifact, answer_literal=match.group().strip())
    phrase = tail.split(".", 1)[0].strip()
    if phrase:
        return ExtractionResult(artifact, answer_literal=phrase)
    return ExtractionResult(artifact, failure_reason=FailureReason.NO_ANSWER_PHRASE)


def parse_number(literal: str) -> float:
    """Parse an answer literal into a float.

    Tolerates leading currency symbols, thousands separators, surrounding
    whitespace, a trailing period, and simple percent forms ("15%" -> 15).
    Raises UnparseableNumber for anything else.
    """
    if not literal or not literal.strip():
        raise UnparseableNumber(literal)
    text = literal.strip().rstrip(".").strip()
    sign = ""
    if text[:1] in "+-":
        sign, text = text[0], text[1:].lstrip()
    while text[:1] in "$€£":
        text = text[1:].lstrip()
    if text.endswith("%"):
        text = text[:-1].strip()
    text = text.replace(",", "")
    if not text:
        raise UnparseableNumber(literal)
    try:
        value = float(sign + text)
    except ValueError:
        raise UnparseableNumber(literal) from None
    if not math.isfinite(value):
        raise UnparseableNumber(literal)
    return value


def extract_code_artifact(
    completion: str,
    stop_sequences: tuple[str, ...] = DEFAULT_CODE_STOPS,
    header: str = "def solution():",
) -> ExtractionResult:
    """Reconstruct the first complete `solution` definition from a completion.

    Two layouts occur: the completion restates the whole definition, or it
    continues the body of the header the prompt supplied. Either way the body
    ends at the first non-blank line back at column 0, and everything after
    the first complete definition is discarded.
    """
    text = truncate_completion(completion, stop_sequences)
    lines = text.split("\n")

    def_idx = next((i for i, line in enumerate(lines) if _SOLUTION_DEF.match(line)), None)
    if def_idx is not None:
        body = _take_body(lines[def_idx + 1:])
        if not body:
            return ExtractionResult("", failure_reason=FailureReason.NO_FUNCTION)
        return ExtractionResult("\n".join([lines[def_idx], *body]))

    # Continuation: the first line resumes the prompt-supplied header mid-body.
    body = []
    for position, line in enumerate(lines):
        if not line.strip():
            if body:
                body.append(line)
            continue
        if position == 0:
            body.append(line if line[:1].isspace() else "  " + line)
        elif line[:1].isspace():
            body.append(line)
        else:
            break
    while body and not body[-1].strip():
        body.pop()
    if not body:
        return ExtractionResult("", failure_reason=FailureReason.NO_FUNCTION)
    return ExtractionResult("\n".join([header, *body]))


def _take_body(lines: list[str]) -> list[str]:
    body: list[str] = []
    for line in lines:
        if not line.strip():
            body.append(line)
            continue
        if not line[:1].isspace():
            break
        body.append(line)
    while body and not body[-1].strip():
        body.pop()
    return body
