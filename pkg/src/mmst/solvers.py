"""Completion providers: a remote completion-endpoint client and a
statistically configurable simulator for desk-scale verification.

The simulator realizes correlated per-example success: each (example,
sample_index) pair gets one latent bivariate standard normal draw with
correlation rho, derived counter-style by hashing (seed, example id, sample
index). That keeps text/code verdicts paired for the same sample and makes
every draw independent of worker scheduling order.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import requests
import yaml
from scipy.special import ndtri
from scipy.stats import multivariate_normal

from .core import AnswerKey, AnswerKind, MethodKind, Split, TaskExample

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "MMST_ENDPOINT_TOKEN"

_PLACEHOLDER_RE = re.compile(r"\{(question|answer|code)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """A named prompt body with {question}/{answer}/{code} placeholders."""

    name: str
    method: MethodKind
    body: str
    stop_sequences: tuple[str, ...] = ()

    def placeholders(self) -> set[str]:
        scan = self.body.replace("{{", "").replace("}}", "")
        return set(_PLACEHOLDER_RE.findall(scan))

    def render(self, **fields: str) -> str:
        try:
            text = self.body.format(**fields)
        except (KeyError, IndexError) as exc:
            raise TemplateError(f"template {self.name!r}: unbound placeholder {exc}") from exc
        if _PLACEHOLDER_RE.search(text):
            raise TemplateError(f"template {self.name!r}: residual placeholder after render")
        return text


def parse_template(text: str, origin: str = "<string>") -> PromptTemplate:
    """Parse a template file: a YAML front-matter header between '---' lines
    (name, method, stop sequences), then the body verbatim."""
    if not text.startswith("---\n"):
        raise TemplateError(f"{origin}: missing front-matter header")
    try:
        header_text, body = text[4:].split("\n---\n", 1)
    except ValueError:
        raise TemplateError(f"{origin}: unterminated front-matter header") from None
    header = yaml.safe_load(header_text)
    if not isinstance(header, dict) or "name" not in header or "method" not in header:
        raise TemplateError(f"{origin}: front matter needs 'name' and 'method'")
    stop = header.get("stop") or []
    if not isinstance(stop, list) or not all(isinstance(s, str) for s in stop):
        raise TemplateError(f"{origin}: 'stop' must be a list of strings")
    return PromptTemplate(
        name=str(header["name"]),
        method=MethodKind(header["method"]),
        body=body,
        stop_sequences=tuple(stop),
    )


def load_template(path: str | Path) -> PromptTemplate:
    return parse_template(Path(path).read_text(encoding="utf-8"), origin=str(path))


def load_templates(directory: str | Path) -> dict[str, PromptTemplate]:
    registry: dict[str, PromptTemplate] = {}
    for path in sorted(Path(directory).glob("*.prompt")):
        template = load_template(path)
        if template.name in registry:
            raise TemplateError(f"duplicate template name {template.name!r}")
        registry[template.name] = template
    if not registry:
        raise TemplateError(f"no *.prompt files under {directory}")
    return registry


def builtin_templates() -> dict[str, PromptTemplate]:
    """The packaged prompt registry."""
    registry: dict[str, PromptTemplate] = {}
    root = resources.files("mmst.prompts")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".prompt"):
            template = parse_template(entry.read_text(encoding="utf-8"), origin=entry.name)
            registry[template.name] = template
    return registry


def solve_template(registry: dict[str, PromptTemplate], method: MethodKind) -> PromptTemplate:
    return registry[f"{method.value}_solve"]


def translate_template(
    registry: dict[str, PromptTemplate], source: MethodKind, target: MethodKind
) -> PromptTemplate:
    return registry[f"translate_{source.value}_to_{target.value}"]


class SolverKind(enum.Enum):
    REMOTE = "remote"
    SIMULATED = "simulated"


@dataclass(frozen=True, slots=True)
class DecodingParams:
    top_p: float = 0.9
    temperature: float = 0.2
    max_tokens: int = 512
    stop: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def implied_joint_success(p_text: float, p_code: float, rho: float) -> float:
    """P(both methods succeed) under the latent Gaussian model."""
    if p_text == 0.0 or p_code == 0.0:
        return 0.0
    if p_text == 1.0:
        return p_code
    if p_code == 1.0:
        return p_text
    if rho >= 1.0:
        return min(p_text, p_code)
    if rho <= -1.0:
        return max(0.0, p_text + p_code - 1.0)
    h1, h2 = ndtri(p_text), ndtri(p_code)
    return float(multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]]).cdf([h1, h2]))


def check_feasible(p_text: float, p_code: float, rho: float, tol: float = 1e-9) -> None:
    """Validate (p_text, p_code, rho): ranges plus Frechet bounds on the
    implied joint Bernoulli."""
    for name, p in (("p_text", p_text), ("p_code", p_code)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [-1, 1], got {rho}")
    p11 = implied_joint_success(p_text, p_code, rho)
    lower = max(0.0, p_text + p_code - 1.0)
    upper = min(p_text, p_code)
    if not lower - tol <= p11 <= upper + tol:
        raise ValueError(
            f"infeasible joint: implied P(both)={p11:.6g} outside Frechet bounds "
            f"[{lower:.6g}, {upper:.6g}]"
        )


def implied_bernoulli_correlation(p_text: float, p_code: float, rho: float) -> float | None:
    """Correlation of the two success indicators; None when a marginal is
    degenerate (p in {0, 1})."""
    q1, q2 = 1.0 - p_text, 1.0 - p_code
    denom = math.sqrt(p_text * q1 * p_code * q2)
    if denom == 0.0:
        return None
    p11 = implied_joint_success(p_text, p_code, rho)
    return (p11 - p_text * p_code) / denom


@dataclass(frozen=True, slots=True)
class SimModel:
    """Per-method success probabilities plus the latent correlation."""

    p_text: float
    p_code: float
    rho: float

    def __post_init__(self) -> None:
        check_feasible(self.p_text, self.p_code, self.rho)

    def success_probability(self, method: MethodKind) -> float:
        return self.p_text if method is MethodKind.TEXT else self.p_code


@dataclass(frozen=True, slots=True)
class SolverSpec:
    kind: SolverKind
    decoding: DecodingParams = field(default_factory=DecodingParams)
    endpoint_url: str | None = None
    sim_model: SimModel | None = None
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.kind is SolverKind.REMOTE and not self.endpoint_url:
            raise ValueError("remote solver requires endpoint_url")
        if self.kind is SolverKind.SIMULATED and self.sim_model is None:
            raise ValueError("simulated solver requires sim_model")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def latent_uniforms(seed: int, example_id: str, sample_index: int) -> tuple[float, float]:
    """Two uniforms in (0,1), keyed by (seed, example id, sample index)."""
    digest = hashlib.blake2b(
        example_id.encode("utf-8") + b"\x00" + sample_index.to_bytes(8, "little"),
        digest_size=16,
        key=b"mmst.latent" + seed.to_bytes(8, "little", signed=True),
    ).digest()
    u1 = (int.from_bytes(digest[:8], "little") + 0.5) / 2.0**64
    u2 = (int.from_bytes(digest[8:], "little") + 0.5) / 2.0**64
    return u1, u2


def method_success(
    sim: SimModel, seed: int, example_id: str, sample_index: int
) -> dict[MethodKind, bool]:
    """One correlated success draw for both methods."""
    u1, u2 = latent_uniforms(seed, example_id, sample_index)
    z1 = float(ndtri(u1))
    z2 = float(ndtri(u2))
    zc = sim.rho * z1 + math.sqrt(max(0.0, 1.0 - sim.rho**2)) * z2
    return {
        MethodKind.TEXT: z1 < ndtri(sim.p_text),
        MethodKind.CODE: zc < ndtri(sim.p_code),
    }


def success_matrix(
    sim: SimModel, seed: int, example_ids: list[str], k: int
) -> np.ndarray:
    """Any-correct-over-k indicators, shape (n_examples, 2), columns
    (text, code). Identical to per-call method_success draws."""
    n = len(example_ids)
    u = np.empty((n, k, 2))
    for i, example_id in enumerate(example_ids):
        for j in range(k):
            u[i, j, 0], u[i, j, 1] = latent_uniforms(seed, example_id, j)
    z1 = ndtri(u[:, :, 0])
    z2 = ndtri(u[:, :, 1])
    zc = sim.rho * z1 + math.sqrt(max(0.0, 1.0 - sim.rho**2)) * z2
    text_ok = z1 < ndtri(sim.p_text)
    code_ok = zc < ndtri(sim.p_code)
    return np.stack([text_ok.any(axis=1), code_ok.any(axis=1)], axis=1)


def format_gold(key: AnswerKey) -> str:
    if key.kind is AnswerKind.CATEGORICAL:
        return str(key.label)
    value = float(key.numeric_value)  # type: ignore[arg-type]
    return str(int(value)) if value.is_integer() else repr(value)


def _wrong_answer(key: AnswerKey) -> str:
    if key.kind is AnswerKind.CATEGORICAL:
        return f"not {key.label}"
    return format_gold(AnswerKey.numeric(float(key.numeric_value) + 1.0))  # type: ignore[arg-type]


def emit_solution(example: TaskExample, method: MethodKind, correct: bool) -> str:
    """A well-formed completion in the method's surface syntax.

    Deliberately byte-stable per (example, method, correctness) so that exact
    dedup collapses repeat successes for the same example.
    """
    key = example.answer_key
    answer = format_gold(key) if correct else _wrong_answer(key)
    if method is MethodKind.TEXT:
        return (
            f"Reading the problem, the quantities combine into a single result. "
            f"The answer is {answer}."
        )
    if key.kind is AnswerKind.CATEGORICAL:
        raise ValueError("the simulator cannot emit code for categorical answer keys")
    return f"def solution():\n  # Given\n  result = {answer}\n  return result"


class SolverError(RuntimeError):
    """A completion request failed after retries; the stage records it and
    continues."""


class SimulatedSolver:
    """Synthesizes completions whose verdicts follow the configured model."""

    def __init__(self, spec: SolverSpec, seed: int):
        if spec.sim_model is None:
            raise ValueError("spec has no sim_model")
        self.spec = spec
        self.sim = spec.sim_model
        self.seed = seed

    def complete(
        self,
        prompt: str,
        n: int,
        *,
        stop: tuple[str, ...] = (),
        example: TaskExample | None = None,
        method: MethodKind | None = None,
        purpose: str = "solve",
    ) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        if example is None or method is None:
            raise ValueError("the simulated solver needs example/method context")
        completions = []
        for index in range(n):
            if purpose == "translate":
                correct = True  # translations succeed by construction
            else:
                correct = method_success(self.sim, self.seed, example.id, index)[method]
            completions.append(emit_solution(example, method, correct))
        return completions


class RemoteSolver:
    """Minimal completion-endpoint client.

    Wire contract: POST {prompt, n, temperature, top_p, max_tokens, stop[]}
    -> {completions: [text]}. Bearer token read from MMST_ENDPOINT_TOKEN.
    Transient failures retry with exponential backoff, at most 5 attempts.
    """

    MAX_ATTEMPTS = 5

    def __init__(self, spec: SolverSpec, *, retry_base_s: float = 0.5, timeout_s: float = 60.0):
        if not spec.endpoint_url:
            raise ValueError("spec has no endpoint_url")
        self.spec = spec
        self.retry_base_s = retry_base_s
        self.timeout_s = timeout_s
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(spec.max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(
        self,
        prompt: str,
        n: int,
        *,
        stop: tuple[str, ...] = (),
        example: TaskExample | None = None,
        method: MethodKind | None = None,
        purpose: str = "solve",
    ) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        decoding = self.spec.decoding
        payload = {
            "prompt": prompt,
            "n": n,
            "temperature": decoding.temperature,
            "top_p": decoding.top_p,
            "max_tokens": decoding.max_tokens,
            "stop": list(stop or decoding.stop),
        }
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            if attempt:
                logger.debug("retrying completion (attempt %d/%d): %s",
                             attempt + 1, self.MAX_ATTEMPTS, last_error)
                time.sleep(self.retry_base_s * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = self._session.post(
                        self.spec.endpoint_url,
                        json=payload,
                        headers=self._headers(),
                        timeout=self.timeout_s,
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (429,) or response.status_code >= 500:
                last_error = SolverError(f"endpoint returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise SolverError(f"endpoint returned {response.status_code}: {response.text[:200]}")
            try:
                completions = response.json()["completions"]
            except (ValueError, KeyError) as exc:
                raise SolverError(f"malformed endpoint response: {exc}") from exc
            if not isinstance(completions, list) or len(completions) != n:
                raise SolverError(f"endpoint returned {len(completions)} completions, wanted {n}")
            return [str(c) for c in completions]
        raise SolverError(f"endpoint unreachable after {self.MAX_ATTEMPTS} attempts: {last_error}")


Solver = SimulatedSolver | RemoteSolver


def build_solver(spec: SolverSpec, seed: int) -> Solver:
    if spec.kind is SolverKind.SIMULATED:
        return SimulatedSolver(spec, seed)
    return RemoteSolver(spec)


def make_synthetic_dataset(n_examples: int, split_test_fraction: float = 0.0) -> list[TaskExample]:
    """Synthetic numeric word problems for simulator-driven runs and sweeps."""
    examples = []
    n_test = int(n_examples * split_test_fraction)
    for i in range(n_examples):
        examples.append(
            TaskExample(
                id=f"sim-{i:06d}",
                question=f"A bin holds {i % 23 + 2} parts and gains {i % 7 + 1} more. How many parts are in the bin?",
                answer_key=AnswerKey.numeric(float((i % 23 + 2) + (i % 7 + 1))),
                split=Split.TEST if i < n_test else Split.TRAIN,
            )
        )
    return examples
