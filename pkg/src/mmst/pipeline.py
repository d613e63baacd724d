"""The self-training loop: generate, pseudo-label, translate, assemble.

Stages are sequential barriers; within a stage, examples are handled by a
worker pool and records are sorted by (example_id, method, sample_index)
before persisting, so output bytes never depend on scheduling. Every stage
writes a line-delimited record file under runs/<run_id>/<stage>/ plus a
ledger entry; completed stages are skipped on rerun unless forced.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .core import (
    AnswerKind,
    CandidateSolution,
    MethodKind,
    Provenance,
    RunConfig,
    Split,
    TaskExample,
    TrainingRecord,
    Verdict,
    load_dataset,
    match_answer,
)
from .parsers import (
    UnparseableNumber,
    extract_code_artifact,
    extract_cot_answer,
    parse_number,
)
from .sandbox import ExecutionStatus, Sandbox
from .solvers import (
    DecodingParams,
    PromptTemplate,
    SimModel,
    Solver,
    SolverError,
    SolverKind,
    SolverSpec,
    build_solver,
    builtin_templates,
    load_templates,
    make_synthetic_dataset,
    solve_template,
    translate_template,
)

logger = logging.getLogger(__name__)

STAGE_ORDER = ("generate", "label", "translate", "assemble")
ALL_METHODS = (MethodKind.TEXT, MethodKind.CODE)


class PipelineError(RuntimeError):
    """A stage failed in a way that should stop the run."""


class EvaluationAborted(RuntimeError):
    """The solver became unreachable; progress is checkpointed for resume."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one run needs: sampling config, solver, dataset, knobs."""

    run: RunConfig
    solver: SolverSpec
    run_id: str
    dataset_path: str | None = None
    synthetic_examples: int | None = None
    runs_dir: str = "runs"
    methods: tuple[MethodKind, ...] = ALL_METHODS
    translate: bool = True
    limit: int | None = None
    workers: int = 1
    prompts_dir: str | None = None
    runner_command: tuple[str, ...] | None = None
    restart_per_call: bool = False

    def __post_init__(self) -> None:
        if not self.run_id:
            raise ValueError("run_id must be nonempty")
        if bool(self.dataset_path) == bool(self.synthetic_examples):
            raise ValueError("exactly one of dataset_path / synthetic_examples is required")
        if self.limit is not None and self.limit < 1:
            raise ValueError("limit must be >= 1 when set")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        data = dict(data)
        solver_data = dict(data.pop("solver", {}))
        kind = SolverKind(solver_data.pop("kind", "simulated"))
        decoding = DecodingParams(
            top_p=float(data.get("top_p", 0.9)),
            temperature=float(data.get("temperature", 0.2)),
            max_tokens=int(solver_data.pop("max_tokens", 512)),
            stop=tuple(solver_data.pop("stop", ()) or ()),
        )
        sim_model = None
        if kind is SolverKind.SIMULATED:
            sim_model = SimModel(
                p_text=float(solver_data.pop("p_text", 0.5)),
                p_code=float(solver_data.pop("p_code", 0.5)),
                rho=float(solver_data.pop("rho", 0.0)),
            )
        spec = SolverSpec(
            kind=kind,
            decoding=decoding,
            endpoint_url=solver_data.pop("endpoint_url", None),
            sim_model=sim_model,
            max_in_flight=int(solver_data.pop("max_in_flight", 8)),
        )
        if solver_data:
            raise ValueError(f"unknown solver keys: {sorted(solver_data)}")
        run = RunConfig(
            k=int(data.pop("k")),
            seed=int(data.pop("seed")),
            top_p=float(data.pop("top_p", 0.9)),
            temperature=float(data.pop("temperature", 0.2)),
            epochs=int(data.pop("epochs", 6)),
            learning_rate=float(data.pop("learning_rate", 1e-5)),
            batch_size=int(data.pop("batch_size", 32)),
            numeric_tolerance=float(data.pop("numeric_tolerance", 1e-6)),
            sandbox_timeout=float(data.pop("sandbox_timeout", 5.0)),
        )
        methods = tuple(MethodKind(m) for m in data.pop("methods", ["text", "code"]))
        runner_command = data.pop("runner_command", None)
        config = cls(
            run=run,
            solver=spec,
            run_id=str(data.pop("run_id")),
            dataset_path=data.pop("dataset", None),
            synthetic_examples=data.pop("synthetic_examples", None),
            runs_dir=str(data.pop("runs_dir", "runs")),
            methods=methods,
            translate=bool(data.pop("translate", True)),
            limit=data.pop("limit", None),
            workers=int(data.pop("workers", 1)),
            prompts_dir=data.pop("prompts_dir", None),
            runner_command=tuple(runner_command) if runner_command else None,
            restart_per_call=bool(data.pop("restart_per_call", False)),
        )
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        def encode(value: Any) -> Any:
            if isinstance(value, MethodKind | SolverKind):
                return value.value
            if isinstance(value, tuple):
                return [encode(v) for v in value]
            if hasattr(value, "__dataclass_fields__"):
                return {k: encode(v) for k, v in asdict(value).items()}
            if isinstance(value, dict):
                return {k: encode(v) for k, v in value.items()}
            return value

        canonical = json.dumps(encode(asdict(self)), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def load_examples(self) -> list[TaskExample]:
        if self.dataset_path:
            return load_dataset(self.dataset_path)
        return make_synthetic_dataset(int(self.synthetic_examples))

    def templates(self) -> dict[str, PromptTemplate]:
        if self.prompts_dir:
            return load_templates(self.prompts_dir)
        return builtin_templates()


@dataclass
class StageLedger:
    run_id: str
    stage: str
    input_count: int
    output_count: int
    verdicts: dict[str, int]
    config_hash: str
    wall_time_s: float
    skipped: bool = False

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunDirectory:
    """Layout and completion markers for one run under runs/<run_id>/.

    The manifest records a stage as complete only with the checksums of its
    full output file set; a marker is valid iff every file still matches.
    """

    def __init__(self, runs_dir: str | Path, run_id: str):
        self.root = Path(runs_dir) / run_id
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        self.ledger_path = self.root / "ledger.json"

    def stage_dir(self, stage: str) -> Path:
        path = self.root / stage
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _manifest(self) -> dict[str, Any]:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return {"stages": {}}

    def record_stage(self, stage: str, files: Sequence[Path], config_hash: str, run_id: str) -> None:
        manifest = self._manifest()
        manifest["run_id"] = run_id
        # the hash lives per stage: a config change must invalidate every
        # stage individually, not just the first one recomputed
        manifest["stages"][stage] = {
            "config_hash": config_hash,
            "files": {str(p.relative_to(self.root)): _sha256_file(p) for p in files},
        }
        self.manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def stage_complete(self, stage: str, config_hash: str) -> bool:
        manifest = self._manifest()
        entry = manifest["stages"].get(stage)
        if not entry or entry.get("config_hash") != config_hash:
            return False
        for rel, digest in entry["files"].items():
            path = self.root / rel
            if not path.exists() or _sha256_file(path) != digest:
                return False
        return True

    def stage_files(self, stage: str) -> list[Path]:
        manifest = self._manifest()
        entry = manifest["stages"].get(stage, {"files": {}})
        return [self.root / rel for rel in entry["files"]]

    def write_ledger(self, config: PipelineConfig, entries: list[StageLedger]) -> None:
        payload = {
            "run_id": config.run_id,
            "config": json.loads(
                json.dumps(asdict(config), default=lambda v: getattr(v, "value", str(v)))
            ),
            "stages": [entry.as_dict() for entry in entries],
        }
        self.ledger_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def write_jsonl(path: Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _candidate_sort_key(candidate: CandidateSolution) -> tuple:
    return (candidate.example_id, candidate.method.value, candidate.sample_index)


def _judge_text(
    completion: str,
    example: TaskExample,
    template: PromptTemplate,
    tolerance: float,
    sample_index: int,
) -> CandidateSolution:
    result = extract_cot_answer(completion, template.stop_sequences or ("\nQ:", "\n\n"))
    if result.failed:
        return CandidateSolution(
            example.id, MethodKind.TEXT, completion, result.artifact, None,
            Verdict.EXTRACTION_FAILED, sample_index,
        )
    literal = result.answer_literal or ""
    extracted: float | str
    if example.answer_key.kind is AnswerKind.NUMERIC:
        try:
            extracted = parse_number(literal)
        except UnparseableNumber:
            return CandidateSolution(
                example.id, MethodKind.TEXT, completion, result.artifact, None,
                Verdict.EXTRACTION_FAILED, sample_index,
            )
    else:
        extracted = literal
    verdict = (
        Verdict.CORRECT
        if match_answer(extracted, example.answer_key, tolerance)
        else Verdict.INCORRECT
    )
    return CandidateSolution(
        example.id, MethodKind.TEXT, completion, result.artifact, extracted, verdict, sample_index
    )


def _judge_code(
    completion: str,
    example: TaskExample,
    template: PromptTemplate,
    sandbox: Sandbox,
    tolerance: float,
    timeout: float,
    sample_index: int,
) -> CandidateSolution:
    result = extract_code_artifact(completion, template.stop_sequences or ('\n\n"""',))
    if result.failed:
        return CandidateSolution(
            example.id, MethodKind.CODE, completion, result.artifact, None,
            Verdict.EXTRACTION_FAILED, sample_index,
        )
    outcome = sandbox.execute(result.artifact, timeout)
    if outcome.status is ExecutionStatus.TIMEOUT:
        verdict, extracted = Verdict.TIMEOUT, None
    elif outcome.status is ExecutionStatus.ERROR:
        verdict, extracted = Verdict.EXECUTION_ERROR, None
    elif outcome.status is ExecutionStatus.NONNUMERIC:
        # no numeric answer to check: treated as a failed extraction
        verdict, extracted = Verdict.EXTRACTION_FAILED, None
    else:
        extracted = outcome.value
        verdict = (
            Verdict.CORRECT
            if match_answer(extracted, example.answer_key, tolerance)
            else Verdict.INCORRECT
        )
    return CandidateSolution(
        example.id, MethodKind.CODE, completion, result.artifact, extracted, verdict, sample_index
    )


def _failure_candidates(
    example: TaskExample, method: MethodKind, k: int
) -> list[CandidateSolution]:
    return [
        CandidateSolution(example.id, method, "", "", None, Verdict.EXTRACTION_FAILED, index)
        for index in range(k)
    ]


def generate_stage(
    examples: Sequence[TaskExample],
    methods: Sequence[MethodKind],
    k: int,
    solver: Solver,
    sandbox: Sandbox,
    templates: dict[str, PromptTemplate],
    config: RunConfig,
    workers: int = 1,
) -> list[CandidateSolution]:
    """Sample k candidates per (train example, method), parse and judge each.

    Emits exactly |train| * |methods| * k records; solver failures become
    extraction-failed records rather than aborting the run.
    """
    train = [e for e in examples if e.split is Split.TRAIN]
    if not train:
        raise PipelineError("dataset has no train split")
    if k < 1:
        raise PipelineError("k must be >= 1")

    def handle(task: tuple[TaskExample, MethodKind]) -> list[CandidateSolution]:
        example, method = task
        template = solve_template(templates, method)
        prompt = template.render(question=example.question)
        try:
            completions = solver.complete(
                prompt, k, stop=template.stop_sequences, example=example, method=method
            )
        except SolverError as exc:
            logger.warning("solver failed for %s/%s: %s", example.id, method.value, exc)
            return _failure_candidates(example, method, k)
        judged = []
        for index, completion in enumerate(completions):
            if method is MethodKind.TEXT:
                judged.append(
                    _judge_text(completion, example, template, config.numeric_tolerance, index)
                )
            else:
                judged.append(
                    _judge_code(
                        completion, example, template, sandbox,
                        config.numeric_tolerance, config.sandbox_timeout, index,
                    )
                )
        return judged

    tasks = [(example, method) for example in train for method in methods]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(handle, tasks))
    else:
        batches = [handle(task) for task in tasks]
    candidates = [candidate for batch in batches for candidate in batch]
    candidates.sort(key=_candidate_sort_key)
    expected = len(train) * len(methods) * k
    if len(candidates) != expected:
        raise PipelineError(f"conservation violated: {len(candidates)} records, expected {expected}")
    return candidates


def label_stage(candidates: Sequence[CandidateSolution], sandbox: Sandbox) -> list[CandidateSolution]:
    """Keep positives only: verdict == correct, code artifacts cleaned, exact
    duplicate artifacts per (example, method) dropped."""
    positives = []
    seen: set[tuple[str, str, str]] = set()
    for candidate in sorted(candidates, key=_candidate_sort_key):
        if candidate.verdict is not Verdict.CORRECT:
            continue
        artifact = candidate.artifact
        if candidate.method is MethodKind.CODE:
            artifact = sandbox.cleanup(artifact)
        key = (candidate.example_id, candidate.method.value, artifact)
        if key in seen:
            continue
        seen.add(key)
        positives.append(
            CandidateSolution(
                candidate.example_id, candidate.method, candidate.raw_completion,
                artifact, candidate.extracted_answer, candidate.verdict, candidate.sample_index,
            )
        )
    return positives


def _validate_target(
    completion: str,
    example: TaskExample,
    target: MethodKind,
    templates: dict[str, PromptTemplate],
    sandbox: Sandbox,
    config: RunConfig,
) -> tuple[str, bool]:
    """Parse a translated completion under the target method and check it
    reproduces the gold answer. Returns (target_text, validated)."""
    template = solve_template(templates, target)
    if target is MethodKind.TEXT:
        judged = _judge_text(completion, example, template, config.numeric_tolerance, 0)
        return judged.artifact, judged.verdict is Verdict.CORRECT
    judged = _judge_code(
        completion, example, template, sandbox, config.numeric_tolerance,
        config.sandbox_timeout, 0,
    )
    artifact = judged.artifact
    if judged.verdict is Verdict.CORRECT:
        artifact = sandbox.cleanup(artifact)
    return artifact, judged.verdict is Verdict.CORRECT


def translate_stage(
    positives: Sequence[CandidateSolution],
    examples: Sequence[TaskExample],
    solver: Solver,
    sandbox: Sandbox,
    templates: dict[str, PromptTemplate],
    config: RunConfig,
    methods: Sequence[MethodKind] = ALL_METHODS,
    translate: bool = True,
    workers: int = 1,
) -> list[TrainingRecord]:
    """Emit a native record per positive plus, when translation is enabled,
    one re-validated translated record per other method.

    Single-method self-training is this same stage with translate=False.
    Invalid translations are kept (validated=false) and excluded from
    assembly; failed translation completions are dropped with a ledger count.
    """
    by_id = {example.id: example for example in examples}

    def handle(positive: CandidateSolution) -> list[TrainingRecord]:
        example = by_id[positive.example_id]
        source = positive.method
        records = [
            TrainingRecord(
                example_id=example.id,
                target_method=source,
                source_method=source,
                input_text=solve_template(templates, source).render(question=example.question),
                target_text=positive.artifact,
                provenance=Provenance.NATIVE,
                validated=True,
            )
        ]
        if not translate:
            return records
        for target in methods:
            if target is source:
                continue
            template = translate_template(templates, source, target)
            fields = {"question": example.question}
            if "answer" in template.placeholders():
                fields["answer"] = positive.artifact
            if "code" in template.placeholders():
                fields["code"] = positive.artifact
            prompt = template.render(**fields)
            try:
                completion = solver.complete(
                    prompt, 1, stop=template.stop_sequences,
                    example=example, method=target, purpose="translate",
                )[0]
            except SolverError as exc:
                logger.warning(
                    "translation failed for %s %s->%s: %s",
                    example.id, source.value, target.value, exc,
                )
                continue
            target_text, validated = _validate_target(
                completion, example, target, templates, sandbox, config
            )
            records.append(
                TrainingRecord(
                    example_id=example.id,
                    target_method=target,
                    source_method=source,
                    input_text=solve_template(templates, target).render(question=example.question),
                    target_text=target_text,
                    provenance=Provenance.TRANSLATED,
                    validated=validated,
                )
            )
        return records

    ordered = sorted(positives, key=_candidate_sort_key)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(handle, ordered))
    else:
        batches = [handle(p) for p in ordered]
    records = [record for batch in batches for record in batch]
    records.sort(
        key=lambda r: (r.example_id, r.target_method.value, r.provenance.value, r.source_method.value)
    )
    return records


class AssembleError(PipelineError):
    pass


def assemble_stage(
    records: Sequence[TrainingRecord],
    out_dir: Path,
    config: RunConfig,
    methods: Sequence[MethodKind] = ALL_METHODS,
    limit: int | None = None,
) -> dict[MethodKind, list[Path]]:
    """Write per-method training exports.

    With no limit: one file of all validated records, shuffled under the
    seed. With a limit: one file per epoch, each an independent uniform
    sample of exactly `limit` records drawn without replacement.
    """
    valid = [record for record in records if record.validated]
    written: dict[MethodKind, list[Path]] = {}
    for method_index, method in enumerate(methods):
        rows = [record for record in valid if record.target_method is method]
        rows.sort(key=lambda r: (r.example_id, r.provenance.value, r.source_method.value))
        method_dir = out_dir / method.value
        method_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "method": method.value,
            "records": len(rows),
            "limit": limit,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "top_p": config.top_p,
            "temperature": config.temperature,
            "k": config.k,
            "seed": config.seed,
        }
        (method_dir / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        files = [method_dir / "meta.json"]
        export = lambda r: {
            "input_text": r.input_text,
            "target_text": r.target_text,
            "example_id": r.example_id,
            "provenance": r.provenance.value,
        }
        if limit is None:
            rng = np.random.default_rng([config.seed, method_index])
            order = rng.permutation(len(rows))
            path = method_dir / "all.jsonl"
            write_jsonl(path, (export(rows[i]) for i in order))
            files.append(path)
        else:
            if limit > len(rows):
                raise AssembleError(
                    f"limit {limit} exceeds the {len(rows)} validated records for method "
                    f"{method.value!r}"
                )
            for epoch in range(1, config.epochs + 1):
                rng = np.random.default_rng([config.seed, method_index, epoch])
                chosen = rng.choice(len(rows), size=limit, replace=False)
                path = method_dir / f"epoch_{epoch}.jsonl"
                write_jsonl(path, (export(rows[i]) for i in chosen))
                files.append(path)
        written[method] = files
    return written


@dataclass(frozen=True, slots=True)
class EvalResult:
    accuracy: float
    correct: int
    total: int


def evaluate(
    examples: Sequence[TaskExample],
    method: MethodKind,
    solver: Solver,
    sandbox: Sandbox,
    templates: dict[str, PromptTemplate],
    config: RunConfig,
    split: Split = Split.TEST,
    n_samples: int = 1,
    checkpoint_path: Path | None = None,
) -> EvalResult:
    """Single-sample accuracy on a split: correct / total.

    With a checkpoint path, per-example results are appended as they land and
    already-scored examples are skipped on resume; an unreachable solver
    aborts with the checkpoint intact.
    """
    subset = [e for e in examples if e.split is split]
    if not subset:
        raise PipelineError(f"dataset has no {split.value} split")
    done: dict[str, bool] = {}
    if checkpoint_path is not None and checkpoint_path.exists():
        for row in read_jsonl(checkpoint_path):
            done[row["example_id"]] = bool(row["correct"])
    template = solve_template(templates, method)
    handle = None
    if checkpoint_path is not None:
        checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
        handle = open(checkpoint_path, "a", encoding="utf-8")
    try:
        for example in subset:
            if example.id in done:
                continue
            prompt = template.render(question=example.question)
            try:
                completion = solver.complete(
                    prompt, n_samples, stop=template.stop_sequences,
                    example=example, method=method,
                )[0]
            except SolverError as exc:
                raise EvaluationAborted(
                    f"solver unreachable at example {example.id}; checkpoint retained: {exc}"
                ) from exc
            if method is MethodKind.TEXT:
                judged = _judge_text(completion, example, template, config.numeric_tolerance, 0)
            else:
                judged = _judge_code(
                    completion, example, template, sandbox,
                    config.numeric_tolerance, config.sandbox_timeout, 0,
                )
            correct = judged.verdict is Verdict.CORRECT
            done[example.id] = correct
            if handle is not None:
                handle.write(
                    json.dumps({"example_id": example.id, "correct": correct}, sort_keys=True)
                    + "\n"
                )
                handle.flush()
    finally:
        if handle is not None:
            handle.close()
    correct_count = sum(1 for v in done.values() if v)
    return EvalResult(accuracy=correct_count / len(subset), correct=correct_count, total=len(subset))


def _verdict_histogram(candidates: Sequence[CandidateSolution]) -> dict[str, int]:
    histogram: dict[str, int] = {}
    for candidate in candidates:
        histogram[candidate.verdict.value] = histogram.get(candidate.verdict.value, 0) + 1
    return dict(sorted(histogram.items()))


@dataclass
class RunResult:
    run_dir: RunDirectory
    ledgers: list[StageLedger]


def run_pipeline(
    config: PipelineConfig,
    stages: Sequence[str] = STAGE_ORDER,
    force: bool = False,
) -> RunResult:
    """Execute the requested stages in order, skipping valid completed ones."""
    for stage in stages:
        if stage not in STAGE_ORDER:
            raise ValueError(f"unknown stage {stage!r}")
    stages = [s for s in STAGE_ORDER if s in stages]
    run_dir = RunDirectory(config.runs_dir, config.run_id)
    config_hash = config.config_hash()
    examples = config.load_examples()
    templates = config.templates()
    solver = build_solver(config.solver, config.run.seed)
    ledgers: list[StageLedger] = []

    with Sandbox(
        config.runner_command,
        timeout=config.run.sandbox_timeout,
        restart_per_call=config.restart_per_call,
    ) as sandbox:
        candidates: list[CandidateSolution] | None = None
        positives: list[CandidateSolution] | None = None
        records: list[TrainingRecord] | None = None

        def load_candidates(stage: str) -> list[CandidateSolution]:
            files = run_dir.stage_files(stage)
            if not files:
                raise PipelineError(f"stage {stage!r} has no recorded output to reuse")
            return [CandidateSolution.from_dict(row) for row in read_jsonl(files[0])]

        if "generate" in stages:
            path = run_dir.stage_dir("generate") / "candidates.jsonl"
            if not force and run_dir.stage_complete("generate", config_hash):
                candidates = [CandidateSolution.from_dict(r) for r in read_jsonl(path)]
                ledgers.append(
                    StageLedger(config.run_id, "generate", len(examples), len(candidates),
                                _verdict_histogram(candidates), config_hash, 0.0, skipped=True)
                )
            else:
                start = time.monotonic()
                candidates = generate_stage(
                    examples, config.methods, config.run.k, solver, sandbox,
                    templates, config.run, workers=config.workers,
                )
                write_jsonl(path, (c.as_dict() for c in candidates))
                run_dir.record_stage("generate", [path], config_hash, config.run_id)
                ledgers.append(
                    StageLedger(config.run_id, "generate", len(examples), len(candidates),
                                _verdict_histogram(candidates), config_hash,
                                time.monotonic() - start)
                )

        if "label" in stages:
            if candidates is None:
                candidates = load_candidates("generate")
            path = run_dir.stage_dir("label") / "positives.jsonl"
            if not force and run_dir.stage_complete("label", config_hash):
                positives = [CandidateSolution.from_dict(r) for r in read_jsonl(path)]
                ledgers.append(
                    StageLedger(config.run_id, "label", len(candidates), len(positives),
                                _verdict_histogram(positives), config_hash, 0.0, skipped=True)
                )
            else:
                start = time.monotonic()
                positives = label_stage(candidates, sandbox)
                write_jsonl(path, (p.as_dict() for p in positives))
                run_dir.record_stage("label", [path], config_hash, config.run_id)
                ledgers.append(
                    StageLedger(config.run_id, "label", len(candidates), len(positives),
                                _verdict_histogram(positives), config_hash,
                                time.monotonic() - start)
                )

        if "translate" in stages:
            if positives is None:
                positives = [CandidateSolution.from_dict(r) for r in read_jsonl(
                    run_dir.stage_dir("label") / "positives.jsonl")]
            path = run_dir.stage_dir("translate") / "records.jsonl"
            if not force and run_dir.stage_complete("translate", config_hash):
                records = [TrainingRecord.from_dict(r) for r in read_jsonl(path)]
                histogram = {"validated": sum(r.validated for r in records),
                             "invalid": sum(not r.validated for r in records)}
                ledgers.append(
                    StageLedger(config.run_id, "translate", len(positives), len(records),
                                histogram, config_hash, 0.0, skipped=True)
                )
            else:
                start = time.monotonic()
                records = translate_stage(
                    positives, examples, solver, sandbox, templates, config.run,
                    methods=config.methods, translate=config.translate, workers=config.workers,
                )
                write_jsonl(path, (r.as_dict() for r in records))
                run_dir.record_stage("translate", [path], config_hash, config.run_id)
                histogram = {"validated": sum(r.validated for r in records),
                             "invalid": sum(not r.validated for r in records)}
                ledgers.append(
                    StageLedger(config.run_id, "translate", len(positives), len(records),
                                histogram, config_hash, time.monotonic() - start)
                )

        if "assemble" in stages:
            if records is None:
                records = [TrainingRecord.from_dict(r) for r in read_jsonl(
                    run_dir.stage_dir("translate") / "records.jsonl")]
            if not force and run_dir.stage_complete("assemble", config_hash):
                ledgers.append(
                    StageLedger(config.run_id, "assemble", len(records), 0, {},
                                config_hash, 0.0, skipped=True)
                )
            else:
                start = time.monotonic()
                out_dir = run_dir.stage_dir("assemble")
                written = assemble_stage(
                    records, out_dir, config.run, methods=config.methods, limit=config.limit
                )
                all_files = [p for files in written.values() for p in files]
                run_dir.record_stage("assemble", all_files, config_hash, config.run_id)
                total_lines = sum(
                    1 for files in written.values() for p in files
                    if p.suffix == ".jsonl" for _ in open(p, encoding="utf-8")
                )
                ledgers.append(
                    StageLedger(config.run_id, "assemble", len(records), total_lines, {},
                                config_hash, time.monotonic() - start)
                )

    run_dir.write_ledger(config, ledgers)
    return RunResult(run_dir=run_dir, ledgers=ledgers)
