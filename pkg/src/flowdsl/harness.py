"""Experiment orchestration: OOD splits, config-driven runs, report files.

A run walks every test sample through the full pipeline: retrieve
few-shots with the selected embedder, collect definitions per the
grounding config, assemble the metaprompt, call the completion client,
extract and score the candidate flow.  Outcomes fold into one
MetricsReport per experiment; emit_reports renders a batch of runs as an
absolute table plus signed deltas against a named baseline.

Everything is deterministic given a deterministic embedder and client:
samples may be evaluated concurrently, but records are joined by sample
id and aggregation is permutation-invariant, so completion order never
shows up in a report.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Catalog
from .dsl import extract_api_sequence
from .generation import CompletionRequest, extract_dsl, prompt_digest
from .grounding import (
    GroundingConfig,
    assemble_metaprompt,
    build_sfd_index,
    collect_regular_fds,
    retrieve_sfds,
)
from .metrics import (
    TABLE_COLUMNS,
    EvaluationOutcome,
    MetricsReport,
    aggregate,
    delta_report,
    delta_to_dict,
    render_delta_table,
    render_metrics_table,
    report_from_dict,
    report_to_dict,
    score_sample,
)
from .retrieval import Embedder, SampleIndex, build_index, retrieve_few_shots
from .samples import Sample, load_dataset

SELECTION_MODELS = ("pretrained", "tst")


class HarnessError(Exception):
    """Bad experiment configuration or inconsistent run inputs."""


# ---------------------------------------------------------------------------
# Dataset splitting


@dataclass
class DatasetSplit:
    train: list[Sample]
    test_in_domain: list[Sample]
    test_out_of_domain: list[Sample]
    held_out_apis: list[str]


def _first_api(sample: Sample) -> str:
    sequence = extract_api_sequence(sample.flow)
    return sequence[0] if sequence else ""


def make_ood_split(
    samples: list[Sample],
    held_out_apis: list[str],
    in_domain_fraction: float = 0.1,
    seed: int = 0,
) -> DatasetSplit:
    """Partition samples into train / in-domain test / OOD test.

    Any sample whose flow touches a held-out API goes to the OOD test
    set.  The in-domain test set is sampled from the remainder,
    stratified by each flow's first API name so the test distribution
    tracks the corpus distribution; draws are seed-controlled and
    independent of input order.  The three parts partition the input.
    """
    if not 0 <= in_domain_fraction <= 1:
        raise ValueError("in_domain_fraction must be within [0, 1]")
    ids = [s.id for s in samples]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate sample ids in split input")

    held = set(held_out_apis)
    ood = [s for s in samples if held & set(extract_api_sequence(s.flow))]
    ood_ids = {s.id for s in ood}
    remainder = [s for s in samples if s.id not in ood_ids]

    strata: dict[str, list[Sample]] = {}
    for sample in remainder:
        strata.setdefault(_first_api(sample), []).append(sample)
    rng = random.Random(seed)
    drawn: set[str] = set()
    for key in sorted(strata):
        group = sorted(strata[key], key=lambda s: s.id)
        count = int(len(group) * in_domain_fraction + 0.5)
        drawn.update(s.id for s in rng.sample(group, count))

    train = [s for s in remainder if s.id not in drawn]
    test_in = [s for s in remainder if s.id in drawn]
    return DatasetSplit(
        train=train,
        test_in_domain=test_in,
        test_out_of_domain=ood,
        held_out_apis=sorted(held),
    )


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass
class ExperimentSpec:
    name: str
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    selection_model: str = "pretrained"
    train_path: str = ""
    test_path: str = ""
    catalog_path: str = ""
    baseline_name: str | None = None
    model_name: str = "mock"
    max_output_tokens: int = 512
    temperature: float = 0.0
    concurrency: int = 8
    store_full_prompts: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("experiment name must be non-empty")
        if self.selection_model not in SELECTION_MODELS:
            raise ValueError(
                f"selection_model must be one of {SELECTION_MODELS}, "
                f"not {self.selection_model!r}"
            )
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grounding": self.grounding.to_dict(),
            "selection_model": self.selection_model,
            "train_path": self.train_path,
            "test_path": self.test_path,
            "catalog_path": self.catalog_path,
            "baseline_name": self.baseline_name,
            "model_name": self.model_name,
            "max_output_tokens": self.max_output_tokens,
            "temperature": self.temperature,
            "concurrency": self.concurrency,
            "store_full_prompts": self.store_full_prompts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        allowed = {
            "name", "grounding", "selection_model", "train_path", "test_path",
            "catalog_path", "baseline_name", "model_name", "max_output_tokens",
            "temperature", "concurrency", "store_full_prompts",
        }
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        kwargs = dict(data)
        grounding = kwargs.get("grounding")
        if isinstance(grounding, dict):
            kwargs["grounding"] = GroundingConfig.from_dict(grounding)
        return cls(**kwargs)


def load_experiment_specs(source: str | dict) -> list[ExperimentSpec]:
    """Specs from JSON: a single spec object or {"experiments": [...]}.

    Names must be unique within a batch.
    """
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise HarnessError(f"spec file is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise HarnessError("experiment spec must be a JSON object")
    raw_specs = data.get("experiments") if "experiments" in data else [data]
    if not isinstance(raw_specs, list) or not raw_specs:
        raise HarnessError("'experiments' must be a non-empty list")
    specs = []
    for raw in raw_specs:
        try:
            specs.append(ExperimentSpec.from_dict(raw))
        except (TypeError, ValueError) as exc:
            raise HarnessError(f"bad experiment spec: {exc}") from exc
    names = [s.name for s in specs]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise HarnessError(f"duplicate experiment names: {duplicates}")
    return specs


def load_experiment_specs_file(path: str) -> list[ExperimentSpec]:
    with open(path, encoding="utf-8") as handle:
        return load_experiment_specs(handle.read())


def ablation_specs(
    selection_models: tuple[str, ...] = SELECTION_MODELS,
    few_shot_counts: tuple[int, ...] = (5, 20),
    **overrides,
) -> list[ExperimentSpec]:
    """The full grounding grid: every selection model and shot count
    crossed with the FD and SFD flags.  Defaults give 2x2x2x2 = 16
    specs.  Keyword overrides pass through to every spec."""
    specs = []
    for model in selection_models:
        for count in few_shot_counts:
            for include_fd in (False, True):
                for include_sfd in (False, True):
                    name = f"{model}-{count}shot"
                    if include_fd:
                        name += "-fd"
                    if include_sfd:
                        name += "-sfd"
                    grounding = GroundingConfig(
                        few_shot_count=count,
                        include_fd=include_fd,
                        include_sfd=include_sfd,
                    )
                    specs.append(ExperimentSpec(
                        name=name, grounding=grounding,
                        selection_model=model, **overrides,
                    ))
    return specs


# ---------------------------------------------------------------------------
# Retrieval setup


@dataclass
class RetrievalSetup:
    """Everything one selection model needs at run time: its embedder,
    the few-shot index over the train set, the train samples by id, and
    an optional definition index for SFD grounding."""
    embedder: Embedder
    few_shot_index: SampleIndex
    train_samples: dict[str, Sample]
    sfd_index: SampleIndex | None = None


def build_retrieval_setup(
    train: list[Sample], embedder: Embedder, catalog: Catalog | None = None
) -> RetrievalSetup:
    """Index the train set; with a catalog, index definitions too."""
    sfd_index = build_sfd_index(catalog, embedder) if catalog is not None else None
    return RetrievalSetup(
        embedder=embedder,
        few_shot_index=build_index(train, embedder),
        train_samples={s.id: s for s in train},
        sfd_index=sfd_index,
    )


# ---------------------------------------------------------------------------
# Run records


def outcome_to_dict(outcome: EvaluationOutcome) -> dict:
    return {
        "sample_id": outcome.sample_id,
        "parsed": outcome.parsed,
        "has_made_up_function": outcome.has_made_up_function,
        "has_made_up_parameter": outcome.has_made_up_parameter,
        "similarity": outcome.similarity,
    }


def outcome_from_dict(data: dict) -> EvaluationOutcome:
    return EvaluationOutcome(
        sample_id=data["sample_id"],
        parsed=data["parsed"],
        has_made_up_function=data["has_made_up_function"],
        has_made_up_parameter=data["has_made_up_parameter"],
        similarity=data["similarity"],
    )


@dataclass
class SampleRun:
    """One sample's trip through the pipeline.  finish_reason is the
    client's, or "error" when the sample failed before or around the
    completion call and was isolated."""
    sample_id: str
    prompt_digest: str
    completion_text: str
    finish_reason: str
    outcome: EvaluationOutcome
    full_prompt: str | None = None

    def to_dict(self) -> dict:
        data = {
            "sample_id": self.sample_id,
            "prompt_digest": self.prompt_digest,
            "completion_text": self.completion_text,
            "finish_reason": self.finish_reason,
            "outcome": outcome_to_dict(self.outcome),
        }
        if self.full_prompt is not None:
            data["full_prompt"] = self.full_prompt
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRun":
        return cls(
            sample_id=data["sample_id"],
            prompt_digest=data["prompt_digest"],
            completion_text=data["completion_text"],
            finish_reason=data["finish_reason"],
            outcome=outcome_from_dict(data["outcome"]),
            full_prompt=data.get("full_prompt"),
        )


@dataclass
class RunRecord:
    experiment_name: str
    samples: list[SampleRun]
    report: MetricsReport
    elapsed_seconds: float = 0.0

    def __post_init__(self):
        if len(self.samples) != self.report.counts.total:
            raise ValueError(
                f"record holds {len(self.samples)} sample runs but the "
                f"report covers {self.report.counts.total}"
            )

    def to_dict(self) -> dict:
        return {
            "experiment_name": self.experiment_name,
            "samples": [s.to_dict() for s in self.samples],
            "report": report_to_dict(self.report),
            "elapsed_seconds": self.elapsed_seconds,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            experiment_name=data["experiment_name"],
            samples=[SampleRun.from_dict(s) for s in data["samples"]],
            report=report_from_dict(data["report"]),
            elapsed_seconds=data.get("elapsed_seconds", 0.0),
        )


# ---------------------------------------------------------------------------
# Orchestration


def _evaluate_sample(sample, spec, catalog, setup, client) -> SampleRun:
    config = spec.grounding
    hits = retrieve_few_shots(
        setup.few_shot_index, sample.prompt, config.few_shot_count,
        setup.embedder,
    )
    shots = [setup.train_samples[sample_id] for sample_id, _ in hits]
    if config.include_fd:
        fds, _missing = collect_regular_fds(shots, catalog)
    else:
        fds = []
    if config.include_sfd:
        sfds = retrieve_sfds(
            setup.sfd_index, sample.prompt, config.sfd_count,
            setup.embedder, catalog,
        )
    else:
        sfds = []
    metaprompt = assemble_metaprompt(sample.prompt, shots, fds, sfds, config)
    request = CompletionRequest(
        prompt=metaprompt.rendered,
        max_output_tokens=spec.max_output_tokens,
        temperature=spec.temperature,
        model_name=spec.model_name,
    )
    result = client.complete(request)
    candidate = extract_dsl(result.text)
    outcome = score_sample(candidate, sample.flow, catalog, sample_id=sample.id)
    return SampleRun(
        sample_id=sample.id,
        prompt_digest=prompt_digest(metaprompt.rendered),
        completion_text=result.text,
        finish_reason=result.finish_reason,
        outcome=outcome,
        full_prompt=metaprompt.rendered if spec.store_full_prompts else None,
    )


def run_experiment(
    spec: ExperimentSpec,
    catalog: Catalog,
    setups: dict[str, RetrievalSetup],
    client,
    test_samples: list[Sample] | None = None,
) -> RunRecord:
    """Evaluate every test sample under one experiment configuration.

    ``setups`` maps selection-model names to their retrieval state.
    When ``test_samples`` is omitted the spec's test_path is loaded.
    Samples run concurrently up to spec.concurrency; any one sample's
    failure is isolated into an unparsed outcome for that sample only.
    """
    setup = setups.get(spec.selection_model)
    if setup is None:
        raise HarnessError(
            f"no retrieval setup named {spec.selection_model!r} "
            f"(have {sorted(setups)})"
        )
    if spec.grounding.include_sfd and setup.sfd_index is None:
        raise HarnessError(
            f"experiment {spec.name!r} needs SFD grounding but the "
            f"{spec.selection_model!r} setup has no definition index"
        )
    if test_samples is None:
        if not spec.test_path:
            raise HarnessError(f"experiment {spec.name!r} has no test_path")
        test_samples = load_dataset(spec.test_path)
    if not test_samples:
        raise HarnessError(f"experiment {spec.name!r} has an empty test set")

    def evaluate(sample: Sample) -> SampleRun:
        try:
            return _evaluate_sample(sample, spec, catalog, setup, client)
        except Exception:
            # isolation: one bad sample must not sink the run
            outcome = EvaluationOutcome(
                sample_id=sample.id, parsed=False,
                has_made_up_function=False, has_made_up_parameter=False,
                similarity=0.0,
            )
            return SampleRun(sample.id, "", "", "error", outcome)

    started = time.monotonic()
    if spec.concurrency == 1:
        runs = [evaluate(s) for s in test_samples]
    else:
        with ThreadPoolExecutor(max_workers=spec.concurrency) as pool:
            runs = list(pool.map(evaluate, test_samples))
    runs.sort(key=lambda r: r.sample_id)
    report = aggregate([r.outcome for r in runs])
    return RunRecord(
        experiment_name=spec.name,
        samples=runs,
        report=report,
        elapsed_seconds=time.monotonic() - started,
    )


# ---------------------------------------------------------------------------
# Report emission


def render_report_document(
    records: list[RunRecord], baseline_name: str | None = None
) -> dict:
    """JSON-able summary of a run batch.  Excludes timing and per-sample
    records so repeated deterministic runs serialize byte-identically."""
    if not records:
        raise HarnessError("no run records to report")
    names = [r.experiment_name for r in records]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise HarnessError(f"duplicate experiment names: {duplicates}")
    baseline = None
    if baseline_name is not None:
        by_name = {r.experiment_name: r for r in records}
        baseline = by_name.get(baseline_name)
        if baseline is None:
            raise HarnessError(
                f"baseline {baseline_name!r} not among experiments {names}"
            )
    document = {
        "columns": list(TABLE_COLUMNS),
        "baseline": baseline_name,
        "experiments": [
            {"name": r.experiment_name, "metrics": report_to_dict(r.report)}
            for r in records
        ],
    }
    if baseline is not None:
        document["deltas"] = [
            delta_to_dict(delta_report(
                baseline.report, r.report, baseline_name, r.experiment_name,
            ))
            for r in records if r.experiment_name != baseline_name
        ]
    return document


def render_report_text(
    records: list[RunRecord], baseline_name: str | None = None
) -> str:
    """Aligned absolute table, plus the signed-delta table when a
    baseline is named."""
    document = render_report_document(records, baseline_name)  # validates
    del document
    text = render_metrics_table(
        [(r.experiment_name, r.report) for r in records]
    )
    if baseline_name is not None:
        baseline = next(
            r for r in records if r.experiment_name == baseline_name
        )
        deltas = [
            delta_report(baseline.report, r.report,
                         baseline_name, r.experiment_name)
            for r in records if r.experiment_name != baseline_name
        ]
        text += "\n\n" + render_delta_table(
            (baseline_name, baseline.report), deltas
        )
    return text


def emit_reports(
    records: list[RunRecord],
    out_dir: str,
    baseline_name: str | None = None,
) -> tuple[str, str]:
    """Write report.json and report.txt under out_dir; returns paths."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    document = render_report_document(records, baseline_name)
    text = render_report_text(records, baseline_name)
    json_path = directory / "report.json"
    text_path = directory / "report.txt"
    json_path.write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text_path.write_text(text + "\n", encoding="utf-8")
    return str(json_path), str(text_path)
