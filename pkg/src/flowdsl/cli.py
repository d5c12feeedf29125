"""Command-line front end.

Subcommands mirror the library surface: parse and validate single
flows, score prediction files, build and query retrieval indexes,
generate TST pairs and evaluate the TST loss, split datasets, run
config-driven experiments, and re-render reports from stored records.
Exit code 0 means full success; validation findings and any error exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .catalog import CatalogError, load_catalog_file, validate_flow
from .dsl import ParseError, flow_to_dict, parse_flow, serialize_flow
from .generation import (
    CompletionError,
    HttpCompletionClient,
    load_mock_fixtures_file,
)
from .grounding import GroundingError
from .harness import (
    HarnessError,
    RunRecord,
    build_retrieval_setup,
    emit_reports,
    load_experiment_specs_file,
    make_ood_split,
    render_report_text,
    run_experiment,
)
from .metrics import (
    aggregate,
    render_metrics_table,
    report_to_dict,
    score_sample,
)
from .retrieval import (
    EmbeddingServiceError,
    HashEmbedder,
    HttpEmbedder,
    SampleIndex,
    TstPair,
    build_index,
    embedder_similarity,
    generate_tst_pairs,
    retrieve_few_shots,
    tst_loss,
    TST_THRESHOLD_DEFAULT,
)
from .samples import DatasetError, load_dataset, save_dataset

_ERRORS = (
    OSError, ValueError, ParseError, CatalogError, DatasetError,
    HarnessError, CompletionError, GroundingError, EmbeddingServiceError,
)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _make_embedder(args):
    if args.embedder == "http":
        return HttpEmbedder()  # endpoint and key from the environment
    return HashEmbedder(dimension=args.dimension)


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_parse(args) -> int:
    flow = parse_flow(_read(args.flow_file))
    if args.canonical:
        print(serialize_flow(flow))
    else:
        print(json.dumps(flow_to_dict(flow), indent=2))
    return 0


def _cmd_validate(args) -> int:
    flow = parse_flow(_read(args.flow_file))
    catalog = load_catalog_file(args.catalog)
    result = validate_flow(flow, catalog)
    if result.ok:
        print("ok")
        return 0
    for name in result.made_up_functions:
        print(f"made-up function: {name}")
    for name, key in result.made_up_parameters:
        print(f"made-up parameter: {name} {key}")
    return 1


def _load_predictions(path: str) -> dict[str, str]:
    """Prediction files are JSONL with at least id and flow per record;
    extra fields (a gold dataset's prompt) are ignored."""
    predictions: dict[str, str] = {}
    for number, line in enumerate(_read(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {number}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict) or "id" not in record or "flow" not in record:
            raise DatasetError(f"line {number}: need an object with id and flow")
        sample_id = record["id"]
        if sample_id in predictions:
            raise DatasetError(f"line {number}: duplicate prediction id {sample_id!r}")
        predictions[sample_id] = record["flow"]
    return predictions


def _cmd_score(args) -> int:
    gold = load_dataset(args.gold)
    predictions = _load_predictions(args.predictions)
    gold_ids = {s.id for s in gold}
    missing = sorted(gold_ids - set(predictions))
    extra = sorted(set(predictions) - gold_ids)
    if missing:
        raise DatasetError(f"predictions missing for ids: {missing}")
    if extra:
        raise DatasetError(f"predictions for unknown ids: {extra}")
    catalog = load_catalog_file(args.catalog)
    outcomes = [
        score_sample(predictions[s.id], s.flow, catalog, sample_id=s.id)
        for s in gold
    ]
    report = aggregate(outcomes)
    if args.json:
        print(json.dumps(report_to_dict(report), indent=2, sort_keys=True))
    else:
        print(render_metrics_table([(args.label, report)]))
    return 0


def _cmd_index_build(args) -> int:
    samples = load_dataset(args.dataset)
    embedder = _make_embedder(args)
    index = build_index(samples, embedder, name=embedder.name)
    index.save(args.out)
    print(f"indexed {len(index)} samples ({index.dimension}d) -> {args.out}")
    return 0


def _cmd_index_query(args) -> int:
    index = SampleIndex.load(args.index)
    if args.embedder == "hash" and index.dimension:
        args.dimension = index.dimension
    embedder = _make_embedder(args)
    for sample_id, score in retrieve_few_shots(index, args.query, args.k, embedder):
        print(f"{sample_id}\t{score:.6f}")
    return 0


def _cmd_tst_pairs(args) -> int:
    samples = load_dataset(args.dataset)
    embedder = _make_embedder(args)
    pairs = generate_tst_pairs(samples, embedder, threshold=args.threshold,
                               budget=args.budget)
    with open(args.out, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(json.dumps(pair.to_dict()) + "\n")
    positives = sum(1 for p in pairs if p.label == 1)
    print(f"{len(pairs)} pairs ({positives} positive) -> {args.out}")
    return 0


def _cmd_tst_loss(args) -> int:
    pairs = [
        TstPair.from_dict(json.loads(line))
        for line in _read(args.pairs).splitlines() if line.strip()
    ]
    embedder = _make_embedder(args)
    loss = tst_loss(pairs, embedder_similarity(embedder))
    print(f"{loss:.6f}")
    return 0


def _cmd_split(args) -> int:
    samples = load_dataset(args.dataset)
    held_out = [name for name in (args.held_out or "").split(",") if name]
    split = make_ood_split(samples, held_out,
                           in_domain_fraction=args.fraction, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(split.train, str(out_dir / "train.jsonl"))
    save_dataset(split.test_in_domain, str(out_dir / "test_in_domain.jsonl"))
    save_dataset(split.test_out_of_domain,
                 str(out_dir / "test_out_of_domain.jsonl"))
    summary = {
        "held_out_apis": split.held_out_apis,
        "in_domain_fraction": args.fraction,
        "seed": args.seed,
        "train": len(split.train),
        "test_in_domain": len(split.test_in_domain),
        "test_out_of_domain": len(split.test_out_of_domain),
    }
    (out_dir / "split.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for key in ("train", "test_in_domain", "test_out_of_domain"):
        print(f"{key}: {summary[key]}")
    return 0


def _resolve_baseline(args, specs) -> str | None:
    if args.baseline:
        return args.baseline
    named = {s.baseline_name for s in specs if s.baseline_name}
    if len(named) > 1:
        raise HarnessError(
            f"specs disagree on the baseline: {sorted(named)}; pass --baseline"
        )
    return named.pop() if named else None


def _cmd_run(args) -> int:
    specs = load_experiment_specs_file(args.spec)
    if args.fixtures:
        client = load_mock_fixtures_file(args.fixtures)
    else:
        client = HttpCompletionClient()  # endpoint and key from the environment
    catalogs: dict[str, object] = {}
    datasets: dict[str, list] = {}
    setups_by_train: dict[tuple[str, str], dict] = {}
    records = []
    for spec in specs:
        for field_name in ("catalog_path", "train_path", "test_path"):
            if not getattr(spec, field_name):
                raise HarnessError(
                    f"experiment {spec.name!r} is missing {field_name}"
                )
        if spec.catalog_path not in catalogs:
            catalogs[spec.catalog_path] = load_catalog_file(spec.catalog_path)
        catalog = catalogs[spec.catalog_path]
        for path in (spec.train_path, spec.test_path):
            if path not in datasets:
                datasets[path] = load_dataset(path)
        setup_key = (spec.train_path, spec.catalog_path)
        if setup_key not in setups_by_train:
            # Offline runs ground both selection models in the same
            # deterministic embedder; distinct TST embedders plug in
            # through the library API.
            embedder = HashEmbedder(dimension=args.dimension)
            setup = build_retrieval_setup(
                datasets[spec.train_path], embedder, catalog
            )
            setups_by_train[setup_key] = {
                "pretrained": setup, "tst": setup,
            }
        record = run_experiment(
            spec, catalog, setups_by_train[setup_key], client,
            test_samples=datasets[spec.test_path],
        )
        records.append(record)
    baseline = _resolve_baseline(args, specs)
    json_path, text_path = emit_reports(records, args.out_dir, baseline)
    if args.records:
        with open(args.records, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record.to_dict()) + "\n")
    print(render_report_text(records, baseline))
    print(f"\nreport: {json_path}\ntable: {text_path}")
    return 0


def _cmd_report(args) -> int:
    records = [
        RunRecord.from_dict(json.loads(line))
        for line in _read(args.records).splitlines() if line.strip()
    ]
    json_path, text_path = emit_reports(records, args.out_dir, args.baseline)
    print(render_report_text(records, args.baseline))
    print(f"\nreport: {json_path}\ntable: {text_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring


def _add_embedder_options(parser) -> None:
    parser.add_argument("--embedder", choices=("hash", "http"), default="hash")
    parser.add_argument("--dimension", type=int, default=64,
                        help="hash embedder dimension")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowdsl",
        description="Workflow-automation DSL toolkit: parse, validate, "
                    "score, retrieve, and run grounding experiments.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("parse", help="parse a DSL file")
    sub.add_argument("flow_file")
    sub.add_argument("--canonical", action="store_true",
                     help="print the canonical serialization instead of the AST")
    sub.set_defaults(handler=_cmd_parse)

    sub = commands.add_parser("validate", help="check a flow against a catalog")
    sub.add_argument("flow_file")
    sub.add_argument("--catalog", required=True)
    sub.set_defaults(handler=_cmd_validate)

    sub = commands.add_parser("score",
                              help="score a prediction file against gold")
    sub.add_argument("predictions", help="JSONL with id and flow per line")
    sub.add_argument("gold", help="gold dataset JSONL")
    sub.add_argument("--catalog", required=True)
    sub.add_argument("--json", action="store_true")
    sub.add_argument("--label", default="predictions",
                     help="row label in the table output")
    sub.set_defaults(handler=_cmd_score)

    index = commands.add_parser("index", help="build or query a sample index")
    index_commands = index.add_subparsers(dest="index_command", required=True)
    sub = index_commands.add_parser("build")
    sub.add_argument("dataset")
    sub.add_argument("--out", required=True)
    _add_embedder_options(sub)
    sub.set_defaults(handler=_cmd_index_build)
    sub = index_commands.add_parser("query")
    sub.add_argument("index")
    sub.add_argument("--query", required=True)
    sub.add_argument("-k", type=int, default=5)
    _add_embedder_options(sub)
    sub.set_defaults(handler=_cmd_index_query)

    tst = commands.add_parser("tst", help="TST pair generation and loss")
    tst_commands = tst.add_subparsers(dest="tst_command", required=True)
    sub = tst_commands.add_parser("pairs")
    sub.add_argument("dataset")
    sub.add_argument("--out", required=True)
    sub.add_argument("--threshold", type=float, default=TST_THRESHOLD_DEFAULT)
    sub.add_argument("--budget", type=int, default=None)
    _add_embedder_options(sub)
    sub.set_defaults(handler=_cmd_tst_pairs)
    sub = tst_commands.add_parser("loss")
    sub.add_argument("pairs", help="JSONL of generated pairs")
    _add_embedder_options(sub)
    sub.set_defaults(handler=_cmd_tst_loss)

    sub = commands.add_parser("split", help="train/test/OOD dataset split")
    sub.add_argument("dataset")
    sub.add_argument("--held-out", default="",
                     help="comma-separated qualified names")
    sub.add_argument("--fraction", type=float, default=0.1,
                     help="in-domain test fraction")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-dir", required=True)
    sub.set_defaults(handler=_cmd_split)

    sub = commands.add_parser("run", help="run experiments from a spec file")
    sub.add_argument("spec", help="JSON spec: one experiment or a batch")
    sub.add_argument("--fixtures",
                     help="mock completion fixtures; omit to use the "
                          "HTTP endpoint from the environment")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--baseline", default=None)
    sub.add_argument("--records", default=None,
                     help="also write full run records to this JSONL path")
    sub.add_argument("--dimension", type=int, default=64)
    sub.set_defaults(handler=_cmd_run)

    sub = commands.add_parser("report", help="re-render reports from records")
    sub.add_argument("records", help="JSONL of run records")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--baseline", default=None)
    sub.set_defaults(handler=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
