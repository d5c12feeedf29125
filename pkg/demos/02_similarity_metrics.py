"""
Scoring predicted flows against gold flows
==========================================

"""

from flowdsl.catalog import load_catalog
from flowdsl.dsl import parse_flow
from flowdsl.metrics import (
    aggregate,
    delta_report,
    render_delta_table,
    render_metrics_table,
    score_sample,
    sequence_similarity,
)

# Similarity is longest common subsequence length over the longer
# sequence, computed on the ordered list of API names.
gold_seq = ["a.Trigger", "a.Lookup", "a.Notify"]
print(sequence_similarity(gold_seq, gold_seq))
print(sequence_similarity(gold_seq, ["a.Trigger", "a.Notify"]))
print(sequence_similarity(gold_seq, ["b.Other"]))

CATALOG_DOC = {
    name: {
        "FunctionName": name,
        "Description": f"Stub definition for {name}.",
        "IsInTrainingSet": True,
        "DisplayName": name.split(".", 1)[1],
        "ParametersInfo": [
            {"Key": "arg", "Type": "string", "Summary": "Arg",
             "Format": "", "Description": "Single argument."},
        ],
        "ResponseSchema": {},
        "IsTrigger": name.endswith("Trigger"),
    }
    for name in [
        "shared_a.Trigger",
        "shared_a.Lookup",
        "shared_a.Notify",
        "shared_b.Archive",
    ]
}
catalog = load_catalog(CATALOG_DOC)

TRUTH = parse_flow(
    't = await shared_a.Trigger({"arg": "x"});\n'
    'l = await shared_a.Lookup({"arg": "x"});\n'
    'n = await shared_a.Notify({"arg": "x"});'
)

# Four predictions of varying quality for the same gold flow.
predictions = {
    "s-1": 't = await shared_a.Trigger({"arg": "x"});\n'
           'l = await shared_a.Lookup({"arg": "x"});\n'
           'n = await shared_a.Notify({"arg": "x"});',
    "s-2": 't = await shared_a.Trigger({"arg": "x"});\n'
           'n = await shared_a.Notify({"arg": "x"});',
    # A made-up function name zeroes the similarity outright.
    "s-3": 't = await shared_a.Trigger({"arg": "x"});\n'
           'z = await shared_a.Imagined({"arg": "x"});',
    "s-4": "this is not a flow at all",
}

outcomes = []
for sample_id, text in predictions.items():
    outcome = score_sample(text, TRUTH, catalog, sample_id=sample_id)
    outcomes.append(outcome)
    print(sample_id, "parsed" if outcome.parsed else "unparsed",
          f"similarity={outcome.similarity:.4f}")

report = aggregate(outcomes)
print()
print(render_metrics_table([("demo", report)]))

# Delta tables compare candidates against a named baseline.  Gains are
# printed with a leading plus, exact ties as a bare zero.
candidate_outcomes = [
    score_sample(predictions["s-1"], TRUTH, catalog, sample_id="c-1"),
    score_sample(predictions["s-2"], TRUTH, catalog, sample_id="c-2"),
    score_sample(predictions["s-1"], TRUTH, catalog, sample_id="c-3"),
    score_sample(predictions["s-1"], TRUTH, catalog, sample_id="c-4"),
]
candidate = aggregate(candidate_outcomes)
delta = delta_report(report, candidate, baseline_name="demo", candidate_name="tuned")
print()
print(render_delta_table(("demo", report), [delta]))
