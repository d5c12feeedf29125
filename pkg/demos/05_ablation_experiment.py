"""
Running a small ablation study end to end
=========================================

"""

import random
import tempfile

from flowdsl.catalog import load_catalog
from flowdsl.generation import MockCompletionClient
from flowdsl.grounding import GroundingConfig
from flowdsl.harness import (
    ExperimentSpec,
    build_retrieval_setup,
    emit_reports,
    make_ood_split,
    run_experiment,
)
from flowdsl.retrieval import HashEmbedder
from flowdsl.samples import Sample

# Synthetic task pool: (function, phrase fragment).  Flows are one or
# two calls so the corpus stays readable.
FUNCTIONS = [
    ("shared_forms.WhenResponseSubmitted", "a form response arrives"),
    ("shared_forms.GetResponseDetails", "look up the response"),
    ("shared_mail.SendEmail", "send an email"),
    ("shared_mail.WhenEmailArrives", "an email arrives"),
    ("shared_chat.PostMessage", "post to the channel"),
    ("shared_sheet.AddRow", "add a row to the sheet"),
]
CATALOG_DOC = {
    name: {
        "FunctionName": name,
        "Description": f"Performs the step where {phrase}.",
        "IsInTrainingSet": True,
        "DisplayName": phrase,
        "ParametersInfo": [
            {"Key": "arg", "Type": "string", "Summary": "Arg",
             "Format": "", "Description": "Single argument."},
        ],
        "ResponseSchema": {},
        "IsTrigger": ".When" in name,
    }
    for name, phrase in FUNCTIONS
}
catalog = load_catalog(CATALOG_DOC)

rng = random.Random(11)
samples = []
for k in range(80):
    first, phrase_a = FUNCTIONS[rng.randrange(len(FUNCTIONS))]
    second, phrase_b = FUNCTIONS[rng.randrange(len(FUNCTIONS))]
    flow = (f'a = await {first}({{"arg": "v{k}"}});\n'
            f'b = await {second}({{"arg": "w{k}"}});')
    samples.append(Sample(
        id=f"s-{k:03d}",
        prompt=f"please {phrase_a} and then {phrase_b} (case {k})",
        flow_text=flow,
    ))

# Hold out one API entirely: flows touching it form the OOD test set.
split = make_ood_split(samples, ["shared_sheet.AddRow"],
                       in_domain_fraction=0.2, seed=3)
print("train:", len(split.train),
      " in-domain test:", len(split.test_in_domain),
      " ood test:", len(split.test_out_of_domain))

embedder = HashEmbedder(dimension=64)
setup = build_retrieval_setup(split.train, embedder, catalog)
setups = {"pretrained": setup}

# An echo client keyed on the trailing query returns the gold flow,
# which makes the harness itself the thing under test: any metric
# below a perfect score would point at a pipeline bug.
echo = MockCompletionClient(
    {s.prompt: s.flow_text for s in samples}, keying="query",
)

specs = [
    ExperimentSpec(name="pretrained-2shot", selection_model="pretrained",
                   grounding=GroundingConfig(few_shot_count=2)),
    ExperimentSpec(name="pretrained-2shot-fd", selection_model="pretrained",
                   grounding=GroundingConfig(few_shot_count=2, include_fd=True)),
    ExperimentSpec(name="pretrained-2shot-fd-sfd", selection_model="pretrained",
                   grounding=GroundingConfig(few_shot_count=2, include_fd=True,
                                             include_sfd=True, sfd_count=3)),
]

records = []
for spec in specs:
    record = run_experiment(spec, catalog, setups, echo,
                            test_samples=split.test_in_domain)
    records.append(record)
    print(f"{spec.name}: {len(record.samples)} samples"
          f" in {record.elapsed_seconds:.2f}s")

# A degraded client shows the metrics moving: every third answer is
# prose, every fifth invents a function.
lossy_responses = {}
for k, sample in enumerate(split.test_in_domain):
    if k % 3 == 0:
        lossy_responses[sample.prompt] = "Sorry, no flow comes to mind."
    elif k % 5 == 0:
        lossy_responses[sample.prompt] = 'a = await shared_void.Imagined({"arg": "x"});'
    else:
        lossy_responses[sample.prompt] = sample.flow_text
lossy = MockCompletionClient(lossy_responses, keying="query")
lossy_spec = ExperimentSpec(name="pretrained-2shot-lossy",
                            selection_model="pretrained",
                            grounding=GroundingConfig(few_shot_count=2))
records.append(run_experiment(lossy_spec, catalog, setups, lossy,
                              test_samples=split.test_in_domain))

with tempfile.TemporaryDirectory() as out_dir:
    json_path, text_path = emit_reports(records, out_dir,
                                        baseline_name="pretrained-2shot")
    print()
    print(open(text_path).read())
