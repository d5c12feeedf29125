"""
Assembling a grounded metaprompt under a token budget
=====================================================

"""

from flowdsl.catalog import load_catalog
from flowdsl.grounding import (
    GroundingConfig,
    GroundingError,
    assemble_metaprompt,
    build_sfd_index,
    collect_regular_fds,
    retrieve_sfds,
)
from flowdsl.retrieval import HashEmbedder, build_index, retrieve_few_shots
from flowdsl.samples import Sample

CATALOG_DOC = {}
for name, display, description, keys in [
    ("shared_forms.WhenResponseSubmitted", "When a new response is submitted",
     "Fires when a response is submitted to the chosen form.", ["form_id"]),
    ("shared_forms.GetResponseDetails", "Get response details",
     "Retrieves the answers of one submitted form response.", ["form_id", "response_id"]),
    ("shared_mail.SendEmail", "Send an email",
     "Sends an email message from the connected mailbox.", ["to", "subject", "message/body"]),
    ("shared_chat.PostMessage", "Post a message in a channel",
     "Posts a chat message to the chosen channel.", ["channel", "message/text"]),
    ("shared_sheet.AddRow", "Add a row to a sheet",
     "Appends one row to the chosen worksheet.", ["sheet", "values"]),
]:
    CATALOG_DOC[name] = {
        "FunctionName": name,
        "Description": description,
        "IsInTrainingSet": True,
        "DisplayName": display,
        "ParametersInfo": [
            {"Key": k, "Type": "string", "Summary": k.split("/")[-1].title(),
             "Format": "", "Description": f"The {k} value."}
            for k in keys
        ],
        "ResponseSchema": {},
        "IsTrigger": name.split(".", 1)[1].startswith("When"),
    }
catalog = load_catalog(CATALOG_DOC)

TRAIN = [
    ("t-01", "email me when a form is submitted",
     't = await shared_forms.WhenResponseSubmitted({"form_id": "f1"});\n'
     'm = await shared_mail.SendEmail({"to": "me@x.co", "subject": "New", "message/body": "Form came in."});'),
    ("t-02", "post new form responses to the channel",
     't = await shared_forms.WhenResponseSubmitted({"form_id": "f2"});\n'
     'd = await shared_forms.GetResponseDetails({"form_id": "f2", "response_id": "r"});\n'
     'p = await shared_chat.PostMessage({"channel": "forms", "message/text": "New response."});'),
    ("t-03", "log submissions into the spreadsheet",
     't = await shared_forms.WhenResponseSubmitted({"form_id": "f3"});\n'
     'a = await shared_sheet.AddRow({"sheet": "log", "values": "row"});'),
]
train = [Sample(id=i, prompt=p, flow_text=f) for i, p, f in TRAIN]

embedder = HashEmbedder(dimension=64)
shot_index = build_index(train, embedder)
sfd_index = build_sfd_index(catalog, embedder)
by_id = {s.id: s for s in train}

QUERY = "when someone fills the survey send me an email"

# Shots come from the sample index; definitions come in two flavors.
# Regular definitions cover every function the chosen shots use, and
# semantic definitions are retrieved for the query itself.
hits = retrieve_few_shots(shot_index, QUERY, 2, embedder)
shots = [by_id[sample_id] for sample_id, _ in hits]
fds, missing = collect_regular_fds(shots, catalog)
sfds = retrieve_sfds(sfd_index, QUERY, 2, embedder, catalog)
print("shots:      ", [s.id for s in shots])
print("regular fds:", [e.function_name for e in fds])
print("semantic fds:", [e.function_name for e in sfds])
assert not missing

config = GroundingConfig(few_shot_count=2, include_fd=True, include_sfd=True,
                         sfd_count=2, token_budget=16000)
prompt = assemble_metaprompt(QUERY, shots, fds, sfds, config)
print()
print("token estimate:", prompt.token_estimate)
print("=" * 60)
print(prompt.rendered)
print("=" * 60)

# Under a tight budget the assembler sheds semantic definitions first,
# then whole shots, and keeps only definitions the surviving shots
# still need.  Instructions and the query itself are never dropped.
for budget in [prompt.token_estimate - 1, 250, 150]:
    squeezed = assemble_metaprompt(
        QUERY, shots, fds, sfds,
        GroundingConfig(few_shot_count=2, include_fd=True, include_sfd=True,
                        sfd_count=2, token_budget=budget),
    )
    kept_defs = [b.splitlines()[0] for b in squeezed.function_definition_blocks]
    print(f"budget {budget:5d}: tokens={squeezed.token_estimate:4d}"
          f"  shots={len(squeezed.few_shot_blocks)}  defs={kept_defs}")

# Below the floor there is nothing left to shed and assembly refuses.
try:
    assemble_metaprompt(QUERY, shots, fds, sfds,
                        GroundingConfig(token_budget=50))
except GroundingError as exc:
    print()
    print("budget    50:", exc)
