"""
Few-shot retrieval and similarity-tuning pairs
==============================================

"""

from flowdsl.retrieval import (
    HashEmbedder,
    build_index,
    embedder_similarity,
    generate_tst_pairs,
    retrieve_few_shots,
    tst_loss,
)
from flowdsl.samples import Sample

# A small training corpus: natural-language request paired with the
# flow that fulfils it.
CORPUS = [
    ("t-01", "email me when a form is submitted",
     't = await shared_forms.WhenResponseSubmitted({"form_id": "f1"});\n'
     'm = await shared_mail.SendEmail({"to": "me@x.co", "subject": "New response", "message/body": "A form came in."});'),
    ("t-02", "send an email to the owner about the new response",
     'm = await shared_mail.SendEmail({"to": "owner@x.co", "subject": "Response", "message/body": "Details inside."});'),
    ("t-03", "post a chat message when an email arrives",
     't = await shared_mail.WhenEmailArrives({"folder": "Inbox"});\n'
     'p = await shared_chat.PostMessage({"channel": "general", "message/text": "Mail arrived."});'),
    ("t-04", "post the weekly summary to the team channel",
     'p = await shared_chat.PostMessage({"channel": "team", "message/text": "Weekly summary."});'),
    ("t-05", "archive responses once a week",
     't = await shared_clock.EveryWeek({});\n'
     'a = await shared_forms.ArchiveResponses({"form_id": "f1"});'),
    ("t-06", "when a response arrives look it up and post it to chat",
     't = await shared_forms.WhenResponseSubmitted({"form_id": "f2"});\n'
     'd = await shared_forms.GetResponseDetails({"form_id": "f2", "response_id": "r"});\n'
     'p = await shared_chat.PostMessage({"channel": "forms", "message/text": "New response."});'),
]
samples = [Sample(id=i, prompt=p, flow_text=f) for i, p, f in CORPUS]

# The hash embedder is deterministic: tokens are hashed into a fixed
# number of buckets, and vectors are unit-normalized.
embedder = HashEmbedder(dimension=64)
index = build_index(samples, embedder)
print("index:", index.name, "entries:", len(index.ids), "dim:", index.dimension)

for query in ["notify me by email about form submissions",
              "write a message into the channel"]:
    hits = retrieve_few_shots(index, query, 3, embedder)
    print()
    print("query:", query)
    for sample_id, score in hits:
        print(f"  {sample_id}  cosine={score:.4f}")

# Similarity-tuning pairs label every unordered prompt pair by whether
# the embedder already places them above the cosine threshold, and
# attach the overlap of their flows' API sets as the regression target.
pairs = generate_tst_pairs(samples, embedder, threshold=0.7)
print()
print("pairs:", len(pairs))
for pair in pairs[:4]:
    print(f"  {pair.id_i}/{pair.id_j}  label={pair.label}"
          f"  program_similarity={pair.program_similarity:.4f}")

# The loss measures how far a candidate similarity function sits from
# the program-similarity targets.  Scoring the generating embedder
# against its own pairs gives the floor for this corpus.
loss = tst_loss(pairs, embedder_similarity(embedder))
print()
print(f"tst loss for the hash embedder itself: {loss:.6f}")

# A coarser embedder does worse on the same targets.
coarse = HashEmbedder(dimension=4)
print(f"tst loss for a 4-bucket embedder:      {tst_loss(pairs, embedder_similarity(coarse)):.6f}")
