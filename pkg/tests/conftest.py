"""Shared fixtures: a synthetic function pool, catalog, and corpus.

Everything is seeded and deterministic.  Gold flows only ever use
cataloged functions and declared parameter keys (leaf form for slash
paths), so an echo of the gold corpus scores perfectly.
"""

import random

import pytest

from flowdsl.catalog import Catalog, load_catalog
from flowdsl.retrieval import HashEmbedder
from flowdsl.samples import Sample

# (name, display, description, is_trigger, params, phrase)
# params: (Key, Type, Summary, Description)
POOL = [
    (
        "shared_forms.WhenResponseSubmitted",
        "When a new response is submitted",
        "Fires when a response is submitted to the chosen form.",
        True,
        [("form_id", "string", "Form Id", "Unique identifier of the form.")],
        "a new form response is submitted",
    ),
    (
        "shared_forms.GetResponseDetails",
        "Get response details",
        "Retrieves the answers of one submitted form response.",
        False,
        [
            ("form_id", "string", "Form Id", "Unique identifier of the form."),
            ("response_id", "string", "Response Id", "Identifier of the response."),
        ],
        "look up the response details",
    ),
    (
        "shared_mail.SendEmail",
        "Send an email",
        "Sends an email message from the connected mailbox.",
        False,
        [
            ("to", "string", "To", "Recipient addresses separated by semicolons."),
            ("subject", "string", "Subject", "Subject line of the email."),
            ("message/body", "string", "Body", "Body text of the email."),
        ],
        "send an email to the owner",
    ),
    (
        "shared_mail.WhenEmailArrives",
        "When a new email arrives",
        "Fires when a new email lands in the chosen folder.",
        True,
        [
            ("folder", "string", "Folder", "Mail folder to watch."),
            ("importance", "string", "Importance", "Only fire for this importance."),
        ],
        "an important email arrives",
    ),
    (
        "shared_chat.PostMessage",
        "Post a message in a channel",
        "Posts a chat message to the chosen channel.",
        False,
        [
            ("channel", "string", "Channel", "Channel the message is posted to."),
            ("message/text", "string", "Message", "Text of the chat message."),
            ("poster", "string", "Post as", "Identity the message is posted as."),
        ],
        "post a message in the team channel",
    ),
    (
        "shared_chat.CreateChannel",
        "Create a channel",
        "Creates a new channel inside a team.",
        False,
        [
            ("team", "string", "Team", "Team the channel is created in."),
            ("name", "string", "Name", "Name of the new channel."),
        ],
        "create a channel for the discussion",
    ),
    (
        "shared_files.SaveAttachment",
        "Save file attachment",
        "Writes an attachment into a storage folder.",
        False,
        [
            ("folder_path", "string", "Folder", "Destination folder path."),
            ("file/name", "string", "File name", "Name the file is saved under."),
            ("file/content", "binary", "Content", "Raw bytes of the file."),
            ("file/tags", "array", "Tags", "Labels applied to the saved file."),
        ],
        "save the attachment to the archive",
    ),
    (
        "shared_files.WhenFileCreated",
        "When a file is created",
        "Fires when a file appears in the watched folder.",
        True,
        [("folder_path", "string", "Folder", "Folder to watch for new files.")],
        "a file is created in the shared folder",
    ),
    (
        "shared_sheet.AddRow",
        "Add a row into a table",
        "Appends one row to the chosen spreadsheet table.",
        False,
        [
            ("sheet_id", "string", "Sheet", "Spreadsheet the row is added to."),
            ("row/values", "object", "Values", "Column values of the new row."),
        ],
        "add a row to the tracking sheet",
    ),
    (
        "shared_sheet.GetRows",
        "List rows present in a table",
        "Reads rows from the chosen spreadsheet table.",
        False,
        [
            ("sheet_id", "string", "Sheet", "Spreadsheet the rows are read from."),
            ("filter", "string", "Filter Query", "OData-style row filter."),
        ],
        "read the rows of the tracking sheet",
    ),
    (
        "shared_cal.CreateEvent",
        "Create an event",
        "Creates a calendar event on the connected calendar.",
        False,
        [
            ("calendar_id", "string", "Calendar", "Calendar the event is created on."),
            ("title", "string", "Title", "Title of the event."),
            ("start", "string", "Start time", "Start of the event."),
            ("end", "string", "End time", "End of the event."),
        ],
        "schedule a follow up meeting",
    ),
    (
        "shared_cal.WhenEventStarts",
        "When an event starts",
        "Fires shortly before a calendar event begins.",
        True,
        [
            ("calendar_id", "string", "Calendar", "Calendar to watch."),
            ("lookahead", "integer", "Minutes", "Minutes of warning before the start."),
        ],
        "a calendar event is about to start",
    ),
]

TRIGGERS = [row for row in POOL if row[3]]
ACTIONS = [row for row in POOL if not row[3]]
PHRASES = {row[0]: row[5] for row in POOL}

# Canonical argument-text variants per function; member refs point at the
# trigger variable, which is always named triggerOutputs.
ARG_VARIANTS = {
    "shared_forms.WhenResponseSubmitted": [
        '{"form_id": "form-7"}',
        '{"form_id": "feedback"}',
    ],
    "shared_forms.GetResponseDetails": [
        '{"form_id": "form-7", "response_id": triggerOutputs.body.response_id}',
        '{"form_id": "feedback", "response_id": "r-100"}',
    ],
    "shared_mail.SendEmail": [
        '{"to": "ops@example.com", "subject": "New response"}',
        '{"to": "lead@example.com", "subject": "Heads up", "body": "see details"}',
    ],
    "shared_mail.WhenEmailArrives": [
        '{"folder": "Inbox"}',
        '{"folder": "Inbox", "importance": "High"}',
    ],
    "shared_chat.PostMessage": [
        '{"channel": "alerts", "text": "ping", "poster": "Flow bot"}',
        '{"channel": "general", "text": triggerOutputs.body.summary}',
    ],
    "shared_chat.CreateChannel": [
        '{"team": "Ops", "name": "incident-42"}',
    ],
    "shared_files.SaveAttachment": [
        '{"folder_path": "/archive", "name": triggerOutputs.body.file_name, '
        '"content": triggerOutputs.body.content}',
        '{"folder_path": "/inbox", "name": "report.pdf", "content": "bytes", '
        '"tags": ["inbox", "new"]}',
    ],
    "shared_files.WhenFileCreated": [
        '{"folder_path": "/dropzone"}',
    ],
    "shared_sheet.AddRow": [
        '{"sheet_id": "sheet-1", "values": {"status": "new", "count": 1}}',
        '{"sheet_id": "audit", "values": {"source": "flow", "ok": true}}',
    ],
    "shared_sheet.GetRows": [
        '{"sheet_id": "sheet-1", "filter": "status eq new"}',
    ],
    "shared_cal.CreateEvent": [
        '{"calendar_id": "team", "title": "Follow up", '
        '"start": "2024-05-01T10:00", "end": "2024-05-01T10:30"}',
    ],
    "shared_cal.WhenEventStarts": [
        '{"calendar_id": "team", "lookahead": 15}',
    ],
}

CONDITIONS = [
    'triggerOutputs.body.importance == "High"',
    'triggerOutputs.body.score > 3',
    '!triggerOutputs.body.archived',
    'triggerOutputs.body.urgent && triggerOutputs.body.count >= 2',
]

SUFFIXES = [
    "for project alpha", "for project beta", "for the gamma team",
    "for the delta rollout", "for the weekly review", "for the oncall rotation",
    "for the sales pipeline", "for the hiring loop", "for the retro board",
    "for the budget audit",
]


def build_catalog_document() -> dict:
    """Catalog for the whole pool, in the canonical mapping shape."""
    document = {}
    for name, display, description, is_trigger, params, _phrase in POOL:
        document[name] = {
            "FunctionName": name,
            "Description": description,
            "IsInTrainingSet": True,
            "DisplayName": display,
            "ParametersInfo": [
                {"Key": key, "Type": type_, "Summary": summary,
                 "Format": "", "Description": desc}
                for key, type_, summary, desc in params
            ],
            "ResponseSchema": {},
            "IsTrigger": is_trigger,
        }
    return document


def _call_line(var: str, name: str, args: str, awaited: bool) -> str:
    prefix = "await " if awaited else ""
    return f"{var} = {prefix}{name}({args});"


def _pick_args(rng: random.Random, name: str) -> str:
    return rng.choice(ARG_VARIANTS[name])


# Fixed samples pin down feature coverage regardless of corpus size.

def _fixed_samples() -> list[Sample]:
    fixed = []
    fixed.append(Sample(
        id="s-0000",
        prompt="when an important email arrives post a message in the team "
               "channel if it is urgent otherwise add a row to the tracking sheet",
        flow_text=(
            'triggerOutputs = await shared_mail.WhenEmailArrives'
            '({"folder": "Inbox", "importance": "High"});\n'
            'if (triggerOutputs.body.importance == "High") {\n'
            '  out1 = shared_chat.PostMessage({"channel": "alerts", '
            '"text": triggerOutputs.body.summary, "poster": "Flow bot"});\n'
            '} else {\n'
            '  out2 = shared_sheet.AddRow({"sheet_id": "sheet-1", '
            '"values": {"status": "normal", "count": 1}});\n'
            '}'
        ),
    ))
    fixed.append(Sample(
        id="s-0001",
        prompt="when a new form response is submitted look up the response "
               "details and send an email to the owner",
        flow_text=(
            'triggerOutputs = await shared_forms.WhenResponseSubmitted'
            '({"form_id": "form-7"});\n'
            'out1 = shared_forms.GetResponseDetails({"form_id": "form-7", '
            '"response_id": triggerOutputs.body.response_id});\n'
            'out2 = shared_mail.SendEmail({"to": "ops@example.com", '
            '"subject": "New response", "body": "details inside"});'
        ),
    ))
    fixed.append(Sample(
        id="s-0002",
        prompt="save the attachment to the archive with labels whenever "
               "a file is created in the shared folder",
        flow_text=(
            'triggerOutputs = await shared_files.WhenFileCreated'
            '({"folder_path": "/dropzone"});\n'
            'out1 = shared_files.SaveAttachment({"folder_path": "/inbox", '
            '"name": "report.pdf", "content": "bytes", "tags": ["inbox", "new"]});'
        ),
    ))
    fixed.append(Sample(
        id="s-0003",
        prompt="unless the event is archived schedule a follow up meeting "
               "when a calendar event is about to start",
        flow_text=(
            'triggerOutputs = await shared_cal.WhenEventStarts'
            '({"calendar_id": "team", "lookahead": 15});\n'
            'if (!triggerOutputs.body.archived) {\n'
            '  out1 = shared_cal.CreateEvent({"calendar_id": "team", '
            '"title": "Follow up", "start": "2024-05-01T10:00", '
            '"end": "2024-05-01T10:30"});\n'
            '}'
        ),
    ))
    return fixed


def make_corpus(n: int, seed: int = 11) -> list[Sample]:
    """Deterministic corpus of n samples; the first four are fixed."""
    rng = random.Random(seed)
    samples = _fixed_samples()[:n]
    seen_prompts = {s.prompt for s in samples}
    suffix_cycle = 0
    while len(samples) < n:
        trigger = rng.choice(TRIGGERS)
        action_count = rng.randint(1, 3)
        actions = rng.sample(ACTIONS, action_count)
        lines = [_call_line("triggerOutputs", trigger[0],
                            _pick_args(rng, trigger[0]), awaited=True)]
        phrases = [PHRASES[trigger[0]]]
        if action_count >= 2 and rng.random() < 0.35:
            condition = rng.choice(CONDITIONS)
            then_action, rest = actions[0], actions[1:]
            body = _call_line("out1", then_action[0],
                             _pick_args(rng, then_action[0]), awaited=False)
            if rest and rng.random() < 0.5:
                else_action = rest[0]
                other = _call_line("out2", else_action[0],
                                   _pick_args(rng, else_action[0]), awaited=False)
                lines.append(
                    "if (" + condition + ") {\n  " + body + "\n} else {\n  "
                    + other + "\n}"
                )
                phrases += [PHRASES[then_action[0]], PHRASES[else_action[0]]]
                for i, extra in enumerate(rest[1:], start=3):
                    lines.append(_call_line(f"out{i}", extra[0],
                                            _pick_args(rng, extra[0]), awaited=False))
                    phrases.append(PHRASES[extra[0]])
            else:
                lines.append("if (" + condition + ") {\n  " + body + "\n}")
                phrases.append(PHRASES[then_action[0]])
                for i, extra in enumerate(rest, start=2):
                    lines.append(_call_line(f"out{i}", extra[0],
                                            _pick_args(rng, extra[0]), awaited=False))
                    phrases.append(PHRASES[extra[0]])
        else:
            for i, action in enumerate(actions, start=1):
                lines.append(_call_line(f"out{i}", action[0],
                                        _pick_args(rng, action[0]), awaited=False))
                phrases.append(PHRASES[action[0]])
        template = rng.randrange(3)
        if template == 0:
            prompt = "when " + phrases[0] + " " + " and ".join(phrases[1:])
        elif template == 1:
            prompt = "every time " + phrases[0] + ", " + ", then ".join(phrases[1:])
        else:
            prompt = " and ".join(phrases[1:]) + " whenever " + phrases[0]
        if prompt in seen_prompts:
            prompt = prompt + " " + SUFFIXES[suffix_cycle % len(SUFFIXES)]
            suffix_cycle += 1
            if prompt in seen_prompts:
                continue
        seen_prompts.add(prompt)
        samples.append(Sample(
            id=f"s-{len(samples):04d}",
            prompt=prompt,
            flow_text="\n".join(lines),
        ))
    return samples


@pytest.fixture(scope="session")
def pool_catalog() -> Catalog:
    return load_catalog(build_catalog_document())


@pytest.fixture(scope="session")
def corpus50() -> list[Sample]:
    return make_corpus(50)


@pytest.fixture()
def hash_embedder() -> HashEmbedder:
    return HashEmbedder(dimension=64)
