"""
Parsing and validating a workflow script
========================================

"""

import json

from flowdsl.catalog import load_catalog, render_function_definition, validate_flow
from flowdsl.dsl import (
    ParseError,
    extract_api_sequence,
    flow_to_dict,
    parse_flow,
    serialize_flow,
)

# A short flow: a trigger, a lookup, and a conditional notification.
SOURCE = """\
trigger = await shared_forms.WhenResponseSubmitted({"form_id": "f-42"});
details = await shared_forms.GetResponseDetails({"form_id": "f-42", "response_id": "r-1"});
if (details.score >= 90) {
  note = await shared_mail.SendEmail({"to": "owner@example.com", "subject": "High score", "message/body": "A submission scored above ninety."});
}
"""

flow = parse_flow(SOURCE)
print("statements:", len(flow.statements))
print("api calls: ", extract_api_sequence(flow))

# Canonical serialization normalizes spacing and layout.
print()
print(serialize_flow(flow))

# The same tree as plain dicts, ready for json.dumps.
print()
print(json.dumps(flow_to_dict(flow)["statements"][0], indent=2))

# A catalog document maps qualified names to their definitions.
CATALOG_DOC = {
    "shared_forms.WhenResponseSubmitted": {
        "FunctionName": "shared_forms.WhenResponseSubmitted",
        "Description": "Fires when a response is submitted to the chosen form.",
        "IsInTrainingSet": True,
        "DisplayName": "When a new response is submitted",
        "ParametersInfo": [
            {"Key": "form_id", "Type": "string", "Summary": "Form Id",
             "Format": "", "Description": "Unique identifier of the form."},
        ],
        "ResponseSchema": {},
        "IsTrigger": True,
    },
    "shared_forms.GetResponseDetails": {
        "FunctionName": "shared_forms.GetResponseDetails",
        "Description": "Retrieves the answers of one submitted form response.",
        "IsInTrainingSet": True,
        "DisplayName": "Get response details",
        "ParametersInfo": [
            {"Key": "form_id", "Type": "string", "Summary": "Form Id",
             "Format": "", "Description": "Unique identifier of the form."},
            {"Key": "response_id", "Type": "string", "Summary": "Response Id",
             "Format": "", "Description": "Identifier of the response."},
        ],
        "ResponseSchema": {},
        "IsTrigger": False,
    },
    "shared_mail.SendEmail": {
        "FunctionName": "shared_mail.SendEmail",
        "Description": "Sends an email message from the connected mailbox.",
        "IsInTrainingSet": True,
        "DisplayName": "Send an email",
        "ParametersInfo": [
            {"Key": "to", "Type": "string", "Summary": "To",
             "Format": "", "Description": "Recipient addresses separated by semicolons."},
            {"Key": "subject", "Type": "string", "Summary": "Subject",
             "Format": "", "Description": "Subject line of the email."},
            {"Key": "message/body", "Type": "string", "Summary": "Body",
             "Format": "", "Description": "Body text of the email."},
        ],
        "ResponseSchema": {},
        "IsTrigger": False,
    },
}

catalog = load_catalog(CATALOG_DOC)
result = validate_flow(flow, catalog)
print()
print("valid against catalog:", result.ok)

# A flow that invents a function and a parameter key.
bad = parse_flow(
    'x = await shared_mail.SendEmali({"to": "a@b.c"});\n'
    'y = await shared_forms.GetResponseDetails({"form_id": "f", "page": 2});'
)
bad_result = validate_flow(bad, catalog)
print("made-up functions: ", bad_result.made_up_functions)
print("made-up parameters:", bad_result.made_up_parameters)

# Parse errors carry one-based line and column positions.
try:
    parse_flow('a = shared_mail.SendEmail({"to": })')
except ParseError as exc:
    print()
    print(f"parse error at line {exc.line}, column {exc.column}:",
          f"expected {exc.expected}, found {exc.found}")

# Catalog entries render as definition blocks for prompting.
print()
print(render_function_definition(catalog.get("shared_mail.SendEmail")))
