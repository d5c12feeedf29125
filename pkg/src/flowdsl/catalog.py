"""API catalog: loading, lookup, and flow validation.

The catalog is the registry of callable functions.  On disk it is a JSON
object keyed by qualified function name:

    {
      "shared_teams.PostMessageToConversation": {
        "FunctionName": "shared_teams.PostMessageToConversation",
        "Description": "Posts a message to a chat or channel.",
        "IsInTrainingSet": true,
        "DisplayName": "Post message in a chat or channel",
        "ParametersInfo": [
          {"Key": "poster", "Type": "string", "Summary": "Post as",
           "Format": "", "Description": "Who the message is sent as."}
        ],
        "ResponseSchema": {},
        "IsTrigger": false
      }
    }

``FunctionName`` and ``ParametersInfo`` are required; the rest default to
empty/false; unknown extra fields are ignored.  A bare JSON array of
entry objects is accepted too.  Validation flags calls a flow makes that
the catalog does not license: made-up functions and made-up parameter
keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dsl import ApiCall, ApiCallStatement, Conditional, Flow, Statement


class CatalogError(Exception):
    """Malformed catalog input (bad JSON shape, duplicate names, bad entries)."""


@dataclass
class ParameterInfo:
    key: str
    type: str = ""
    summary: str = ""
    format: str = ""
    description: str = ""

    @property
    def leaf_key(self) -> str:
        """Last '/'-segment of the key; equals the key when there is no '/'.

        Parameter keys in entries may be slash paths into a payload
        ("message/recipient"); flows write just the leaf ("recipient").
        """
        return self.key.rsplit("/", 1)[-1]


@dataclass
class CatalogEntry:
    function_name: str
    description: str = ""
    display_name: str = ""
    parameters: list[ParameterInfo] = field(default_factory=list)
    response_schema: dict = field(default_factory=dict)
    is_trigger: bool = False
    in_training_set: bool = False

    @property
    def namespace(self) -> str:
        return self.function_name.split(".", 1)[0]

    @property
    def short_name(self) -> str:
        return self.function_name.split(".", 1)[1]

    def accepts_key(self, key: str) -> bool:
        """True when ``key`` matches a declared parameter exactly or by
        its leaf segment.  Matching is case-sensitive."""
        for param in self.parameters:
            if key == param.key or key == param.leaf_key:
                return True
        return False


class Catalog:
    """Lookup table of :class:`CatalogEntry` by qualified function name."""

    def __init__(self, entries: list[CatalogEntry]):
        self._by_name: dict[str, CatalogEntry] = {}
        for entry in entries:
            if entry.function_name in self._by_name:
                raise CatalogError(f"duplicate catalog entry: {entry.function_name}")
            self._by_name[entry.function_name] = entry

    def __len__(self) -> int:
        return len(self._by_name)

    def __contains__(self, function_name: str) -> bool:
        return function_name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def get(self, function_name: str) -> CatalogEntry | None:
        return self._by_name.get(function_name)

    def entries(self) -> list[CatalogEntry]:
        return list(self._by_name.values())

    def function_names(self) -> list[str]:
        return list(self._by_name.keys())


def _reject_duplicate_keys(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise CatalogError(f"duplicate JSON key: {key!r}")
        obj[key] = value
    return obj


def _parse_parameter(raw: object, owner: str, index: int) -> ParameterInfo:
    if not isinstance(raw, dict):
        raise CatalogError(
            f"entry {owner}: ParametersInfo[{index}] is not an object"
        )
    key = raw.get("Key")
    if not isinstance(key, str) or not key:
        raise CatalogError(
            f"entry {owner}: ParametersInfo[{index}] has no string 'Key'"
        )
    return ParameterInfo(
        key=key,
        type=str(raw.get("Type", "") or ""),
        summary=str(raw.get("Summary", "") or ""),
        format=str(raw.get("Format", "") or ""),
        description=str(raw.get("Description", "") or ""),
    )


def _parse_entry(raw: object, index: int) -> CatalogEntry:
    if not isinstance(raw, dict):
        raise CatalogError(f"catalog entry at index {index} is not an object")
    name = raw.get("FunctionName")
    if not isinstance(name, str) or not name:
        raise CatalogError(f"catalog entry at index {index} has no FunctionName")
    if name.count(".") != 1:
        raise CatalogError(
            f"entry {name!r}: FunctionName must be namespace.Function"
        )
    params_raw = raw.get("ParametersInfo")
    if not isinstance(params_raw, list):
        raise CatalogError(f"entry {name}: ParametersInfo missing or not a list")
    parameters = [_parse_parameter(p, name, i) for i, p in enumerate(params_raw)]
    seen_keys: set[str] = set()
    for param in parameters:
        if param.key in seen_keys:
            raise CatalogError(f"entry {name}: duplicate parameter key {param.key!r}")
        seen_keys.add(param.key)
    response_schema = raw.get("ResponseSchema") or {}
    if not isinstance(response_schema, dict):
        raise CatalogError(f"entry {name}: ResponseSchema is not an object")
    return CatalogEntry(
        function_name=name,
        description=str(raw.get("Description", "") or ""),
        display_name=str(raw.get("DisplayName", "") or ""),
        parameters=parameters,
        response_schema=response_schema,
        is_trigger=bool(raw.get("IsTrigger", False)),
        in_training_set=bool(raw.get("IsInTrainingSet", False)),
    )


def load_catalog(source: str | dict | list) -> Catalog:
    """Build a catalog from JSON text or an already-decoded object/list.

    The canonical shape is an object keyed by qualified name; each key
    must agree with its entry's FunctionName.
    """
    if isinstance(source, str):
        try:
            data = json.loads(source, object_pairs_hook=_reject_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"catalog is not valid JSON: {exc}") from exc
    else:
        data = source
    if isinstance(data, dict):
        entries = []
        for i, (key, raw) in enumerate(data.items()):
            entry = _parse_entry(raw, i)
            if entry.function_name != key:
                raise CatalogError(
                    f"catalog key {key!r} does not match FunctionName "
                    f"{entry.function_name!r}"
                )
            entries.append(entry)
        return Catalog(entries)
    if isinstance(data, list):
        return Catalog([_parse_entry(raw, i) for i, raw in enumerate(data)])
    raise CatalogError("catalog JSON must be an object keyed by function name")


def load_catalog_file(path: str) -> Catalog:
    with open(path, encoding="utf-8") as handle:
        return load_catalog(handle.read())


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationResult:
    """Made-up names in one flow, in first-appearance order.

    ``made_up_parameters`` holds (qualified_name, key) pairs for unknown
    keys on functions that do exist; unknown keys on unknown functions
    are subsumed by the function entry.
    """

    made_up_functions: list[str] = field(default_factory=list)
    made_up_parameters: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.made_up_functions and not self.made_up_parameters


def validate_flow(flow: Flow, catalog: Catalog) -> ValidationResult:
    result = ValidationResult()
    seen_functions: set[str] = set()
    seen_params: set[tuple[str, str]] = set()

    def visit(statements: list[Statement]) -> None:
        for statement in statements:
            if isinstance(statement, ApiCallStatement):
                _check_call(statement.call)
            elif isinstance(statement, Conditional):
                visit(statement.then_branch)
                if statement.else_branch is not None:
                    visit(statement.else_branch)

    def _check_call(call: ApiCall) -> None:
        entry = catalog.get(call.qualified_name)
        if entry is None:
            if call.qualified_name not in seen_functions:
                seen_functions.add(call.qualified_name)
                result.made_up_functions.append(call.qualified_name)
            return
        for key in call.arguments:
            if entry.accepts_key(key):
                continue
            pair = (call.qualified_name, key)
            if pair not in seen_params:
                seen_params.add(pair)
                result.made_up_parameters.append(pair)

    visit(flow.statements)
    return result


# ---------------------------------------------------------------------------
# Rendering (for metaprompt grounding)


def render_function_definition(entry: CatalogEntry) -> str:
    """Compact plain-text definition: name, description, one line per
    parameter as ``key (type): description`` (summary when description is
    empty).  The declared key is shown verbatim, slash path and all."""
    lines = [entry.function_name]
    if entry.description:
        lines.append(entry.description)
    for param in entry.parameters:
        doc = param.description or param.summary
        type_part = f" ({param.type})" if param.type else ""
        line = f"  {param.key}{type_part}"
        if doc:
            line = f"{line}: {doc}"
        lines.append(line)
    return "\n".join(lines)
