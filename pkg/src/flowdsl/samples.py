"""Dataset records: (id, NL prompt, gold DSL flow) triples in JSONL files.

Each line of a dataset file is one JSON object:

    {"id": "s-001", "prompt": "email me when a form comes in", "flow": "..."}

Loading is strict.  A gold flow that does not parse, a duplicate id, or a
malformed record is a :class:`DatasetError` naming the offending lines;
silently dropping bad records would skew every downstream metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dsl import Flow, ParseError, parse_flow


class DatasetError(Exception):
    """Malformed dataset file (bad JSON, missing fields, duplicate ids,
    unparseable gold flows)."""


@dataclass
class Sample:
    id: str
    prompt: str
    flow_text: str
    _flow: Flow | None = field(default=None, repr=False, compare=False)

    @property
    def flow(self) -> Flow:
        """Parsed gold flow, computed on first access and cached."""
        if self._flow is None:
            self._flow = parse_flow(self.flow_text)
        return self._flow

    def to_dict(self) -> dict:
        return {"id": self.id, "prompt": self.prompt, "flow": self.flow_text}


def sample_from_dict(record: dict) -> Sample:
    missing = [k for k in ("id", "prompt", "flow") if k not in record]
    if missing:
        raise DatasetError(f"record missing field(s): {', '.join(missing)}")
    sid, prompt, flow_text = record["id"], record["prompt"], record["flow"]
    if not isinstance(sid, str) or not sid:
        raise DatasetError("record field 'id' must be a non-empty string")
    if not isinstance(prompt, str) or not prompt.strip():
        raise DatasetError(f"sample {sid}: 'prompt' must be a non-empty string")
    if not isinstance(flow_text, str):
        raise DatasetError(f"sample {sid}: 'flow' must be a string")
    return Sample(id=sid, prompt=prompt, flow_text=flow_text)


def parse_dataset(text: str) -> list[Sample]:
    """Parse JSONL dataset text; blank lines are allowed and skipped."""
    samples: list[Sample] = []
    seen_ids: set[str] = set()
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: invalid JSON ({exc.msg})")
            continue
        if not isinstance(record, dict):
            problems.append(f"line {lineno}: record is not an object")
            continue
        try:
            sample = sample_from_dict(record)
        except DatasetError as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        if sample.id in seen_ids:
            problems.append(f"line {lineno}: duplicate id {sample.id!r}")
            continue
        # Gold flows must parse; reject the record otherwise.
        try:
            sample.flow
        except ParseError as exc:
            problems.append(f"line {lineno}: sample {sample.id!r} flow does not parse ({exc})")
            continue
        seen_ids.add(sample.id)
        samples.append(sample)
    if problems:
        raise DatasetError(
            "dataset rejected:\n  " + "\n  ".join(problems)
        )
    return samples


def load_dataset(path: str) -> list[Sample]:
    with open(path, encoding="utf-8") as handle:
        return parse_dataset(handle.read())


def save_dataset(samples: list[Sample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample.to_dict()) + "\n")
