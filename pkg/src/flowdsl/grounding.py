"""Metaprompt assembly: few-shots, function definitions, token budget.

A metaprompt stacks four sections in fixed order:

    <system instructions>

    <function definitions>      (FD and/or SFD, deduplicated)

    Query: <example prompt>     (few-shot blocks, separated by ---)
    DSL:
    <example flow>

    Query: <user query>
    DSL:

FD (regular function definitions) covers every function appearing in the
selected few-shot flows.  SFD (semantic function definitions) adds
definitions retrieved by embedding similarity between the user query and
each definition's own text, which can surface APIs the few-shots never
mention.

When the rendered prompt exceeds the token budget, content is dropped in
fixed order: lowest-ranked SFDs first, then lowest-ranked few-shots
(each drop re-deriving the FD set from the surviving shots), and never
the instructions or the query.
"""

from __future__ import annotations

from dataclasses import dataclass

from .catalog import Catalog, CatalogEntry, render_function_definition
from .dsl import extract_api_sequence
from .retrieval import Embedder, SampleIndex, retrieve_few_shots
from .samples import Sample

DEFAULT_SYSTEM_INSTRUCTIONS = (
    "Translate the user's request into a workflow automation script.\n"
    "Respond with the script only: one API call assignment per line, "
    "if/else conditionals allowed.\n"
    "Call only functions you know and pass only parameter keys they declare."
)

FEW_SHOT_SEPARATOR = "\n---\n"


class GroundingError(Exception):
    """Metaprompt cannot satisfy its constraints (budget too small)."""


def default_token_estimate(text: str) -> int:
    """Characters/4, rounded up.  Crude but provider-neutral."""
    return (len(text) + 3) // 4


@dataclass
class GroundingConfig:
    few_shot_count: int = 5
    include_fd: bool = False
    include_sfd: bool = False
    sfd_count: int = 5
    token_budget: int = 16000
    system_instructions: str = DEFAULT_SYSTEM_INSTRUCTIONS

    def __post_init__(self):
        if self.few_shot_count < 0:
            raise ValueError("few_shot_count must be >= 0")
        if self.sfd_count < 0:
            raise ValueError("sfd_count must be >= 0")
        if self.token_budget <= 0:
            raise ValueError("token_budget must be positive")

    def to_dict(self) -> dict:
        return {
            "few_shot_count": self.few_shot_count,
            "include_fd": self.include_fd,
            "include_sfd": self.include_sfd,
            "sfd_count": self.sfd_count,
            "token_budget": self.token_budget,
            "system_instructions": self.system_instructions,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundingConfig":
        allowed = {
            "few_shot_count", "include_fd", "include_sfd",
            "sfd_count", "token_budget", "system_instructions",
        }
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown grounding fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Metaprompt:
    system_instructions: str
    function_definition_blocks: list[str]
    few_shot_blocks: list[tuple[str, str]]
    user_query: str
    rendered: str
    token_estimate: int


# ---------------------------------------------------------------------------
# FD / SFD collection


def collect_regular_fds(
    few_shots: list[Sample], catalog: Catalog
) -> tuple[list[CatalogEntry], list[str]]:
    """Definitions for every function named in the few-shot flows.

    Deduplicated in first-appearance order (flow order, then list
    order).  Names the catalog lacks are returned separately instead of
    failing: a few-shot mined from history may reference a retired API.
    """
    entries: list[CatalogEntry] = []
    missing: list[str] = []
    seen: set[str] = set()
    for shot in few_shots:
        for name in extract_api_sequence(shot.flow):
            if name in seen:
                continue
            seen.add(name)
            entry = catalog.get(name)
            if entry is None:
                missing.append(name)
            else:
                entries.append(entry)
    return entries, missing


def sfd_embedding_text(entry: CatalogEntry) -> str:
    """Text embedded for semantic definition retrieval: display name,
    description, and parameter summaries.  Falls back to the qualified
    name when an entry carries no descriptive text at all."""
    parts = [entry.display_name, entry.description]
    parts += [p.summary for p in entry.parameters]
    text = " ".join(part for part in parts if part)
    return text if text.strip() else entry.function_name


def build_sfd_index(catalog: Catalog, embedder: Embedder) -> SampleIndex:
    """Index of definition texts keyed by qualified name.  Separate from
    the few-shot sample index: different ids, different texts."""
    entries = catalog.entries()
    ids = [e.function_name for e in entries]
    vectors = embedder.embed_many([sfd_embedding_text(e) for e in entries])
    return SampleIndex(ids=ids, vectors=vectors, name=f"sfd:{embedder.name}")


def retrieve_sfds(
    index: SampleIndex, query: str, n: int, embedder: Embedder, catalog: Catalog
) -> list[CatalogEntry]:
    """Top-n definitions by cosine between the query and definition text."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    results = retrieve_few_shots(index, query, n, embedder)
    entries = []
    for name, _score in results:
        entry = catalog.get(name)
        if entry is not None:
            entries.append(entry)
    return entries


# ---------------------------------------------------------------------------
# Assembly


def format_few_shot(prompt: str, flow_text: str) -> str:
    return f"Query: {prompt}\nDSL:\n{flow_text}"


def format_query(query: str) -> str:
    return f"Query: {query}\nDSL:"


def _render(
    instructions: str,
    definition_blocks: list[str],
    shot_blocks: list[str],
    query_block: str,
    template: str | None,
) -> str:
    definitions_text = "\n\n".join(definition_blocks)
    few_shots_text = FEW_SHOT_SEPARATOR.join(shot_blocks)
    if template is not None:
        return template.format(
            instructions=instructions,
            definitions=definitions_text,
            few_shots=few_shots_text,
            query=query_block,
        )
    sections = [instructions, definitions_text, few_shots_text, query_block]
    return "\n\n".join(section for section in sections if section)


def assemble_metaprompt(
    query: str,
    few_shots: list[Sample],
    fds: list[CatalogEntry],
    sfds: list[CatalogEntry],
    config: GroundingConfig,
    token_estimator=default_token_estimate,
    template: str | None = None,
) -> Metaprompt:
    """Render the prompt, shrinking it to the token budget if needed.

    ``fds`` must cover the functions of ``few_shots`` (what
    collect_regular_fds returns for them); after a few-shot is dropped
    for budget, the definition set is re-derived from the survivors so
    no orphaned definition lingers.
    """
    retained_shots = list(few_shots)
    retained_sfds = list(sfds) if config.include_sfd else []
    fd_map = {e.function_name: e for e in fds} if config.include_fd else {}

    while True:
        if config.include_fd:
            fd_entries: list[CatalogEntry] = []
            seen: set[str] = set()
            for shot in retained_shots:
                for name in extract_api_sequence(shot.flow):
                    if name not in seen:
                        seen.add(name)
                        if name in fd_map:
                            fd_entries.append(fd_map[name])
        else:
            fd_entries = []
            seen = set()
        definition_entries = fd_entries + [
            e for e in retained_sfds
            if e.function_name not in {x.function_name for x in fd_entries}
        ]
        definition_blocks = [render_function_definition(e) for e in definition_entries]
        shot_blocks = [format_few_shot(s.prompt, s.flow_text) for s in retained_shots]
        query_block = format_query(query)
        rendered = _render(
            config.system_instructions, definition_blocks, shot_blocks,
            query_block, template,
        )
        estimate = token_estimator(rendered)
        if estimate <= config.token_budget:
            return Metaprompt(
                system_instructions=config.system_instructions,
                function_definition_blocks=definition_blocks,
                few_shot_blocks=[(s.prompt, s.flow_text) for s in retained_shots],
                user_query=query,
                rendered=rendered,
                token_estimate=estimate,
            )
        if retained_sfds:
            retained_sfds.pop()
        elif retained_shots:
            retained_shots.pop()
        else:
            raise GroundingError(
                f"token budget {config.token_budget} cannot hold even the "
                f"instructions and query (estimate {estimate})"
            )
