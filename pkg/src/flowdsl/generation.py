"""Completion clients: turn a rendered metaprompt into candidate DSL text.

Two implementations share one request/result shape.  MockCompletionClient
answers from a fixture map and is fully deterministic, which is what the
end-to-end tests and offline experiment runs use.  HttpCompletionClient
talks to a chat-completions style endpoint with retry on transient
failures.  Completions are untrusted text either way: nothing here
executes them, the parser downstream is the only gate.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field

FINISH_REASONS = ("completed", "truncated", "refused", "transport_error")

# chat-completions finish_reason vocabulary -> ours
_HTTP_FINISH_MAP = {
    "stop": "completed",
    "length": "truncated",
    "content_filter": "refused",
}


class CompletionError(Exception):
    """Client misconfiguration or a non-retryable protocol failure."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_output_tokens: int
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    model_name: str = "mock"

    def __post_init__(self):
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: str
    latency_ms: int = 0

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "completed" and not self.text:
            raise ValueError("a completed result cannot have empty text")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


def output_token_estimate(text: str) -> int:
    """Same characters/4 heuristic the prompt budget uses."""
    return (len(text) + 3) // 4


def prompt_digest(prompt: str) -> str:
    """Stable key for a rendered prompt: hex sha256."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def trailing_query_key(prompt: str) -> str | None:
    """The user query from the final ``Query: ...\\nDSL:`` block.

    Few-shot blocks match the same shape, so only the last occurrence
    counts.  Returns None when the prompt does not end that way, for
    example under a custom template.
    """
    matches = re.findall(r"Query: (.*)\nDSL:$", prompt)
    return matches[-1] if matches else None


def _apply_stops(text: str, stops: tuple[str, ...]) -> str:
    cut = len(text)
    for stop in stops:
        pos = text.find(stop)
        if pos != -1:
            cut = min(cut, pos)
    return text[:cut]


class MockCompletionClient:
    """Deterministic fixture-backed client.

    ``responses`` maps keys to completion text.  With ``keying="hash"``
    the key is sha256 of the full rendered prompt; with ``"query"`` it
    is the trailing user query, which lets a fixture be written straight
    from a dataset without knowing the prompt layout in advance.

    Unknown keys and empty fixture texts come back as refusals rather
    than raising: the pipeline treats a refusal like any other
    unparseable completion, so a gap in the fixture degrades a metric
    instead of killing the run.
    """

    def __init__(
        self,
        responses: dict[str, str],
        keying: str = "hash",
        refuse_all: bool = False,
        latency_ms: int = 0,
    ):
        if keying not in ("hash", "query"):
            raise ValueError(f"keying must be 'hash' or 'query', not {keying!r}")
        for key, text in responses.items():
            if not isinstance(key, str) or not isinstance(text, str):
                raise ValueError("fixture map must be str -> str")
        self.responses = dict(responses)
        self.keying = keying
        self.refuse_all = refuse_all
        self.latency_ms = latency_ms

    def _key(self, prompt: str) -> str | None:
        if self.keying == "hash":
            return prompt_digest(prompt)
        return trailing_query_key(prompt)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if self.refuse_all:
            return CompletionResult("", "refused", self.latency_ms)
        key = self._key(request.prompt)
        text = self.responses.get(key) if key is not None else None
        if not text:
            return CompletionResult("", "refused", self.latency_ms)
        text = _apply_stops(text, request.stop_sequences)
        if not text:
            return CompletionResult("", "refused", self.latency_ms)
        if output_token_estimate(text) > request.max_output_tokens:
            # ceiling = max_output_tokens, expressed back in characters
            clipped = text[: request.max_output_tokens * 4]
            return CompletionResult(clipped, "truncated", self.latency_ms)
        return CompletionResult(text, "completed", self.latency_ms)


def load_mock_fixtures(source: str | dict) -> MockCompletionClient:
    """Build a mock client from fixture JSON (text or parsed).

    Canonical form is a flat object mapping prompt sha256 to response
    text.  The wrapped form {"keying": "hash"|"query", "responses":
    {...}} selects query keying instead.
    """
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise CompletionError(f"fixture file is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise CompletionError("fixture JSON must be an object")
    if "responses" in data and isinstance(data.get("responses"), dict):
        unknown = set(data) - {"keying", "responses"}
        if unknown:
            raise CompletionError(f"unknown fixture fields: {sorted(unknown)}")
        keying = data.get("keying", "hash")
        responses = data["responses"]
    else:
        keying, responses = "hash", data
    try:
        return MockCompletionClient(responses, keying=keying)
    except ValueError as exc:
        raise CompletionError(str(exc)) from exc


def load_mock_fixtures_file(path: str) -> MockCompletionClient:
    with open(path, encoding="utf-8") as handle:
        return load_mock_fixtures(handle.read())


class HttpCompletionClient:
    """Chat-completions client with bounded retry.

    URL comes from ``FLOWDSL_COMPLETION_URL``, auth from
    ``FLOWDSL_API_KEY``.  Transient failures (connection errors, 408,
    429, any 5xx) are retried with exponential backoff; once retries are
    exhausted the result carries finish_reason="transport_error" so a
    batch run can keep going.  Refusals are terminal and never retried.
    Other 4xx statuses and malformed bodies raise CompletionError: they
    mean the configuration is wrong, not that the network hiccuped.
    """

    RETRYABLE_STATUSES = frozenset({408, 429})

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        transport=None,
        sleep=time.sleep,
    ):
        import httpx

        self.url = url or os.environ.get("FLOWDSL_COMPLETION_URL", "")
        if not self.url:
            raise CompletionError(
                "no completion endpoint: pass url= or set FLOWDSL_COMPLETION_URL"
            )
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        api_key = api_key or os.environ.get("FLOWDSL_API_KEY", "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(headers=headers, transport=transport, timeout=60.0)

    def _payload(self, request: CompletionRequest) -> dict:
        payload = {
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        return payload

    def complete(self, request: CompletionRequest) -> CompletionResult:
        import httpx

        payload = self._payload(request)
        started = time.monotonic()
        attempt = 0
        while True:
            retryable = None
            try:
                response = self._client.post(self.url, json=payload)
            except httpx.HTTPError as exc:
                retryable = f"transport failure: {exc}"
            else:
                status = response.status_code
                if status == 200:
                    return self._parse(response, started)
                if status in self.RETRYABLE_STATUSES or status >= 500:
                    retryable = f"status {status}"
                else:
                    raise CompletionError(
                        f"completion endpoint returned {status}: "
                        f"{response.text[:200]}"
                    )
            if attempt >= self.max_retries:
                elapsed = int((time.monotonic() - started) * 1000)
                return CompletionResult("", "transport_error", elapsed)
            self._sleep(self.backoff_base * (2 ** attempt))
            attempt += 1

    def _parse(self, response, started: float) -> CompletionResult:
        elapsed = int((time.monotonic() - started) * 1000)
        try:
            body = response.json()
            choice = body["choices"][0]
            text = choice["message"]["content"]
            raw_reason = choice.get("finish_reason", "stop")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise CompletionError(
                f"malformed completion response: {response.text[:200]}"
            ) from exc
        if not isinstance(text, str):
            raise CompletionError("completion content is not a string")
        reason = _HTTP_FINISH_MAP.get(raw_reason, "completed")
        if not text:
            reason = "refused"
        return CompletionResult(text, reason, elapsed)


_FENCE_OPEN = re.compile(r"^```[^\n]*\n", re.MULTILINE)


def extract_dsl(raw: str) -> str:
    """Candidate DSL region of a completion.

    First fenced code block when one exists, otherwise the whole text
    trimmed.  An unclosed fence (truncated completion) yields everything
    after the opening line.  May return "", the parser decides.
    """
    match = _FENCE_OPEN.search(raw)
    if match is None:
        return raw.strip()
    rest = raw[match.end():]
    close = re.search(r"^```\s*$", rest, re.MULTILINE)
    if close is not None:
        rest = rest[: close.start()]
    return rest.strip()
