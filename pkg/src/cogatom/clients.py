"""Generator / judge / embedder client contracts and offline implementations.

The pipeline never talks to a model provider directly: stages render a prompt
from a template, hand it to a client, and parse the response text. Transport
and auth belong to deployment configuration. This module ships deterministic
offline clients:

* `HashChatClient` / `HashEmbedder` — synthesize plausible, reproducible
  responses from a sha256 of the prompt. Used for fixtures, smoke runs, and
  the full mock pipeline.
* `ReplayChatClient` — replays a recorded transcript, keyed by prompt hash.
* `ScriptedClient` — returns a fixed response sequence (unit tests).
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .artifacts import read_jsonl, stable_u64
from .errors import ClientError

PROBLEM_DIMS = ("logical_consistency", "solvability", "difficulty", "concept_coverage")
SOLUTION_DIMS = (
    "conceptual_integration",
    "reasoning_depth_rigor",
    "key_insight",
    "error_path_exploration",
    "training_applicability",
)


@dataclass(frozen=True)
class ClientRequest:
    template_id: str
    rendered_prompt: str
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass(frozen=True)
class ClientResponse:
    text: str
    token_count: int


class ChatClient(Protocol):
    def complete(self, request: ClientRequest) -> ClientResponse: ...


class EmbedderClient(Protocol):
    @property
    def dim(self) -> int: ...

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


def prompt_hash(template_id: str, rendered_prompt: str) -> str:
    return hashlib.sha256(f"{template_id}\x00{rendered_prompt}".encode("utf-8")).hexdigest()


class HashEmbedder:
    """Deterministic embedder: unit vector seeded by the text's sha256.

    Identical texts map to identical vectors (so exact duplicates always
    merge); distinct texts map to quasi-orthogonal directions.
    """

    def __init__(self, dim: int = 32, salt: str = ""):
        self._dim = dim
        self.salt = salt

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            rng = np.random.Generator(np.random.PCG64(stable_u64("embed", self.salt, text)))
            vec = rng.standard_normal(self._dim)
            vec /= np.linalg.norm(vec)
            out.append(vec.tolist())
        return out


class HashChatClient:
    """Deterministic stand-in for a generator or judge model.

    The response format depends on the template id so every stage of the
    pipeline can run offline:

    * ``dependency_strength`` -> a single integer 1-5
    * ``seed_rubric``         -> a single integer 1-5
    * ``problem_generation``  -> a ``<question>...</question>`` block
    * ``solution_generation`` / ``solver`` -> steps ending in ``\\boxed{n}``
    * ``problem_quality`` / ``solution_quality`` -> JSON score object
    """

    def __init__(self, salt: str = ""):
        self.salt = salt

    def complete(self, request: ClientRequest) -> ClientResponse:
        h = stable_u64(self.salt, request.template_id, request.rendered_prompt)
        text = self._render(request.template_id, request.rendered_prompt, h)
        return ClientResponse(text=text, token_count=len(text.split()) + h % 97)

    def _render(self, template_id: str, prompt: str, h: int) -> str:
        if template_id == "dependency_strength":
            return str(1 + h % 5)
        if template_id == "seed_rubric":
            return str(1 + h % 5)
        if template_id == "problem_generation":
            tag = f"{h % 100000:05d}"
            return (
                f"<question>Problem {tag}: determine the quantity x satisfying the "
                f"combined constraints derived from the listed concepts.</question>"
            )
        if template_id in ("solution_generation", "solver"):
            # Answer depends on the question content only, so that two solver
            # profiles mostly agree; the salt perturbs ~25% of answers.
            base = stable_u64("answer", prompt) % 1000
            if self.salt and stable_u64("disagree", self.salt, prompt) % 4 == 0:
                base += 1
            return (
                "Step 1: restate the constraints.\n"
                "Step 2: combine them into a single equation.\n"
                f"Step 3: solve. The final result is \\boxed{{{base}}}"
            )
        if template_id == "problem_quality":
            return json.dumps({d: self._score(h, i) for i, d in enumerate(PROBLEM_DIMS)})
        if template_id == "solution_quality":
            return json.dumps({d: self._score(h, i) for i, d in enumerate(SOLUTION_DIMS)})
        return f"response:{h % 100000:05d}"

    @staticmethod
    def _score(h: int, i: int) -> int:
        b = (h >> (8 * (i % 8))) & 0xFF
        if b % 16 == 0:
            return 2
        return 3 + b % 3


class ScriptedClient:
    """Returns a fixed sequence of responses; raises when exhausted."""

    def __init__(self, texts: Sequence[str]):
        self._texts = list(texts)
        self.calls: list[ClientRequest] = []

    def complete(self, request: ClientRequest) -> ClientResponse:
        self.calls.append(request)
        if not self._texts:
            raise ClientError("scripted client exhausted")
        text = self._texts.pop(0)
        return ClientResponse(text=text, token_count=len(text.split()))


class FailingClient:
    """Always raises; exercises the retry-then-exit-4 path."""

    def complete(self, request: ClientRequest) -> ClientResponse:
        raise ClientError("transport failure")


class ReplayChatClient:
    """Replays a recorded transcript (jsonl of TranscriptRecorder) by prompt hash."""

    def __init__(self, transcript_path: str | Path):
        self._responses: dict[str, list[dict]] = {}
        for row in read_jsonl(transcript_path):
            self._responses.setdefault(row["prompt_hash"], []).append(row)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: ClientRequest) -> ClientResponse:
        key = prompt_hash(request.template_id, request.rendered_prompt)
        rows = self._responses.get(key)
        if not rows:
            raise ClientError(f"no recorded response for prompt hash {key[:12]}")
        # Repeated identical prompts replay in recorded order, then repeat the last.
        with self._lock:
            idx = min(self._cursor.get(key, 0), len(rows) - 1)
            self._cursor[key] = idx + 1
        row = rows[idx]
        return ClientResponse(text=row["response_text"], token_count=row["token_count"])


@dataclass
class TranscriptRecorder:
    """Wraps a client and logs every exchange for replay-based testing."""

    inner: ChatClient
    records: list[dict] = field(default_factory=list)

    def complete(self, request: ClientRequest) -> ClientResponse:
        response = self.inner.complete(request)
        self.records.append(
            {
                "template_id": request.template_id,
                "prompt_hash": prompt_hash(request.template_id, request.rendered_prompt),
                "response_text": response.text,
                "token_count": response.token_count,
            }
        )
        return response


def call_and_parse(
    client: ChatClient,
    request: ClientRequest,
    parse: Callable[[str], object | None],
    max_retries: int = 2,
):
    """Call `client` until `parse` accepts the response or retries run out.

    Returns ``(value, last_response, attempts_used)`` where `value` is None
    when every attempt failed to parse. Transport errors are retried like
    parse failures; if every attempt raised, the last ClientError propagates.
    """
    last_response: ClientResponse | None = None
    last_error: ClientError | None = None
    attempts = 0
    for attempts in range(1, max_retries + 2):
        try:
            last_response = client.complete(request)
        except ClientError as exc:
            last_error = exc
            continue
        value = parse(last_response.text)
        if value is not None:
            return value, last_response, attempts
    if last_response is None and last_error is not None:
        raise last_error
    return None, last_response, attempts


_INT_1_5 = re.compile(r"(?<!\d)([1-5])(?!\d)")


def parse_strength(text: str) -> int | None:
    """First standalone digit 1-5 in the response, else None."""
    m = _INT_1_5.search(text)
    return int(m.group(1)) if m else None


def parse_score_map(text: str, dims: Sequence[str]) -> dict[str, int] | None:
    """Parse one integer score per dimension from a JSON object or `key: n` lines."""
    scores: dict[str, int] = {}
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            for d in dims:
                v = obj.get(d)
                if isinstance(v, int) and 1 <= v <= 5:
                    scores[d] = v
    if len(scores) < len(dims):
        for d in dims:
            if d in scores:
                continue
            m = re.search(rf"{re.escape(d)}\D{{0,8}}([1-5])(?!\d)", text)
            if m:
                scores[d] = int(m.group(1))
    return scores if len(scores) == len(dims) else None
