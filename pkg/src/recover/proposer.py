"""Constrained edit proposals from a pluggable chat backend.

A proposer call renders a prompt from a :class:`ProposerRequest`, sends it to a
backend (remote OpenAI-compatible endpoint or an offline mock), and parses the
reply into :class:`EditProposal` objects.  Failures never propagate past
:meth:`Proposer.propose_or_empty`: a segment without a usable reply simply gets
no edits.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Mapping, Protocol, Sequence

import httpx

from .text import normalize_text

log = logging.getLogger(__name__)

API_KEY_ENV = "RECOVER_API_KEY"
PROMPT_VERSION = "v1"
SYSTEM_MESSAGE = "You are a careful transcript editor. You reply with a single JSON object and nothing else."
EMPTY_REPLY = '{"edits": []}'


class Mode(str, enum.Enum):
    CORRECT = "correct"
    SELECT_AND_CORRECT = "select_and_correct"


class EditStatus(str, enum.Enum):
    PROPOSED = "proposed"
    VERIFIED = "verified"
    REJECTED = "rejected"


class ParseError(ValueError):
    pass


class BackendError(RuntimeError):
    pass


class TransientBackendError(BackendError):
    """A failure worth retrying (timeouts, 429, 5xx)."""


@dataclass(frozen=True)
class EditProposal:
    char_start: int
    char_end: int
    find: str
    replace: str
    entity_type: str | None = None
    confidence: float = 0.0
    reason: str = ""
    status: EditStatus = EditStatus.PROPOSED

    def __post_init__(self) -> None:
        if self.char_start > self.char_end:
            raise ValueError(f"edit start {self.char_start} > end {self.char_end}")
        if not self.find or not self.replace:
            raise ValueError("edit find/replace must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_json(self) -> dict:
        return {
            "start": self.char_start,
            "end": self.char_end,
            "find": self.find,
            "replace": self.replace,
            "entity_type": self.entity_type,
            "confidence": self.confidence,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class ProposerRequest:
    mode: Mode
    transcripts: tuple[str, ...]
    candidates: tuple[tuple[str, str | None], ...]
    constraints: str = ""
    context: tuple[str, ...] = ()  # extra hypotheses shown read-only in correct mode

    def __post_init__(self) -> None:
        if not self.transcripts:
            raise ValueError("request needs at least one transcript")
        if self.mode is Mode.SELECT_AND_CORRECT and len(self.transcripts) < 2:
            raise ValueError("select-and-correct needs at least two transcripts")
        if self.mode is Mode.CORRECT and len(self.transcripts) != 1:
            raise ValueError("correct mode takes exactly one transcript")
        if not self.constraints:
            object.__setattr__(self, "constraints", load_template("rules").strip())


@dataclass
class ProposerResponse:
    edits: list[EditProposal]
    raw: str
    chosen_variant_index: int | None = None
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BackendReply:
    text: str
    usage: dict = field(default_factory=dict)


class Backend(Protocol):
    def complete(self, request: ProposerRequest, messages: list[dict]) -> BackendReply: ...


def load_template(name: str, version: str = PROMPT_VERSION) -> str:
    return resources.files("recover").joinpath("templates", f"{name}_{version}.txt").read_text(encoding="utf-8")


_SCHEMA_CORRECT = (
    '{"edits": [{"start": <int>, "end": <int>, "find": "<text from transcript>", '
    '"replace": "<candidate phrase>", "entity_type": "<type or null>", '
    '"confidence": <0..1>, "reason": "<short reason>"}]}'
)
_SCHEMA_SELECT = '{"chosen_variant": <variant number>, ' + _SCHEMA_CORRECT[1:]


def build_prompt(request: ProposerRequest) -> str:
    if request.mode is Mode.CORRECT:
        task = "Propose entity-only find/replace edits for the transcript below."
        transcripts = f"Transcript:\n{request.transcripts[0]}"
        if request.context:
            transcripts += "\n\nOther recognitions of the same audio (evidence only, do not edit these):\n"
            transcripts += "\n".join(f"- {t}" for t in request.context)
        schema = _SCHEMA_CORRECT
    else:
        n = len(request.transcripts)
        task = (
            f"Below are {n} alternative transcripts (variants 0 to {n - 1}) of the same audio. "
            'Choose the variant that is the best base transcript and report its number as "chosen_variant". '
            "Then propose entity-only find/replace edits for the chosen variant; offsets refer to that variant."
        )
        transcripts = "\n".join(f"Variant {i}:\n{t}" for i, t in enumerate(request.transcripts))
        schema = _SCHEMA_SELECT
    if request.candidates:
        candidates = "\n".join(
            f"{i}. {phrase}" + (f" [{etype}]" if etype else "")
            for i, (phrase, etype) in enumerate(request.candidates, 1)
        )
    else:
        candidates = "(no candidates; propose no edits)"
    return Template(load_template("prompt")).substitute(
        task=task,
        transcripts=transcripts,
        candidates=candidates,
        constraints=request.constraints,
        schema=schema,
    )


def build_messages(request: ProposerRequest) -> list[dict]:
    return [
        {"role": "system", "content": SYSTEM_MESSAGE},
        {"role": "user", "content": build_prompt(request)},
    ]


def request_fingerprint(request: ProposerRequest) -> str:
    """Stable key for scripting mock replies."""
    return hashlib.sha256(build_prompt(request).encode("utf-8")).hexdigest()[:16]


def _first_json_object(raw: str) -> dict | None:
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", raw):
        try:
            obj, _ = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _as_int(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return None


def parse_response(raw: str, mode: Mode = Mode.CORRECT, n_transcripts: int = 1) -> ProposerResponse:
    """Parse a backend reply into edits.

    Raises :class:`ParseError` when the reply holds no JSON object at all.
    Everything else (bad edits, bad variant index) degrades with a warning.
    """
    obj = _first_json_object(raw)
    if obj is None:
        raise ParseError("no JSON object in backend reply")

    warnings: list[str] = []
    chosen = None
    if mode is Mode.SELECT_AND_CORRECT:
        chosen = _as_int(obj.get("chosen_variant"))
        if chosen is None or not 0 <= chosen < n_transcripts:
            warnings.append(f"invalid chosen_variant {obj.get('chosen_variant')!r}; using variant 0")
            chosen = 0

    edits = []
    items = obj.get("edits", [])
    if not isinstance(items, list):
        warnings.append("'edits' is not a list; ignoring it")
        items = []
    for n, item in enumerate(items):
        if not isinstance(item, dict):
            warnings.append(f"edit {n}: not an object, dropped")
            continue
        find, replace = item.get("find"), item.get("replace")
        if not isinstance(find, str) or not find or not isinstance(replace, str) or not replace:
            warnings.append(f"edit {n}: missing find/replace, dropped")
            continue
        start, end = _as_int(item.get("start")), _as_int(item.get("end"))
        if start is None or end is None or start < 0 or start > end:
            warnings.append(f"edit {n}: unusable offsets ({item.get('start')!r}, {item.get('end')!r})")
            start = end = 0
        try:
            confidence = float(item.get("confidence", 0.0))
        except (TypeError, ValueError):
            confidence = 0.0
        if confidence != confidence:  # NaN
            confidence = 0.0
        etype = item.get("entity_type")
        reason = item.get("reason")
        edits.append(
            EditProposal(
                start,
                end,
                find,
                replace,
                entity_type=etype if isinstance(etype, str) else None,
                confidence=min(1.0, max(0.0, confidence)),
                reason=reason if isinstance(reason, str) else "",
            )
        )
    return ProposerResponse(edits, raw, chosen, warnings)


class Proposer:
    """Runs requests against a backend with retries and an in-flight cap."""

    def __init__(
        self,
        backend: Backend,
        max_retries: int = 2,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        sleep=time.sleep,
    ):
        self.backend = backend
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    def propose(self, request: ProposerRequest) -> ProposerResponse:
        """One proposer round trip.  Raises BackendError or ParseError."""
        messages = build_messages(request)
        started = time.perf_counter()
        retries = 0
        while True:
            try:
                with self._slots:
                    reply = self.backend.complete(request, messages)
                break
            except TransientBackendError as exc:
                if retries >= self.max_retries:
                    raise BackendError(f"giving up after {retries} retries: {exc}") from exc
                delay = self.backoff * 2**retries
                retries += 1
                log.warning("transient backend failure (%s); retry %d in %.2fs", exc, retries, delay)
                self.sleep(delay)
        response = parse_response(reply.text, request.mode, len(request.transcripts))
        response.meta = {
            "latency_s": time.perf_counter() - started,
            "retries": retries,
            "usage": dict(reply.usage),
        }
        return response

    def propose_or_empty(self, request: ProposerRequest) -> ProposerResponse:
        """Like :meth:`propose` but any failure yields an empty, warned response."""
        try:
            return self.propose(request)
        except (BackendError, ParseError) as exc:
            log.warning("proposer failed, continuing without edits: %s", exc)
            chosen = 0 if request.mode is Mode.SELECT_AND_CORRECT else None
            return ProposerResponse([], "", chosen, [f"{type(exc).__name__}: {exc}"], {"failed": True})


def propose(backend: Backend, request: ProposerRequest, **kwargs) -> ProposerResponse:
    return Proposer(backend, **kwargs).propose_or_empty(request)


class MockBackend:
    """Replies from a script keyed by :func:`request_fingerprint`."""

    def __init__(self, script: Mapping[str, str] | None = None, default: str = EMPTY_REPLY):
        self.script = dict(script or {})
        self.default = default

    def complete(self, request: ProposerRequest, messages: list[dict]) -> BackendReply:
        return BackendReply(self.script.get(request_fingerprint(request), self.default))


class LookupBackend:
    """Offline stand-in for an LLM that knows a table of misrecognitions.

    Each key of ``corrections`` is a (case-insensitive, whole-word) string to
    look for; its value is the entity phrase to put in its place.  A
    correction is only offered when its phrase is among the request's
    candidates.  In select mode the variant containing the most candidate
    phrases wins (lowest index on ties).
    """

    def __init__(self, corrections: Mapping[str, str]):
        self.corrections = sorted(corrections.items(), key=lambda kv: (-len(kv[0]), kv[0]))

    def complete(self, request: ProposerRequest, messages: list[dict]) -> BackendReply:
        allowed = {normalize_text(p): p for p, _ in request.candidates}
        types = {normalize_text(p): t for p, t in request.candidates}
        chosen = 0
        if request.mode is Mode.SELECT_AND_CORRECT:
            hits = [_count_phrases(t, allowed) for t in request.transcripts]
            chosen = max(range(len(hits)), key=lambda i: (hits[i], -i))
        text = request.transcripts[chosen]
        edits = []
        taken: list[tuple[int, int]] = []
        for find, replace in self.corrections:
            key = normalize_text(replace)
            if key not in allowed:
                continue
            for m in re.finditer(rf"(?<!\w){re.escape(find)}(?!\w)", text, flags=re.IGNORECASE):
                if any(m.start() < e and s < m.end() for s, e in taken):
                    continue
                taken.append((m.start(), m.end()))
                edits.append(
                    {
                        "start": m.start(),
                        "end": m.end(),
                        "find": m.group(),
                        "replace": allowed[key],
                        "entity_type": types[key],
                        "confidence": 0.9,
                        "reason": "near-miss of a listed entity",
                    }
                )
        edits.sort(key=lambda e: e["start"])
        body: dict = {"edits": edits}
        if request.mode is Mode.SELECT_AND_CORRECT:
            body = {"chosen_variant": chosen, **body}
        return BackendReply(json.dumps(body))


def _count_phrases(text: str, phrases: Mapping[str, str]) -> int:
    padded = f" {normalize_text(text)} "
    return sum(1 for p in phrases if f" {p} " in padded)


class RemoteBackend:
    """OpenAI-compatible ``/v1/chat/completions`` client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.0,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendError(f"remote backend needs an API key in ${API_KEY_ENV}")
        self.url = base_url.rstrip("/") + "/v1/chat/completions"
        self.model = model
        self.temperature = temperature
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    def complete(self, request: ProposerRequest, messages: list[dict]) -> BackendReply:
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        try:
            resp = self._client.post(self.url, json=payload)
        except httpx.TransportError as exc:
            raise TransientBackendError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat-completions response: {exc}") from exc
        return BackendReply(text or "", data.get("usage") or {})

    def close(self) -> None:
        self._client.close()


def candidate_pairs(lexicon, indices: Sequence[int]) -> tuple[tuple[str, str | None], ...]:
    return tuple((lexicon.entries[i].phrase, lexicon.entries[i].entity_type) for i in indices)
