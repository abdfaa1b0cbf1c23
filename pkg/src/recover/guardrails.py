"""Deterministic checks on proposed edits, and left-to-right application."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

from .proposer import EditProposal, EditStatus
from .retrieval import normalized_similarity
from .text import EntityLexicon, normalize_text


class Rejection(str, enum.Enum):
    NOT_IN_LEXICON = "NotInLexicon"
    CASE_ONLY = "CaseOnly"
    SPAN_NOT_FOUND = "SpanNotFound"
    LOW_SIMILARITY = "LowSimilarity"
    OVERLAP = "Overlap"


@dataclass(frozen=True)
class GuardrailConfig:
    min_edit_similarity: float = 0.5
    allow_case_only: bool = False
    lexicon_match_case_insensitive: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_edit_similarity <= 1.0:
            raise ValueError("min_edit_similarity must lie in [0, 1]")


@dataclass(frozen=True)
class VerificationOutcome:
    edit: EditProposal
    verdict: EditStatus
    rejection_code: Rejection | None = None
    relocated: bool = False
    similarity: float | None = None

    @property
    def verified(self) -> bool:
        return self.verdict is EditStatus.VERIFIED


@dataclass(frozen=True)
class AppliedEdit:
    edit: EditProposal
    out_start: int
    out_end: int


def _reject(edit, code, relocated=False, similarity=None) -> VerificationOutcome:
    return VerificationOutcome(replace(edit, status=EditStatus.REJECTED), EditStatus.REJECTED, code, relocated, similarity)


def _occurrences(haystack: str, needle: str) -> list[int]:
    found, i = [], haystack.find(needle)
    while i != -1:
        found.append(i)
        i = haystack.find(needle, i + 1)
    return found


def locate_span(transcript: str, find: str, claimed_start: int) -> int | None:
    """Start of the occurrence of ``find`` nearest ``claimed_start``.

    Exact matches are preferred over case-insensitive ones; ties go to the
    earlier occurrence.
    """
    hits = _occurrences(transcript, find)
    if not hits:
        lowered = transcript.lower()
        if len(lowered) == len(transcript):
            hits = _occurrences(lowered, find.lower())
    if not hits:
        return None
    return min(hits, key=lambda i: (abs(i - claimed_start), i))


def _lexicon_phrase(replacement: str, lexicon: EntityLexicon, case_insensitive: bool) -> str | None:
    if case_insensitive:
        idx = lexicon.lookup(replacement)
        return None if idx is None else lexicon.entries[idx].phrase
    for entry in lexicon.entries:
        if entry.phrase == replacement:
            return entry.phrase
    return None


def verify_edit(
    edit: EditProposal,
    transcript: str,
    lexicon: EntityLexicon,
    config: GuardrailConfig = GuardrailConfig(),
) -> VerificationOutcome:
    """Run the lexicon, case-only, span and similarity checks, in that order."""
    canonical = _lexicon_phrase(edit.replace, lexicon, config.lexicon_match_case_insensitive)
    if canonical is None:
        return _reject(edit, Rejection.NOT_IN_LEXICON)

    if not config.allow_case_only and normalize_text(edit.find) == normalize_text(edit.replace):
        return _reject(edit, Rejection.CASE_ONLY)

    relocated = False
    start, end = edit.char_start, edit.char_end
    if transcript[start:end] != edit.find or end > len(transcript):
        found = locate_span(transcript, edit.find, start)
        if found is None:
            return _reject(edit, Rejection.SPAN_NOT_FOUND)
        start, end, relocated = found, found + len(edit.find), True

    similarity = normalized_similarity(normalize_text(transcript[start:end]), normalize_text(canonical))
    fixed = replace(edit, char_start=start, char_end=end, find=transcript[start:end], replace=canonical)
    if similarity < config.min_edit_similarity:
        return _reject(fixed, Rejection.LOW_SIMILARITY, relocated, similarity)
    return VerificationOutcome(replace(fixed, status=EditStatus.VERIFIED), EditStatus.VERIFIED, None, relocated, similarity)


def apply_edits(
    transcript: str, outcomes: Sequence[VerificationOutcome]
) -> tuple[str, list[AppliedEdit], list[VerificationOutcome]]:
    """Apply verified edits left to right, skipping overlaps.

    Returns the corrected text, the applied edits with their offsets in the
    output, and ``outcomes`` again with edits skipped for overlapping an
    earlier one turned into ``Overlap`` rejections.
    """
    ordered = sorted(
        ((n, o) for n, o in enumerate(outcomes) if o.verified),
        key=lambda no: (no[1].edit.char_start, -(no[1].edit.char_end - no[1].edit.char_start), no[0]),
    )
    pieces: list[str] = []
    applied: list[AppliedEdit] = []
    final = list(outcomes)
    cursor = 0
    out_len = 0
    for n, outcome in ordered:
        e = outcome.edit
        # sorted by start, so overlapping an earlier edit means starting before the cursor
        if e.char_start < cursor:
            final[n] = _reject(e, Rejection.OVERLAP, outcome.relocated, outcome.similarity)
            continue
        pieces.append(transcript[cursor : e.char_start])
        out_len += e.char_start - cursor
        pieces.append(e.replace)
        applied.append(AppliedEdit(e, out_len, out_len + len(e.replace)))
        out_len += len(e.replace)
        cursor = e.char_end
    pieces.append(transcript[cursor:])
    return "".join(pieces), applied, final
