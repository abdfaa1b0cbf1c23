"""Text normalization, tokenization and entity tagging shared by every stage.

All matching in the package goes through :func:`normalize_text` /
:func:`tokenize`, so retrieval, fusion, guardrails and scoring agree on what a
"word" is.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})
_JOINERS = "'-"
_WORD_RE = re.compile(r"\S+")


def _normalize_word(chunk: str) -> str:
    kept = [c for c in chunk.lower().translate(_APOSTROPHES) if c.isalnum() or c in _JOINERS]
    out = []
    for i, c in enumerate(kept):
        if c in _JOINERS:
            # joiners survive only between two alphanumerics
            if 0 < i < len(kept) - 1 and kept[i - 1].isalnum() and kept[i + 1].isalnum():
                out.append(c)
        else:
            out.append(c)
    return "".join(out)


def normalize_text(raw: str) -> str:
    """Lowercase, strip punctuation (keeping intra-word ``'`` and ``-``), collapse spaces.

    >>> normalize_text("Cytiva, Inc.")
    'cytiva inc'
    """
    return " ".join(w for w in (_normalize_word(m) for m in raw.split()) if w)


@dataclass(frozen=True)
class Token:
    surface: str
    norm: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class TokenStream:
    source: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]


def tokenize(raw: str) -> TokenStream:
    """Split ``raw`` on whitespace, keeping char offsets of each surviving token.

    Chunks that normalize to nothing (bare punctuation) are dropped, so
    ``" ".join(stream.norms) == normalize_text(raw)``.
    """
    tokens = []
    for m in _WORD_RE.finditer(raw):
        norm = _normalize_word(m.group())
        if norm:
            tokens.append(Token(m.group(), norm, m.start(), m.end()))
    return TokenStream(raw, tuple(tokens))


@dataclass(frozen=True)
class LexiconEntry:
    phrase: str
    entity_type: str | None = None


@dataclass
class EntityLexicon:
    """Entity phrases with canonical casing plus a normalized-phrase index.

    Construction rejects duplicate or empty phrases; use
    :meth:`from_entries` to drop them with a warning instead.
    """

    entries: list[LexiconEntry]
    index: dict[str, int] = field(init=False, repr=False)
    words: list[tuple[str, ...]] = field(init=False, repr=False)
    by_first_word: dict[str, list[int]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {}
        self.words = []
        for i, entry in enumerate(self.entries):
            norm = normalize_text(entry.phrase)
            if not norm:
                raise ValueError(f"lexicon entry {i} is empty after normalization: {entry.phrase!r}")
            if norm in self.index:
                raise ValueError(f"duplicate lexicon phrase {entry.phrase!r} (as {norm!r})")
            self.index[norm] = i
            self.words.append(tuple(norm.split(" ")))
        # longest phrase first within each bucket, for greedy tagging
        self.by_first_word = {}
        for i, words in enumerate(self.words):
            self.by_first_word.setdefault(words[0], []).append(i)
        for ids in self.by_first_word.values():
            ids.sort(key=lambda i: -len(self.words[i]))

    @classmethod
    def from_entries(cls, entries: Iterable[LexiconEntry | str]) -> EntityLexicon:
        seen: set[str] = set()
        kept = []
        for e in entries:
            if isinstance(e, str):
                e = LexiconEntry(e)
            norm = normalize_text(e.phrase)
            if not norm:
                log.warning("skipping empty lexicon phrase %r", e.phrase)
                continue
            if norm in seen:
                log.warning("skipping duplicate lexicon phrase %r", e.phrase)
                continue
            seen.add(norm)
            kept.append(e)
        return cls(kept)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, text: str) -> int | None:
        """Index of the phrase equal to ``text`` under normalization, if any."""
        return self.index.get(normalize_text(text))

    def normalized(self, i: int) -> str:
        return " ".join(self.words[i])


def load_lexicon(path: str | Path) -> EntityLexicon:
    """Read a lexicon from plain text (one phrase per line) or JSONL."""
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    is_jsonl = path.suffix == ".jsonl" or (lines and lines[0].lstrip().startswith("{"))
    entries = []
    for lineno, line in enumerate(lines, 1):
        if is_jsonl:
            obj = json.loads(line)
            if not isinstance(obj, dict) or not isinstance(obj.get("phrase"), str):
                raise ValueError(f"{path}:{lineno}: expected an object with a string 'phrase'")
            entries.append(LexiconEntry(obj["phrase"], obj.get("type")))
        else:
            entries.append(LexiconEntry(line.strip()))
    if not entries:
        raise ValueError(f"{path}: lexicon is empty")
    return EntityLexicon.from_entries(entries)


@dataclass(frozen=True)
class SegmentRecord:
    segment_id: str
    hypotheses: tuple[str, ...]
    reference: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.hypotheses:
            raise ValueError(f"segment {self.segment_id!r} has no hypotheses")


@dataclass(frozen=True)
class EntitySpanTag:
    phrase_index: int
    token_start: int
    token_end: int  # exclusive

    def __len__(self) -> int:
        return self.token_end - self.token_start


def tag_entity_tokens(
    stream: TokenStream | Sequence[str], lexicon: EntityLexicon
) -> list[EntitySpanTag]:
    """Greedy longest-match tagging of lexicon phrases, left to right, no overlaps."""
    norms = stream.norms if isinstance(stream, TokenStream) else list(stream)
    tags = []
    i = 0
    while i < len(norms):
        hit = None
        for idx in lexicon.by_first_word.get(norms[i], ()):
            words = lexicon.words[idx]
            if tuple(norms[i : i + len(words)]) == words:
                hit = EntitySpanTag(idx, i, i + len(words))
                break
        if hit:
            tags.append(hit)
            i = hit.token_end
        else:
            i += 1
    return tags
