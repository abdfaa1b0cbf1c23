"""Fusing N hypotheses into one base transcript.

Four strategies: keep hypothesis 0, pick the hypothesis with the most exact
candidate hits, majority-vote merge around such a pivot (ROVER-style), or let
the proposer backend choose.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .proposer import EditProposal, Mode, Proposer, ProposerRequest, candidate_pairs
from .retrieval import CandidateSet
from .text import EntityLexicon, TokenStream, tokenize

log = logging.getLogger(__name__)


class FusionStrategy(str, enum.Enum):
    ONE_BEST = "one-best"
    ENTITY_SELECT = "entity-select"
    ROVER = "rover"
    LLM_SELECT = "llm-select"


@dataclass
class FusionResult:
    fused_text: str
    chosen_variant_index: int | None
    per_variant_entity_hits: list[int]
    provenance: str
    edits: list[EditProposal] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    proposer_meta: dict = field(default_factory=dict)


class Op(str, enum.Enum):
    MATCH = "match"
    SUBSTITUTE = "sub"
    DELETE = "del"  # pivot token has no partner
    INSERT = "ins"  # other token has no partner


class Step(NamedTuple):
    op: Op
    pivot: int | None
    other: int | None


@dataclass(frozen=True)
class AlignmentPath:
    steps: tuple[Step, ...]
    score: int


def _streams(hypotheses: Sequence[TokenStream | str]) -> list[TokenStream]:
    return [h if isinstance(h, TokenStream) else tokenize(h) for h in hypotheses]


def count_entity_hits(hypothesis: TokenStream | str, candidates: CandidateSet, lexicon: EntityLexicon) -> int:
    """Number of candidate phrases occurring word-aligned in the hypothesis."""
    norms = _streams([hypothesis])[0].norms
    hits = 0
    for idx in candidates.phrase_indices:
        words = lexicon.words[idx]
        n = len(words)
        if any(tuple(norms[i : i + n]) == words for i in range(len(norms) - n + 1)):
            hits += 1
    return hits


def _entity_aware_index(streams: list[TokenStream], hits: list[int]) -> int:
    # most hits, then longest raw text, then lowest index
    return max(range(len(streams)), key=lambda i: (hits[i], len(streams[i].source), -i))


def select_one_best(hypotheses, candidates: CandidateSet | None = None, lexicon: EntityLexicon | None = None) -> FusionResult:
    streams = _streams(hypotheses)
    hits = [0] * len(streams)
    if candidates is not None and lexicon is not None:
        hits[0] = count_entity_hits(streams[0], candidates, lexicon)
    return FusionResult(streams[0].source, 0, hits, FusionStrategy.ONE_BEST.value)


def select_entity_aware(hypotheses, candidates: CandidateSet, lexicon: EntityLexicon) -> FusionResult:
    streams = _streams(hypotheses)
    hits = [count_entity_hits(s, candidates, lexicon) for s in streams]
    best = _entity_aware_index(streams, hits)
    return FusionResult(streams[best].source, best, hits, FusionStrategy.ENTITY_SELECT.value)


def align_global(pivot: TokenStream | Sequence[str], other: TokenStream | Sequence[str]) -> AlignmentPath:
    """Needleman-Wunsch on normalized tokens: match +1, mismatch -1, gap -1.

    Traceback prefers the diagonal, then a pivot-only step, then an other-only step.
    """
    a = pivot.norms if isinstance(pivot, TokenStream) else list(pivot)
    b = other.norms if isinstance(other, TokenStream) else list(other)
    n, m = len(a), len(b)
    score = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        score[i][0] = -i
    for j in range(1, m + 1):
        score[0][j] = -j
    for i in range(1, n + 1):
        row, up = score[i], score[i - 1]
        for j in range(1, m + 1):
            diag = up[j - 1] + (1 if a[i - 1] == b[j - 1] else -1)
            row[j] = max(diag, up[j] - 1, row[j - 1] - 1)

    steps = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and score[i][j] == score[i - 1][j - 1] + (1 if a[i - 1] == b[j - 1] else -1):
            steps.append(Step(Op.MATCH if a[i - 1] == b[j - 1] else Op.SUBSTITUTE, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and score[i][j] == score[i - 1][j] - 1:
            steps.append(Step(Op.DELETE, i - 1, None))
            i -= 1
        else:
            steps.append(Step(Op.INSERT, None, j - 1))
            j -= 1
    steps.reverse()
    return AlignmentPath(tuple(steps), score[n][m])


def _plurality(votes: list[tuple[str | None, str | None]], pivot_norm: str | None) -> tuple[str | None, str | None]:
    """Winning (norm, surface) among votes listed in hypothesis order, pivot first."""
    counts = Counter(norm for norm, _ in votes)
    top = max(counts.values())
    winners = [norm for norm in counts if counts[norm] == top]
    norm = pivot_norm if pivot_norm in winners else winners[0]
    surface = next(s for v, s in votes if v == norm)
    return norm, surface


def fuse_rover(hypotheses, candidates: CandidateSet, lexicon: EntityLexicon) -> FusionResult:
    """Majority-vote merge of all hypotheses aligned to an entity-aware pivot.

    A pivot position keeps the plurality token (a deletion votes for nothing);
    ties go to the pivot.  Tokens inserted between pivot positions survive only
    when at least ``N // 2 + 1`` hypotheses insert the same token in that gap.
    """
    streams = _streams(hypotheses)
    hits = [count_entity_hits(s, candidates, lexicon) for s in streams]
    p = _entity_aware_index(streams, hits)
    pivot = streams[p]
    size = len(pivot)

    # votes[i]: (norm, surface) per hypothesis in index order; pivot included
    votes: list[list[tuple[str | None, str | None]]] = [[] for _ in range(size)]
    # inserts[k]: per hypothesis, tokens placed between pivot positions k-1 and k
    inserts: list[list[list[tuple[str, str]]]] = [[] for _ in range(size + 1)]

    for h, stream in enumerate(streams):
        if h == p:
            for i, tok in enumerate(pivot):
                votes[i].append((tok.norm, tok.surface))
            continue
        slot_tokens: list[list[tuple[str, str]]] = [[] for _ in range(size + 1)]
        slot = 0
        for step in align_global(pivot, stream).steps:
            if step.op is Op.INSERT:
                tok = stream[step.other]
                slot_tokens[slot].append((tok.norm, tok.surface))
            elif step.op is Op.DELETE:
                votes[step.pivot].append((None, None))
                slot = step.pivot + 1
            else:
                tok = stream[step.other]
                votes[step.pivot].append((tok.norm, tok.surface))
                slot = step.pivot + 1
        for k in range(size + 1):
            inserts[k].append(slot_tokens[k])

    need = len(streams) // 2 + 1
    out: list[str] = []

    def emit_slot(k: int) -> None:
        support: Counter[str] = Counter()
        first: dict[str, tuple[int, int, str]] = {}
        for h, run in enumerate(inserts[k]):
            support.update({norm for norm, _ in run})
            for pos, (norm, surface) in enumerate(run):
                first.setdefault(norm, (h, pos, surface))
        kept = [norm for norm, c in support.items() if c >= need]
        for norm in sorted(kept, key=lambda nm: first[nm][:2]):
            out.append(first[norm][2])

    for i in range(size):
        emit_slot(i)
        norm, surface = _plurality(votes[i], pivot[i].norm)
        if norm is not None:
            out.append(surface)
    emit_slot(size)
    # an unchanged merge keeps the pivot's original spacing and punctuation
    text = pivot.source if out == [t.surface for t in pivot] else " ".join(out)
    return FusionResult(text, None, hits, FusionStrategy.ROVER.value)


def select_with_proposer(
    hypotheses, candidates: CandidateSet, lexicon: EntityLexicon, proposer: Proposer
) -> FusionResult:
    """One proposer call that picks a variant and may propose edits for it.

    Backend failures propagate to the caller.
    """
    streams = _streams(hypotheses)
    hits = [count_entity_hits(s, candidates, lexicon) for s in streams]
    pairs = candidate_pairs(lexicon, candidates.phrase_indices)
    if len(streams) == 1:
        request = ProposerRequest(Mode.CORRECT, (streams[0].source,), pairs)
    else:
        request = ProposerRequest(Mode.SELECT_AND_CORRECT, tuple(s.source for s in streams), pairs)
    response = proposer.propose(request)
    chosen = response.chosen_variant_index or 0
    warnings = list(response.warnings)
    if not 0 <= chosen < len(streams):
        warnings.append(f"chosen variant {chosen} out of range; using 0")
        chosen = 0
    for w in warnings:
        log.warning("llm-select: %s", w)
    return FusionResult(
        streams[chosen].source,
        chosen,
        hits,
        FusionStrategy.LLM_SELECT.value,
        edits=list(response.edits),
        warnings=warnings,
        proposer_meta=response.meta,
    )


def fuse(
    strategy: FusionStrategy | str,
    hypotheses,
    candidates: CandidateSet,
    lexicon: EntityLexicon,
    proposer: Proposer | None = None,
) -> FusionResult:
    strategy = FusionStrategy(strategy)
    if strategy is FusionStrategy.ONE_BEST:
        return select_one_best(hypotheses, candidates, lexicon)
    if strategy is FusionStrategy.ENTITY_SELECT:
        return select_entity_aware(hypotheses, candidates, lexicon)
    if strategy is FusionStrategy.ROVER:
        return fuse_rover(hypotheses, candidates, lexicon)
    if proposer is None:
        raise ValueError("llm-select needs a proposer backend")
    return select_with_proposer(hypotheses, candidates, lexicon, proposer)
