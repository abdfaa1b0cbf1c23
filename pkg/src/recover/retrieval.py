"""Per-segment entity candidate retrieval.

Every lexicon phrase is scored against the union of tokens from all of a
segment's hypotheses::

    score = n_exact * w_exact + f_best * w_fuzzy + p_hit * w_phonetic

and the ``top_k`` best phrases become that segment's candidate set.
"""

from __future__ import annotations

import math

from dataclasses import dataclass
from typing import Iterable, Sequence

from .phonetic import PhoneticIndex, phonetic_key
from .text import EntityLexicon, TokenStream


@dataclass(frozen=True)
class RetrievalWeights:
    w_exact: float = 1.0
    w_fuzzy: float = 1.2
    w_phonetic: float = 0.6
    fuzzy_len_window: int = 3
    phonetic_prefix_len: int = 5
    top_k: int = 200

    def __post_init__(self) -> None:
        if min(self.w_exact, self.w_fuzzy, self.w_phonetic) < 0:
            raise ValueError("retrieval weights must be non-negative")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.fuzzy_len_window < 0:
            raise ValueError("fuzzy_len_window must be non-negative")


@dataclass(frozen=True)
class Candidate:
    phrase_index: int
    score: float
    n_exact: int
    f_best: float
    p_hit: int


@dataclass(frozen=True)
class CandidateSet:
    segment_id: str
    candidates: tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    @property
    def phrase_indices(self) -> list[int]:
        return [c.phrase_index for c in self.candidates]


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two strings (or any two sequences)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _within(a: str, b: str, limit: int) -> int | None:
    """Edit distance if it is at most ``limit``, else None.

    Only the diagonal band ``|i - j| <= limit`` is filled; cells outside it
    cannot lie on a path of cost ``<= limit``.
    """
    if limit < 0 or abs(len(a) - len(b)) > limit:
        return None
    n, m = len(a), len(b)
    big = limit + 1
    prev = [j if j <= limit else big for j in range(m + 1)]
    for i in range(1, n + 1):
        lo, hi = max(1, i - limit), min(m, i + limit)
        cur = [big] * (m + 1)
        if i <= limit:
            cur[0] = i
        ca = a[i - 1]
        row_min = cur[0]
        for j in range(lo, hi + 1):
            v = prev[j - 1] + (ca != b[j - 1])
            if prev[j] + 1 < v:
                v = prev[j] + 1
            if cur[j - 1] + 1 < v:
                v = cur[j - 1] + 1
            cur[j] = v
            if v < row_min:
                row_min = v
        if row_min > limit:
            return None
        prev = cur
    return prev[m] if prev[m] <= limit else None


def normalized_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def build_token_pool(hypotheses: Iterable[TokenStream]) -> list[str]:
    """Sorted union of normalized tokens across all hypotheses."""
    pool: set[str] = set()
    for stream in hypotheses:
        pool.update(stream.norms)
    return sorted(pool)


class TokenPool:
    """A token pool prepared for repeated phrase scoring within one segment."""

    def __init__(self, tokens: Iterable[str], weights: RetrievalWeights = RetrievalWeights()):
        self.tokens = sorted(set(tokens))
        self.weights = weights
        self._set = frozenset(self.tokens)
        self._by_len: dict[int, list[str]] = {}
        for t in self.tokens:
            self._by_len.setdefault(len(t), []).append(t)
        self._phonetic = PhoneticIndex(
            (phonetic_key(t) for t in self.tokens), prefix_len=weights.phonetic_prefix_len
        )
        self._fuzzy_memo: dict[str, float] = {}

    def __contains__(self, word: str) -> bool:
        return word in self._set

    def best_similarity(self, word: str) -> float:
        memo = self._fuzzy_memo.get(word)
        if memo is not None:
            return memo
        window = self.weights.fuzzy_len_window
        best = 0.0
        if word in self._set:
            best = 1.0
        else:
            n = len(word)
            # nearest lengths first: their similarity ceiling is highest
            for size in sorted(range(max(0, n - window), n + window + 1), key=lambda s: abs(s - n)):
                if 1.0 - abs(size - n) / max(size, n, 1) <= best:
                    continue
                longest = max(size, n)
                for tok in self._by_len.get(size, ()):
                    # only distances that beat the current best matter
                    limit = math.ceil((1.0 - best) * longest) - 1
                    d = _within(word, tok, limit)
                    if d is not None:
                        best = max(best, 1.0 - d / longest)
        self._fuzzy_memo[word] = best
        return best

    def phonetic_hit(self, word: str) -> bool:
        return self._phonetic.hit(phonetic_key(word))


def score_entity(
    words: Sequence[str], pool: TokenPool | Iterable[str], weights: RetrievalWeights = RetrievalWeights()
) -> Candidate:
    """Score one phrase (its normalized words) against a token pool.

    The returned ``Candidate`` has ``phrase_index=-1``; :func:`retrieve_top_k`
    fills it in.
    """
    if not isinstance(pool, TokenPool):
        pool = TokenPool(pool, weights)
    n_exact = sum(1 for w in words if w in pool)
    f_best = max((pool.best_similarity(w) for w in words), default=0.0)
    p_hit = int(any(pool.phonetic_hit(w) for w in words))
    score = n_exact * weights.w_exact + f_best * weights.w_fuzzy + p_hit * weights.w_phonetic
    return Candidate(-1, score, n_exact, f_best, p_hit)


def retrieve_top_k(
    lexicon: EntityLexicon,
    hypotheses: Sequence[TokenStream],
    weights: RetrievalWeights = RetrievalWeights(),
    segment_id: str = "",
) -> CandidateSet:
    if not len(lexicon):
        raise ValueError("cannot retrieve from an empty lexicon")
    pool = TokenPool(build_token_pool(hypotheses), weights)
    scored = []
    for i, words in enumerate(lexicon.words):
        c = score_entity(words, pool, weights)
        scored.append(Candidate(i, c.score, c.n_exact, c.f_best, c.p_hit))
    scored.sort(key=lambda c: (-c.score, len(lexicon.normalized(c.phrase_index)), lexicon.normalized(c.phrase_index)))
    return CandidateSet(segment_id, tuple(scored[: weights.top_k]))
