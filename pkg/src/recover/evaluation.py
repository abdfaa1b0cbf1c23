"""Word alignment scoring: WER, entity-scoped WER, RWERR and entity P/R/F1."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .text import EntityLexicon, EntitySpanTag, TokenStream, tag_entity_tokens, tokenize

log = logging.getLogger(__name__)

CORRECT, SUB, DEL, INS = "C", "S", "D", "I"


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentCounts:
    correct: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0

    @property
    def n_ref(self) -> int:
        return self.correct + self.substitutions + self.deletions

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: AlignmentCounts) -> AlignmentCounts:
        return AlignmentCounts(
            self.correct + other.correct,
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )

    def to_json(self) -> dict:
        return {"C": self.correct, "S": self.substitutions, "D": self.deletions, "I": self.insertions, "n_ref": self.n_ref}


class Column(NamedTuple):
    op: str
    ref: int | None
    hyp: int | None


@dataclass(frozen=True)
class WordAlignment:
    columns: tuple[Column, ...]
    counts: AlignmentCounts


def _norms(x: TokenStream | Sequence[str] | str) -> list[str]:
    if isinstance(x, str):
        return tokenize(x).norms
    if isinstance(x, TokenStream):
        return x.norms
    return list(x)


def align_words(ref, hyp) -> WordAlignment:
    """Minimum edit alignment of normalized tokens.

    Traceback order on ties: match/substitution, deletion, insertion.
    """
    r, h = _norms(ref), _norms(hyp)
    n, m = len(r), len(h)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, up = d[i], d[i - 1]
        ri = r[i - 1]
        for j in range(1, m + 1):
            row[j] = min(up[j - 1] + (ri != h[j - 1]), up[j] + 1, row[j - 1] + 1)

    cols = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (r[i - 1] != h[j - 1]):
            cols.append(Column(CORRECT if r[i - 1] == h[j - 1] else SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            cols.append(Column(DEL, i - 1, None))
            i -= 1
        else:
            cols.append(Column(INS, None, j - 1))
            j -= 1
    cols.reverse()
    c = Counter(col.op for col in cols)
    return WordAlignment(tuple(cols), AlignmentCounts(c[CORRECT], c[SUB], c[DEL], c[INS]))


def wer(counts: AlignmentCounts) -> float | None:
    """(S + D + I) / n_ref, or None when there are no reference tokens."""
    if counts.n_ref == 0:
        return None
    return counts.errors / counts.n_ref


def entity_scoped_counts(alignment: WordAlignment, tags: Sequence[EntitySpanTag]) -> AlignmentCounts:
    """C/S/D over tagged reference tokens; insertions next to an entity column count too."""
    inside = {i for t in tags for i in range(t.token_start, t.token_end)}
    cols = alignment.columns

    def is_entity(k: int) -> bool:
        return 0 <= k < len(cols) and cols[k].ref is not None and cols[k].ref in inside

    c = Counter()
    for k, col in enumerate(cols):
        if col.op == INS:
            if is_entity(k - 1) or is_entity(k + 1):
                c[INS] += 1
        elif col.ref in inside:
            c[col.op] += 1
    return AlignmentCounts(c[CORRECT], c[SUB], c[DEL], c[INS])


def rwerr(e_wer_base: float | None, e_wer_sys: float | None) -> float | None:
    """Relative reduction of ``e_wer_sys`` against ``e_wer_base``, in percent."""
    if e_wer_base is None or e_wer_sys is None or e_wer_base <= 0:
        return None
    return (e_wer_base - e_wer_sys) / e_wer_base * 100.0


@dataclass(frozen=True)
class EntityMatchCounts:
    matched: int = 0
    reference: int = 0
    predicted: int = 0

    def __add__(self, other: EntityMatchCounts) -> EntityMatchCounts:
        return EntityMatchCounts(
            self.matched + other.matched, self.reference + other.reference, self.predicted + other.predicted
        )

    def prf(self) -> tuple[float | None, float | None, float]:
        precision = self.matched / self.predicted if self.predicted else None
        recall = self.matched / self.reference if self.reference else None
        if not precision or not recall:
            return precision, recall, 0.0
        return precision, recall, 2 * precision * recall / (precision + recall)


def entity_match_counts(ref_tags: Sequence[EntitySpanTag], hyp, lexicon: EntityLexicon) -> EntityMatchCounts:
    """Occurrence-level exact matching of tagged phrases, reference vs hypothesis.

    Predicted occurrences are paired in order with unmatched reference
    occurrences of the same phrase.
    """
    predicted = tag_entity_tokens(_norms(hyp), lexicon)
    remaining = Counter(t.phrase_index for t in ref_tags)
    matched = 0
    for tag in predicted:
        if remaining[tag.phrase_index] > 0:
            remaining[tag.phrase_index] -= 1
            matched += 1
    return EntityMatchCounts(matched, len(ref_tags), len(predicted))


def entity_prf(ref_tags: Sequence[EntitySpanTag], hyp, lexicon: EntityLexicon) -> tuple[float | None, float | None, float]:
    return entity_match_counts(ref_tags, hyp, lexicon).prf()


@dataclass(frozen=True)
class SegmentScore:
    segment_id: str
    overall: AlignmentCounts
    entity: AlignmentCounts
    entities: EntityMatchCounts

    @property
    def wer(self) -> float | None:
        return wer(self.overall)

    @property
    def e_wer(self) -> float | None:
        return wer(self.entity)


def score_segment(segment_id: str, reference: str, hypothesis: str, lexicon: EntityLexicon) -> SegmentScore:
    ref = tokenize(reference)
    tags = tag_entity_tokens(ref, lexicon)
    alignment = align_words(ref, hypothesis)
    return SegmentScore(
        segment_id,
        alignment.counts,
        entity_scoped_counts(alignment, tags),
        entity_match_counts(tags, hypothesis, lexicon),
    )


@dataclass
class SystemMetrics:
    wer: float | None
    e_wer: float | None
    rwerr_vs_baseline: float | None
    precision: float | None
    recall: float | None
    f1: float
    overall_counts: AlignmentCounts
    entity_counts: AlignmentCounts
    entity_matches: EntityMatchCounts

    def to_json(self) -> dict:
        return {
            "wer": _pct(self.wer),
            "e_wer": _pct(self.e_wer),
            "rwerr_vs_baseline": _round(self.rwerr_vs_baseline),
            "precision": _pct(self.precision),
            "recall": _pct(self.recall),
            "f1": _pct(self.f1),
            "overall_counts": self.overall_counts.to_json(),
            "entity_counts": self.entity_counts.to_json(),
            "entity_matches": asdict(self.entity_matches),
        }


def _round(x: float | None, nd: int = 4) -> float | None:
    return None if x is None else round(x, nd)


def _pct(x: float | None) -> float | None:
    """Rates are reported in percent."""
    return None if x is None else round(100.0 * x, 4)


@dataclass
class EvaluationReport:
    per_system: dict[str, SystemMetrics]
    baseline: str | None
    segment_count: int
    entity_reference_tokens: int
    excluded_from_e_wer: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "baseline": self.baseline,
            "segment_count": self.segment_count,
            "entity_reference_tokens": self.entity_reference_tokens,
            "segments_without_entities": self.excluded_from_e_wer,
            "systems": {name: m.to_json() for name, m in self.per_system.items()},
            **self.extra,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def rows(self) -> list[dict]:
        rows = []
        for name, m in self.per_system.items():
            j = m.to_json()
            rows.append(
                {
                    "system": name,
                    "wer": j["wer"],
                    "e_wer": j["e_wer"],
                    "rwerr": j["rwerr_vs_baseline"],
                    "precision": j["precision"],
                    "recall": j["recall"],
                    "f1": j["f1"],
                    "C": m.entity_counts.correct,
                    "S": m.entity_counts.substitutions,
                    "D": m.entity_counts.deletions,
                    "I": m.entity_counts.insertions,
                }
            )
        return rows

    def to_table(self) -> str:
        headers = ["system", "wer", "e_wer", "rwerr", "precision", "recall", "f1", "C", "S", "D", "I"]
        cells = [[_fmt(row[h]) for h in headers] for row in self.rows()]
        widths = [max(len(h), *(len(r[k]) for r in cells)) if cells else len(h) for k, h in enumerate(headers)]
        lines = [
            f"segments: {self.segment_count}   entity reference tokens: {self.entity_reference_tokens}"
            + (f"   baseline: {self.baseline}" if self.baseline else ""),
            "  ".join(h.ljust(w) if k == 0 else h.rjust(w) for k, (h, w) in enumerate(zip(headers, widths))),
        ]
        lines.append("  ".join("-" * w for w in widths))
        for r in cells:
            lines.append("  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(r, widths))))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["system"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def aggregate_report(
    per_system: Mapping[str, Sequence[SegmentScore]], baseline: str | None = None
) -> EvaluationReport:
    """Pool counts per system (micro-average) and compute RWERR against ``baseline``."""
    if not per_system or not any(per_system.values()):
        raise ReportError("nothing to aggregate: empty corpus")
    id_sets = {name: {s.segment_id for s in scores} for name, scores in per_system.items()}
    reference_ids = next(iter(id_sets.values()))
    for name, ids in id_sets.items():
        if ids != reference_ids:
            diff = sorted(ids.symmetric_difference(reference_ids))
            raise ReportError(f"system {name!r} was scored on a different segment set; differing ids: {diff}")
    if baseline is not None and baseline not in per_system:
        raise ReportError(f"baseline {baseline!r} is not among the systems {sorted(per_system)}")

    metrics: dict[str, SystemMetrics] = {}
    for name, scores in per_system.items():
        overall = sum((s.overall for s in scores), AlignmentCounts())
        entity = sum((s.entity for s in scores), AlignmentCounts())
        matches = sum((s.entities for s in scores), EntityMatchCounts())
        p, r, f = matches.prf()
        metrics[name] = SystemMetrics(wer(overall), wer(entity), None, p, r, f, overall, entity, matches)
    if baseline is not None:
        base = metrics[baseline].e_wer
        for m in metrics.values():
            m.rwerr_vs_baseline = rwerr(base, m.e_wer)

    first = next(iter(per_system.values()))
    excluded = sum(1 for s in first if s.entity.n_ref == 0)
    if excluded:
        log.warning("%d segment(s) have no entity tokens and do not contribute to E-WER", excluded)
    return EvaluationReport(
        metrics,
        baseline,
        segment_count=len(first),
        entity_reference_tokens=sum(s.entity.n_ref for s in first),
        excluded_from_e_wer=excluded,
    )
