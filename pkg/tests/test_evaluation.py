import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_edit_distance
from recover.evaluation import (
    AlignmentCounts,
    EntityMatchCounts,
    ReportError,
    align_words,
    aggregate_report,
    entity_prf,
    entity_scoped_counts,
    rwerr,
    score_segment,
    wer,
)
from recover.tables import check_tables, load_fixture
from recover.text import EntityLexicon, tag_entity_tokens, tokenize

LEX = EntityLexicon.from_entries(["cytiva", "Max Planck Institute", "Lufthansa"])


def test_align_examples():
    assert align_words("a b c", "a b c").counts == AlignmentCounts(3, 0, 0, 0)
    assert align_words("a b c", "a x c").counts == AlignmentCounts(2, 1, 0, 0)
    assert align_words("a b", "a b z").counts == AlignmentCounts(2, 0, 0, 1)
    assert align_words("", "").counts == AlignmentCounts()
    assert align_words("a b", "").counts == AlignmentCounts(0, 0, 2, 0)


def test_align_ignores_case_and_punctuation():
    assert align_words("Hello, World!", "hello world").counts == AlignmentCounts(2, 0, 0, 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=6), st.lists(st.sampled_from("abc"), max_size=6))
def test_align_errors_equal_edit_distance(r, h):
    a = align_words(r, h)
    if len(r) + len(h) <= 8:
        assert a.counts.errors == brute_edit_distance(r, h)
    assert a.counts.n_ref == len(r)
    assert a.counts.correct + a.counts.substitutions + a.counts.insertions == len(h)


def test_wer():
    assert wer(AlignmentCounts(5, 0, 0, 0)) == 0.0
    assert wer(AlignmentCounts()) is None
    assert wer(AlignmentCounts(4994, 1248, 293, 15)) * 100 == pytest.approx(23.81, abs=0.005)
    assert wer(AlignmentCounts(2433, 1694, 644, 119)) * 100 == pytest.approx(51.50, abs=0.005)
    assert wer(AlignmentCounts(5511, 781, 243, 12)) * 100 == pytest.approx(15.85, abs=0.005)


def test_rwerr():
    assert rwerr(23.81, 15.85) == pytest.approx(33.4, abs=0.1)
    assert rwerr(25.57, 13.88) == pytest.approx(45.7, abs=0.1)
    assert rwerr(10.0, 10.0) == 0.0
    assert rwerr(0.0, 5.0) is None
    assert rwerr(None, 5.0) is None


def _scoped(ref, hyp):
    ref_s = tokenize(ref)
    return entity_scoped_counts(align_words(ref_s, hyp), tag_entity_tokens(ref_s, LEX))


def test_entity_scoped_counts():
    assert _scoped("we met max planck institute staff", "we met max planck institute staff") == AlignmentCounts(3, 0, 0, 0)
    assert _scoped("we met max planck institute staff", "we met max black institute staff") == AlignmentCounts(2, 1, 0, 0)
    assert _scoped("bought cytiva today", "bought today") == AlignmentCounts(0, 0, 1, 0)
    # insertion right after an entity column counts; one far away does not
    assert _scoped("bought cytiva today", "bought cytiva uh today") == AlignmentCounts(1, 0, 0, 1)
    assert _scoped("bought cytiva today ok", "uh bought cytiva today ok") == AlignmentCounts(1, 0, 0, 0)
    assert _scoped("no entities here", "no entities here") == AlignmentCounts()


def test_entity_prf():
    ref = tokenize("cytiva and lufthansa")
    tags = tag_entity_tokens(ref, LEX)
    assert entity_prf(tags, "Cytiva and Lufthansa!", LEX) == (1.0, 1.0, 1.0)
    p, r, f = entity_prf(tags, "sitiva and lufthansa", LEX)
    assert (p, r) == (1.0, 0.5)
    p, r, f = entity_prf(tags, "cytiva and lufthansa and max planck institute", LEX)
    assert p < 1 and r == 1.0
    assert EntityMatchCounts(0, 0, 0).prf() == (None, None, 0.0)
    assert EntityMatchCounts(0, 2, 0).prf() == (None, 0.0, 0.0)


def _segments(pairs):
    return [score_segment(f"s{i}", ref, hyp, LEX) for i, (ref, hyp) in enumerate(pairs)]


def test_aggregate_micro_average_and_rwerr():
    base = _segments([("bought cytiva today", "bought sitiva today"), ("flew lufthansa", "flew lufthansa")])
    sys = _segments([("bought cytiva today", "bought cytiva today"), ("flew lufthansa", "flew lufthansa")])
    rep = aggregate_report({"baseline": base, "sys": sys}, baseline="baseline")
    assert rep.per_system["baseline"].e_wer == pytest.approx(0.5)
    assert rep.per_system["sys"].e_wer == 0.0
    assert rep.per_system["sys"].rwerr_vs_baseline == pytest.approx(100.0)
    assert rep.per_system["baseline"].rwerr_vs_baseline == 0.0
    j = json.loads(rep.dumps())
    assert j["systems"]["baseline"]["e_wer"] == 50.0
    assert "sys" in rep.to_table() and rep.to_csv().startswith("system,")


def test_aggregate_errors():
    a = _segments([("cytiva", "cytiva")])
    with pytest.raises(ReportError):
        aggregate_report({})
    with pytest.raises(ReportError):
        aggregate_report({"x": []})
    other = [score_segment("zz", "cytiva", "cytiva", LEX)]
    with pytest.raises(ReportError, match="zz"):
        aggregate_report({"a": a, "b": other})
    with pytest.raises(ReportError):
        aggregate_report({"a": a}, baseline="missing")


def test_segments_without_entities_do_not_move_e_wer():
    with_ent = _segments([("bought cytiva", "bought sitiva")])
    plus = with_ent + [score_segment("extra", "plain words only", "plain word only", LEX)]
    e1 = aggregate_report({"x": with_ent}).per_system["x"]
    e2 = aggregate_report({"x": plus}).per_system["x"]
    assert e1.entity_counts == e2.entity_counts and e1.e_wer == e2.e_wer
    assert e2.wer != e1.wer


def test_published_deltas_reproduced():
    fixture = load_fixture()
    earnings = next(d for d in fixture["datasets"] if d["name"] == "Earnings-21")
    b, s = (AlignmentCounts(*(earnings["systems"][k][x] for x in "CSDI")) for k in ("baseline", "llm-select"))
    assert s.correct - b.correct == 517 and s.substitutions - b.substitutions == -467
    assert all(c.passed for c in check_tables(fixture))


def test_casing_invariance():
    a = score_segment("s", "We flew Lufthansa.", "we flew LUFTHANSA", LEX)
    assert a.overall.errors == 0 and a.entity.errors == 0
