"""Structural prior estimators and the gold-availability accounting."""

from __future__ import annotations

import pytest

from langpref import (
    CorpusStats,
    CulturalCue,
    GoldProvenance,
    PriorTable,
    RankedCandidate,
    SitelinkMap,
    build_run,
    corpus_prior,
    cultural_prior,
    exposure_prior,
    gold_availability_report,
    gold_prior,
)
from langpref.errors import DataError, DomainError, IntegrityError


def _run(run_id: str, query_lang: str, pools: dict[str, list[str]]):
    cands = [
        RankedCandidate(query_id=qid, doc_id=f"{qid}-d{i}", rank=i + 1, score=float(-i), doc_lang=lang)
        for qid, langs in pools.items()
        for i, lang in enumerate(langs)
    ]
    return build_run(cands, run_id=run_id, query_lang=query_lang)


def _cue(lang: str, confidence: float = 0.9) -> CulturalCue:
    return CulturalCue(
        is_culture_specific=True,
        cultural_language=lang,
        country_or_region=None,
        confidence=confidence,
        rationale="test",
    )


def _table(**overrides) -> PriorTable:
    base = dict(
        p_ret={("en", "en"): 0.75, ("en", "ko"): 0.25},
        p_gold={("en", "en"): 1.0, ("en", "ko"): 0.5},
        p_cult={"en": 0.5, "ko": 0.5},
        p_db={"en": 0.8, "ko": 0.2},
        passage_len={"en": 510.0, "ko": 350.0},
    )
    base.update(overrides)
    return PriorTable(**base)


def test_prior_table_accepts_consistent_tables():
    table = _table()
    assert table.get("p_ret", "en", "ko") == 0.25
    assert table.get("p_db", "en", "ko") == 0.2
    assert table.get("passage_len", "ko", "ko") == 350.0


def test_prior_table_rejects_bad_rows_and_values():
    with pytest.raises(IntegrityError, match="p_ret row"):
        _table(p_ret={("en", "en"): 0.6, ("en", "ko"): 0.3})
    with pytest.raises(DataError, match="outside"):
        _table(p_gold={("en", "en"): 1.5})
    with pytest.raises(IntegrityError, match="p_db sums"):
        _table(p_db={"en": 0.5, "ko": 0.2})
    with pytest.raises(DataError, match="positive"):
        _table(passage_len={"en": 0.0})


def test_prior_table_missing_cell_is_an_error():
    table = _table()
    with pytest.raises(DataError, match="no value"):
        table.get("p_ret", "ko", "en")
    with pytest.raises(DataError, match="no value"):
        table.get("p_cult", "en", "ja")
    with pytest.raises(DataError, match="unknown prior"):
        table.get("p_retr", "en", "ko")


def test_prior_table_json_round_trip(tmp_path):
    table = _table()
    path = tmp_path / "priors.json"
    table.write(path)
    assert PriorTable.read(path) == table


def test_exposure_prior_averages_per_query_distributions():
    run = _run("init_en", "en", {"q1": ["en", "en", "ko"], "q2": ["ko"]})
    prior = exposure_prior([run], languages=("en", "ko"))
    # q1 contributes (en 2/3, ko 1/3), q2 contributes (en 0, ko 1).
    assert prior[("en", "en")] == pytest.approx(1 / 3)
    assert prior[("en", "ko")] == pytest.approx(2 / 3)
    assert sum(v for (q, _), v in prior.items() if q == "en") == pytest.approx(1.0)


def test_exposure_prior_truncates_at_depth():
    run = _run("init_en", "en", {"q1": ["en", "en", "ko"], "q2": ["ko"]})
    prior = exposure_prior([run], depth=2, languages=("en", "ko"))
    assert prior[("en", "en")] == pytest.approx(0.5)
    assert prior[("en", "ko")] == pytest.approx(0.5)


def test_exposure_prior_unions_doc_languages_across_rows():
    runs = [
        _run("init_en", "en", {"q1": ["en", "th"]}),
        _run("init_ko", "ko", {"k1": ["ko", "ko"]}),
    ]
    prior = exposure_prior(runs, languages=("en", "ko"))
    # The th column exists for every query language, zero-filled where unseen.
    assert prior[("ko", "th")] == 0.0
    assert prior[("en", "th")] == pytest.approx(0.5)
    for query_lang in ("en", "ko"):
        assert sum(v for (q, _), v in prior.items() if q == query_lang) == pytest.approx(1.0)


def test_exposure_prior_validation():
    with pytest.raises(DataError, match="at least one run"):
        exposure_prior([])
    with pytest.raises(DomainError):
        exposure_prior([_run("r", "en", {"q1": ["en"]})], depth=0)
    with pytest.raises(DataError, match="query language"):
        exposure_prior([_run("r", None, {"q1": ["en"]})])
    with pytest.raises(IntegrityError, match="two runs"):
        exposure_prior([_run("a", "en", {"q1": ["en"]}), _run("b", "en", {"q1": ["ko"]})])


def test_gold_prior_counts_coverage_per_edition():
    prov = {"q1": GoldProvenance(query_id="q1", gold_wpids=frozenset({"P1"}))}
    links = SitelinkMap(langs_by_wpid={"P1": frozenset({"en", "ko"})})
    prior = gold_prior({"en": {"q1", "q2"}}, prov, links, languages=("en", "ko"))
    # q2 has no provenance entry: unknown counts as unavailable but
    # stays in the denominator.
    assert prior[("en", "en")] == pytest.approx(0.5)
    assert prior[("en", "ko")] == pytest.approx(0.5)


def test_gold_prior_rejects_empty_query_set():
    links = SitelinkMap(langs_by_wpid={})
    with pytest.raises(DataError, match="no queries"):
        gold_prior({"en": set()}, {}, links, languages=("en",))


def test_cultural_prior_normalizes_label_counts():
    cues = [_cue("ko"), _cue("ko"), _cue("en")]
    prior = cultural_prior(cues, languages=("en", "ko"))
    assert prior == {"en": pytest.approx(1 / 3), "ko": pytest.approx(2 / 3)}


def test_cultural_prior_rejects_foreign_labels_and_empty_input():
    with pytest.raises(DataError, match="outside"):
        cultural_prior([_cue("ja")], languages=("en", "ko"))
    with pytest.raises(DataError, match="at least one cue"):
        cultural_prior([], languages=("en", "ko"))


def test_corpus_prior_normalizes_counts_and_passes_lengths():
    stats = [
        CorpusStats(lang="en", passage_count=600, median_passage_len=510.0, mean_passage_len=480.0),
        CorpusStats(lang="ko", passage_count=200, median_passage_len=350.0),
    ]
    p_db, lengths = corpus_prior(stats)
    assert p_db == {"en": pytest.approx(0.75), "ko": pytest.approx(0.25)}
    assert lengths == {"en": 510.0, "ko": 350.0}


def test_corpus_prior_mean_requires_mean_everywhere():
    stats = [
        CorpusStats(lang="en", passage_count=600, median_passage_len=510.0, mean_passage_len=480.0),
        CorpusStats(lang="ko", passage_count=200, median_passage_len=350.0),
    ]
    _, lengths = corpus_prior(stats[:1], length_stat="mean")
    assert lengths == {"en": 480.0}
    with pytest.raises(DataError, match="mean_passage_len"):
        corpus_prior(stats, length_stat="mean")
    with pytest.raises(DataError, match="length_stat"):
        corpus_prior(stats, length_stat="mode")


def test_corpus_prior_rejects_duplicates_and_empty_total():
    one = CorpusStats(lang="en", passage_count=600, median_passage_len=510.0)
    with pytest.raises(IntegrityError, match="duplicate"):
        corpus_prior([one, one])
    with pytest.raises(DataError, match="zero total"):
        corpus_prior([CorpusStats(lang="en", passage_count=0, median_passage_len=0.0)])


def test_gold_availability_small_worked_example():
    # q1's gold exists in both editions, q2's only in English, q3's
    # gold page is unmappable.
    prov = {
        "q1": GoldProvenance(query_id="q1", gold_wpids=frozenset({"P1"})),
        "q2": GoldProvenance(query_id="q2", gold_wpids=frozenset({"P2"})),
        "q3": GoldProvenance(query_id="q3", gold_wpids=frozenset({"P9"})),
    }
    links = SitelinkMap(langs_by_wpid={"P1": frozenset({"en", "ko"}), "P2": frozenset({"en"})})
    report = gold_availability_report(prov, links, query_languages=("en", "ko"))
    assert report.total_questions == 3
    assert report.total_instances == 6
    assert report.gold_available_questions == 2
    assert report.none_instances == 2
    assert report.none_ratio == pytest.approx(1 / 3)
    ko = report.per_lang["ko"]
    assert (ko.both, ko.only_en, ko.instances) == (1, 1, 1)
    assert ko.ratio == pytest.approx(1 / 6)
    en = report.per_lang["en"]
    # The English row absorbs ko's only-English instance.
    assert (en.both, en.only_en, en.instances) == (2, 0, 3)
    assert en.ratio == pytest.approx(0.5)
    total = sum(row.instances for row in report.per_lang.values()) + report.none_instances
    assert total == report.total_instances


def test_gold_availability_report_serializes(tmp_path):
    prov = {"q1": GoldProvenance(query_id="q1", gold_wpids=frozenset({"P1"}))}
    links = SitelinkMap(langs_by_wpid={"P1": frozenset({"en"})})
    report = gold_availability_report(prov, links, query_languages=("en",))
    obj = report.to_json_dict()
    assert obj["per_lang"]["en"]["instances"] == 1
    assert obj["none_ratio"] == 0.0
    path = tmp_path / "availability.json"
    report.write(path)
    assert path.read_text(encoding="utf-8").startswith("{")


def test_gold_availability_requires_english_and_unique_langs():
    prov = {"q1": GoldProvenance(query_id="q1", gold_wpids=frozenset({"P1"}))}
    links = SitelinkMap(langs_by_wpid={"P1": frozenset({"en"})})
    with pytest.raises(DataError, match="must include en"):
        gold_availability_report(prov, links, query_languages=("ko",))
    with pytest.raises(DataError, match="duplicates"):
        gold_availability_report(prov, links, query_languages=("en", "en"))
