"""Shared fixtures: synthetic grids, corpora, and pipeline input trees."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from langpref import (
    LANGUAGES,
    CueBundle,
    CulturalCue,
    GoldProvenance,
    PairScoreMatrix,
    Passage,
    PriorTable,
    SitelinkMap,
    ToyCorpus,
)

# ------------------------------------------------- gold availability fixture

# Per-language counts of questions whose gold page also exists in that
# language's edition (the 423 remainder have no mappable page at all).
BOTH_COUNTS = {
    "ar": 214,
    "de": 435,
    "es": 550,
    "fi": 176,
    "fr": 600,
    "it": 350,
    "ja": 513,
    "ko": 306,
    "pt": 250,
    "ru": 450,
    "th": 187,
    "zh": 287,
}
MAPPABLE_QUESTIONS = 2404
UNMAPPABLE_QUESTIONS = 423
TOTAL_QUESTIONS = MAPPABLE_QUESTIONS + UNMAPPABLE_QUESTIONS


def build_availability_fixture() -> tuple[dict[str, GoldProvenance], SitelinkMap]:
    """2,827 questions; the first both_L mappable ones also exist in L."""
    sitelinks: dict[str, frozenset[str]] = {}
    entries: dict[str, GoldProvenance] = {}
    for i in range(MAPPABLE_QUESTIONS):
        wpid = f"W{i:05d}"
        langs = {"en"} | {lang for lang, count in BOTH_COUNTS.items() if i < count}
        sitelinks[wpid] = frozenset(langs)
        query_id = f"q{i:04d}"
        entries[query_id] = GoldProvenance(query_id=query_id, gold_wpids=frozenset({wpid}))
    for i in range(MAPPABLE_QUESTIONS, TOTAL_QUESTIONS):
        query_id = f"q{i:04d}"
        entries[query_id] = GoldProvenance(query_id=query_id, gold_wpids=frozenset({f"X{i:05d}"}))
    return entries, SitelinkMap(langs_by_wpid=sitelinks)


@pytest.fixture(scope="session")
def availability_fixture() -> tuple[dict[str, GoldProvenance], SitelinkMap]:
    return build_availability_fixture()


# --------------------------------------------------- synthetic 13x13 fixture

GRID_SEED = 20250819
GRID_BETA = (2.0, 4.4, 0.1, 4.3, 0.3, 0.1, 0.0)
GRID_BONUS = 5.0
GRID_NOISE_SD = 0.5
GRID_EPSILON = 1e-6


def build_synthetic_grid(
    seed: int = GRID_SEED,
    beta: tuple[float, ...] = GRID_BETA,
    bonus: float = GRID_BONUS,
    noise_sd: float = GRID_NOISE_SD,
    epsilon: float = GRID_EPSILON,
) -> tuple[PairScoreMatrix, PriorTable]:
    """Scores planted on known priors plus a same-language bonus and noise."""
    n = len(LANGUAGES)
    rng = np.random.default_rng(seed)
    p_ret = rng.dirichlet(np.full(n, 2.0), size=n)
    p_db = rng.dirichlet(np.full(n, 2.0))
    lengths = rng.uniform(200.0, 850.0, size=n)
    p_gold = rng.uniform(0.05, 1.0, size=(n, n))
    p_cult = rng.dirichlet(np.full(n, 2.0))
    noise = rng.normal(0.0, noise_sd, size=(n, n))

    beta_arr = np.asarray(beta, dtype=float)
    cells: dict[tuple[str, str], float] = {}
    same_lang: dict[str, float] = {}
    for i, query_lang in enumerate(LANGUAGES):
        for j, doc_lang in enumerate(LANGUAGES):
            phi = np.array(
                [
                    1.0,
                    math.log(p_ret[i, j] + epsilon),
                    math.log(p_db[j] + epsilon),
                    math.log(lengths[j] + epsilon),
                    math.log(p_gold[i, j] + epsilon),
                    math.log(p_cult[j] + epsilon),
                    1.0 if i == j else 0.0,
                ]
            )
            score = float(beta_arr @ phi + (bonus if i == j else 0.0) + noise[i, j])
            if i == j:
                same_lang[query_lang] = score
            else:
                cells[(query_lang, doc_lang)] = score

    table = PriorTable(
        p_ret={(LANGUAGES[i], LANGUAGES[j]): float(p_ret[i, j]) for i in range(n) for j in range(n)},
        p_gold={(LANGUAGES[i], LANGUAGES[j]): float(p_gold[i, j]) for i in range(n) for j in range(n)},
        p_cult={LANGUAGES[j]: float(p_cult[j]) for j in range(n)},
        p_db={LANGUAGES[j]: float(p_db[j]) for j in range(n)},
        passage_len={LANGUAGES[j]: float(lengths[j]) for j in range(n)},
    )
    matrix = PairScoreMatrix(encoder_id="synthetic", kind="raw_mlrs", cells=cells, same_lang=same_lang)
    return matrix, table


@pytest.fixture(scope="session")
def synthetic_grid() -> tuple[PairScoreMatrix, PriorTable]:
    return build_synthetic_grid()


# ------------------------------------------------------ Korean Olympics case

OLYMPICS_Q_LOCAL = "언제 마지막으로 대한민국이 올림픽을 했었나요"
OLYMPICS_Q_GLOB = "when was the last time south korea had the olympics"


@pytest.fixture
def olympics_cue() -> CulturalCue:
    return CulturalCue(
        is_culture_specific=True,
        cultural_language="ko",
        country_or_region="South Korea",
        confidence=0.93,
        rationale="Asks about Olympic games hosted by one specific country.",
    )


@pytest.fixture
def olympics_bundle() -> CueBundle:
    return CueBundle(
        en_title="South Korea at the Olympics",
        local_title="대한민국의 올림픽",
        aliases_en=(
            "Olympics in South Korea",
            "South Korean Olympic Games",
            "History of South Korea Olympics",
        ),
        aliases_local=("대한민국 올림픽", "한국 올림픽", "한국의 올림픽 역사"),
        extra_disambig="Last Olympic Games in South Korea",
    )


# --------------------------------------------------------- toy-corpus fixture

FESTIVAL_QUERIES = 20
FESTIVAL_DISTRACTORS = 30


def hangul_entity(i: int) -> str:
    """Six consecutive Hangul syllables from a block disjoint per entity."""
    return "".join(chr(0xAC00 + 40 * i + k) for k in range(6))


def roman_name(i: int) -> str:
    return "".join(chr(97 + (i * 7 + k) % 26) for k in range(5))


def build_festival_corpus() -> tuple[ToyCorpus, list[dict]]:
    """20 Korean gold passages, 30 English distractors, and query material.

    Each gold passage repeats its entity name four times and embeds the
    local question verbatim, so the fused query's local copies dominate
    the trigram overlap; the distractors echo the English pivot phrasing
    but mention its content words only once each, keeping their overlap
    capped while still outranking the (zero-overlap) gold passages for
    the plain pivot.
    """
    passages: list[Passage] = []
    queries: list[dict] = []
    for i in range(FESTIVAL_QUERIES):
        entity = hangul_entity(i)
        name = roman_name(i)
        text = (
            f"{entity} 축제는 언제 열리나요. "
            f"{entity} 축제는 매년 가을 {entity} 광장에서 열리는 {entity} 지역 행사입니다."
        )
        wpid = f"Q{700 + i}"
        passages.append(Passage(doc_id=f"ko{i:03d}", lang="ko", text=text, wpid=wpid))
        queries.append(
            {
                "query_id": f"fq{i:02d}",
                "q_local": f"{entity} 축제는 언제 열리나요",
                "pivot": f"when is the {name} festival held",
                "gold_wpid": wpid,
                "cue": CulturalCue(
                    is_culture_specific=True,
                    cultural_language="ko",
                    country_or_region="South Korea",
                    confidence=0.93,
                    rationale="Local festival with a region-specific name.",
                ),
                "bundle": CueBundle(
                    en_title=f"{name.title()} Festival",
                    local_title=f"{entity} 축제",
                    aliases_en=(f"{name} festival in korea", f"annual {name} festival"),
                    aliases_local=(f"{entity} 축제 일정", f"{entity} 행사"),
                    extra_disambig=f"{name} festival dates",
                ),
            }
        )
    for j in range(FESTIVAL_DISTRACTORS):
        text = (
            f"neighbors keep asking when the number {j} festival takes place this season. "
            f"flyer {j} says the parade is held near square {j}."
        )
        passages.append(Passage(doc_id=f"en{j:03d}", lang="en", text=text, wpid=f"Q{900 + j}"))
    return ToyCorpus(tuple(passages)), queries


@pytest.fixture(scope="session")
def festival_corpus() -> tuple[ToyCorpus, list[dict]]:
    return build_festival_corpus()


# ------------------------------------------------------ pipeline input trees


def _jsonl(path: Path, rows: list[dict]) -> None:
    path.write_text(
        "".join(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n" for row in rows),
        encoding="utf-8",
    )


def _run_rows(query_id: str, ordered: list[tuple[str, str, str]]) -> list[dict]:
    return [
        {
            "query_id": query_id,
            "doc_id": doc_id,
            "rank": rank,
            "score": float(10 - rank),
            "doc_lang": lang,
            "wpid": wpid,
        }
        for rank, (doc_id, lang, wpid) in enumerate(ordered, start=1)
    ]


A1 = ("a1", "en", "P1")
A2 = ("a2", "en", "P2")
A3 = ("a3", "en", "P5")
B1 = ("b1", "ko", "P3")
B2 = ("b2", "ko", "P4")
B3 = ("b3", "ko", "P6")

SEOLLAL_CUE = {
    "is_culture_specific": True,
    "cultural_language": "ko",
    "country_or_region": "South Korea",
    "confidence": 0.93,
    "rationale": "Korean holiday on the lunar calendar.",
}
SEOLLAL_BUNDLE = {
    "en_title": "Korean New Year",
    "local_title": "설날",
    "aliases_en": ["Seollal", "Korean Lunar New Year"],
    "aliases_local": ["설날 연휴", "구정"],
    "extra_disambig": "Korean holiday date",
}
TALE_CUE = {
    "is_culture_specific": False,
    "cultural_language": "en",
    "country_or_region": None,
    "confidence": 0.2,
    "rationale": "A novel known worldwide, not tied to one locale.",
}
TALE_BUNDLE = {
    "en_title": "A Tale of Two Cities",
    "local_title": "A Tale of Two Cities",
    "aliases_en": ["Dickens London Paris novel"],
    "aliases_local": None,
    "extra_disambig": "Charles Dickens 1859 novel",
}


def build_pipeline_inputs(root: Path) -> Path:
    """Write a small but fully exercising input tree under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    runs = root / "runs"
    runs.mkdir(exist_ok=True)

    # Pool mixes differ per query so the exposure prior varies across pairs.
    _jsonl(runs / "init_en.jsonl", _run_rows("e1", [A1, A2, A3, B1]) + _run_rows("e2", [B1, A1, B2, A2]))
    _jsonl(runs / "rerank_en.jsonl", _run_rows("e1", [A1, B1, A2, A3]) + _run_rows("e2", [A1, B1, B2, A2]))
    _jsonl(runs / "init_ko.jsonl", _run_rows("k1", [A1, B1, B2, B3]) + _run_rows("k2", [B2, A2, B1, A1]))
    _jsonl(runs / "rerank_ko.jsonl", _run_rows("k1", [B1, B2, B3, A1]) + _run_rows("k2", [B2, B1, A2, A1]))

    _jsonl(
        root / "gold.jsonl",
        [
            {"query_id": "e1", "gold_wpids": ["P1"]},
            {"query_id": "e2", "gold_wpids": ["P2"]},
            {"query_id": "k1", "gold_wpids": ["P3"]},
            {"query_id": "k2", "gold_wpids": ["P4"]},
        ],
    )
    _jsonl(
        root / "sitelinks.jsonl",
        [
            {"wpid": "P1", "langs": ["en"]},
            {"wpid": "P2", "langs": ["en", "ko"]},
            {"wpid": "P3", "langs": ["en", "ko"]},
            {"wpid": "P4", "langs": ["en"]},
            {"wpid": "P5", "langs": ["en"]},
            {"wpid": "P6", "langs": ["en", "ko"]},
        ],
    )
    _jsonl(
        root / "corpus_stats.jsonl",
        [
            {"lang": "en", "passage_count": 600, "median_passage_len": 510.0},
            {"lang": "ko", "passage_count": 200, "median_passage_len": 350.0, "mean_passage_len": 402.5},
        ],
    )
    _jsonl(
        root / "cues.jsonl",
        [
            {"key": {"query_id": "k1", "kind": "translation"}, "payload": {"translation": "when is the seollal holiday"}},
            {"key": {"query_id": "k1", "kind": "cultural"}, "payload": SEOLLAL_CUE},
            {"key": {"query_id": "k1", "kind": "bundle"}, "payload": SEOLLAL_BUNDLE},
            {"key": {"query_id": "e1", "kind": "cultural"}, "payload": TALE_CUE},
            {"key": {"query_id": "e1", "kind": "bundle"}, "payload": TALE_BUNDLE},
            {"key": {"query_id": "e2", "kind": "cultural"}, "payload": TALE_CUE},
        ],
    )
    _jsonl(
        root / "queries.jsonl",
        [
            {"query_id": "e1", "lang": "en", "q_local": "who wrote a tale of two cities"},
            {"query_id": "k1", "lang": "ko", "q_local": "설날은 언제인가요"},
        ],
    )
    return root


@pytest.fixture
def pipeline_inputs(tmp_path: Path) -> Path:
    return build_pipeline_inputs(tmp_path / "inputs")
