"""Rank-movement scoring, pair matrices, and recall metrics.

The central quantity rewards upward movement only: a document that a
reranker promotes from rank 5 to rank 2 contributes 3, one it demotes
contributes 0. Per query the sum of those gains is normalized by the
largest gain possible (every counted document promoted to rank 1) and
scaled to 0..100, so the score reads as "share of the maximum possible
promotion actually realized" for documents of one target language.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .errors import DataError, DomainError, IntegrityError
from .langmodel import GoldProvenance, RankedCandidate, RetrievalRun, SitelinkMap, validate_lang

MATRIX_KINDS = ("raw_mlrs", "delp")


def rank_gain(init_rank: int, rerank_rank: int) -> int:
    """Positive part of the rank improvement; demotions count as zero."""
    if init_rank < 1 or rerank_rank < 1:
        raise DomainError(f"ranks must be >= 1, got init={init_rank}, rerank={rerank_rank}")
    return max(init_rank - rerank_rank, 0)


@dataclass(frozen=True)
class QueryMlrs:
    """Per-query promotion score with its numerator and normalizer."""

    query_id: str
    delta_r: float
    delta_r_max: float
    score: float
    target_docs: int

    @classmethod
    def compute(cls, query_id: str, delta_r: float, delta_r_max: float, target_docs: int) -> QueryMlrs:
        score = 100.0 * delta_r / delta_r_max if delta_r_max > 0 else 0.0
        return cls(
            query_id=query_id,
            delta_r=delta_r,
            delta_r_max=delta_r_max,
            score=score,
            target_docs=target_docs,
        )


def _ranks_by_doc(cands: Sequence[RankedCandidate]) -> dict[str, RankedCandidate]:
    by_doc: dict[str, RankedCandidate] = {}
    for cand in cands:
        if cand.doc_id in by_doc:
            raise IntegrityError(f"query {cand.query_id!r}: doc {cand.doc_id!r} appears twice in one list")
        by_doc[cand.doc_id] = cand
    return by_doc


def mlrs_for_query(
    init: Sequence[RankedCandidate],
    rerank: Sequence[RankedCandidate],
    target_lang: str,
    *,
    global_normalizer: bool = False,
) -> QueryMlrs:
    """Score one query's reranking with respect to one document language.

    Both lists must contain exactly the same documents (a reranker
    permutes the candidate pool, it does not change it). Gains and the
    normalizer are restricted to documents whose language is
    ``target_lang``; with ``global_normalizer`` the normalizer instead
    spans the whole pool, which makes scores comparable across target
    languages at the cost of no longer reaching 100.
    """
    validate_lang(target_lang, allow_extra=True)
    if not init:
        raise DataError("empty candidate list")
    init_by_doc = _ranks_by_doc(init)
    rerank_by_doc = _ranks_by_doc(rerank)
    if init_by_doc.keys() != rerank_by_doc.keys():
        only_init = sorted(init_by_doc.keys() - rerank_by_doc.keys())[:5]
        only_rerank = sorted(rerank_by_doc.keys() - init_by_doc.keys())[:5]
        raise IntegrityError(
            "init and rerank lists disagree on the document set "
            f"(only in init: {only_init}, only in rerank: {only_rerank})"
        )
    query_id = init[0].query_id
    delta_r = 0.0
    delta_r_max = 0.0
    target_docs = 0
    for doc_id, init_cand in init_by_doc.items():
        rerank_cand = rerank_by_doc[doc_id]
        if init_cand.doc_lang != rerank_cand.doc_lang:
            raise IntegrityError(
                f"query {query_id!r}, doc {doc_id!r}: doc_lang disagrees between lists "
                f"({init_cand.doc_lang!r} vs {rerank_cand.doc_lang!r})"
            )
        counted = init_cand.doc_lang == target_lang
        if counted:
            target_docs += 1
            delta_r += rank_gain(init_cand.rank, rerank_cand.rank)
        if counted or global_normalizer:
            delta_r_max += init_cand.rank - 1
    return QueryMlrs.compute(query_id, delta_r, delta_r_max, target_docs)


class PairCellReport(NamedTuple):
    """Mean promotion score for one (query language, doc language) cell."""

    score: float
    n_queries: int
    zero_normalizer_queries: int
    zero_target_doc_queries: int


def mlrs_pair_detail(
    init_run: RetrievalRun,
    rerank_run: RetrievalRun,
    doc_lang: str,
    *,
    global_normalizer: bool = False,
) -> PairCellReport:
    """Mean per-query score over the shared query set, with diagnostics.

    Queries are averaged in ascending query_id order so the floating
    summation is reproducible. Queries with no ``doc_lang`` documents
    (or a zero normalizer) score 0 and stay in the mean; their counts
    are reported so a suspiciously low cell can be explained.
    """
    if init_run.queries.keys() != rerank_run.queries.keys():
        only_init = sorted(init_run.queries.keys() - rerank_run.queries.keys())[:5]
        only_rerank = sorted(rerank_run.queries.keys() - init_run.queries.keys())[:5]
        raise IntegrityError(
            f"runs {init_run.run_id!r} and {rerank_run.run_id!r} disagree on the query set "
            f"(only init: {only_init}, only rerank: {only_rerank})"
        )
    if not init_run.queries:
        raise DataError(f"runs {init_run.run_id!r}/{rerank_run.run_id!r} contain no queries")
    if (
        init_run.query_lang is not None
        and rerank_run.query_lang is not None
        and init_run.query_lang != rerank_run.query_lang
    ):
        raise IntegrityError(
            f"query language disagrees between runs: {init_run.query_lang!r} vs {rerank_run.query_lang!r}"
        )
    total = 0.0
    zero_norm = 0
    zero_docs = 0
    for query_id in sorted(init_run.queries):
        per_query = mlrs_for_query(
            init_run.queries[query_id],
            rerank_run.queries[query_id],
            doc_lang,
            global_normalizer=global_normalizer,
        )
        total += per_query.score
        if per_query.delta_r_max == 0:
            zero_norm += 1
        if per_query.target_docs == 0:
            zero_docs += 1
    n = len(init_run.queries)
    return PairCellReport(
        score=total / n,
        n_queries=n,
        zero_normalizer_queries=zero_norm,
        zero_target_doc_queries=zero_docs,
    )


def mlrs_pair(
    init_run: RetrievalRun,
    rerank_run: RetrievalRun,
    doc_lang: str,
    *,
    global_normalizer: bool = False,
) -> float:
    return mlrs_pair_detail(init_run, rerank_run, doc_lang, global_normalizer=global_normalizer).score


@dataclass(frozen=True)
class PairScoreMatrix:
    """Scores for every (query language, doc language) pair of one encoder.

    Cross-lingual cells live in ``cells``; the monolingual score for
    each language lives in ``same_lang`` rather than on the diagonal,
    since it plays a distinct role downstream (it anchors what genuine
    same-language preference looks like). ``kind`` says whether the
    numbers are raw promotion scores (bounded 0..100) or debiased
    scores (unbounded).
    """

    encoder_id: str
    kind: str
    cells: Mapping[tuple[str, str], float]
    same_lang: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.kind not in MATRIX_KINDS:
            raise DataError(f"unknown matrix kind {self.kind!r}; expected one of {MATRIX_KINDS}")
        for (query_lang, doc_lang), score in self.cells.items():
            validate_lang(query_lang, allow_extra=True)
            validate_lang(doc_lang, allow_extra=True)
            if query_lang == doc_lang:
                raise DataError(
                    f"monolingual pair ({query_lang}, {doc_lang}) belongs in same_lang, not cells"
                )
            self._check_range(score, f"({query_lang}, {doc_lang})")
        for lang, score in self.same_lang.items():
            validate_lang(lang, allow_extra=True)
            self._check_range(score, f"same_lang[{lang}]")

    def _check_range(self, score: float, where: str) -> None:
        if not math.isfinite(score):
            raise DataError(f"{where}: score must be finite, got {score!r}")
        if self.kind == "raw_mlrs" and not 0.0 <= score <= 100.0:
            raise DataError(f"{where}: raw score must lie in [0, 100], got {score}")

    def pairs(self, *, include_same_lang: bool = True) -> list[tuple[str, str]]:
        """All pairs in deterministic (query_lang, doc_lang) order."""
        keys = list(self.cells)
        if include_same_lang:
            keys.extend((lang, lang) for lang in self.same_lang)
        return sorted(keys)

    def value(self, query_lang: str, doc_lang: str) -> float:
        if query_lang == doc_lang:
            if doc_lang not in self.same_lang:
                raise DataError(f"no monolingual score for {query_lang!r}")
            return self.same_lang[doc_lang]
        if (query_lang, doc_lang) not in self.cells:
            raise DataError(f"no score for pair ({query_lang!r}, {doc_lang!r})")
        return self.cells[(query_lang, doc_lang)]

    def to_json_dict(self) -> dict:
        nested: dict[str, dict[str, float]] = {}
        for (query_lang, doc_lang), score in self.cells.items():
            nested.setdefault(query_lang, {})[doc_lang] = score
        return {
            "encoder_id": self.encoder_id,
            "kind": self.kind,
            "cells": {q: dict(sorted(row.items())) for q, row in sorted(nested.items())},
            "same_lang": dict(sorted(self.same_lang.items())),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> PairScoreMatrix:
        for key in ("encoder_id", "kind", "cells", "same_lang"):
            if key not in obj:
                raise DataError(f"pair matrix object lacks {key!r}")
        cells = {
            (query_lang, doc_lang): float(score)
            for query_lang, row in obj["cells"].items()
            for doc_lang, score in row.items()
        }
        same_lang = {lang: float(score) for lang, score in obj["same_lang"].items()}
        return cls(encoder_id=obj["encoder_id"], kind=obj["kind"], cells=cells, same_lang=same_lang)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def read(cls, path: str | Path) -> PairScoreMatrix:
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class RecallReport(NamedTuple):
    """Recall@k plus how many queries could not be evaluated."""

    value: float
    evaluated: int
    excluded_no_gold: int


def recall_at_k(
    run: RetrievalRun,
    provenance: Mapping[str, GoldProvenance],
    k: int,
    *,
    sitelinks: SitelinkMap | None = None,
) -> RecallReport:
    """Fraction of evaluable queries with a gold page in the top k.

    A query is evaluable when it has a provenance entry and, if a
    sitelink map is supplied, at least one gold page exists in the map
    at all. Candidates match on their ``wpid`` field.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    hits = 0
    evaluated = 0
    excluded = 0
    for query_id in sorted(run.queries):
        entry = provenance.get(query_id)
        gold = entry.gold_wpids if entry is not None else frozenset()
        if sitelinks is not None:
            gold = frozenset(w for w in gold if w in sitelinks)
        if not gold:
            excluded += 1
            continue
        evaluated += 1
        for cand in run.queries[query_id][:k]:
            if cand.wpid is not None and cand.wpid in gold:
                hits += 1
                break
    if evaluated == 0:
        raise DataError(f"run {run.run_id!r}: no query has usable gold provenance")
    return RecallReport(value=hits / evaluated, evaluated=evaluated, excluded_no_gold=excluded)


def _char_ngrams(text: str, n: int) -> Counter[str]:
    # Strings shorter than n contribute themselves as a single gram.
    if len(text) < n:
        return Counter({text: 1}) if text else Counter()
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def _normalize_for_grams(text: str) -> str:
    return unicodedata.normalize("NFC", text).lower()


def char_ngram_recall(candidate: str, reference: str, n: int = 3) -> float:
    """Multiset character n-gram recall of ``reference`` by ``candidate``.

    Both sides are NFC-normalized and lowercased first. The reference
    must be non-empty after normalization; the score counts how many of
    its grams (with multiplicity) also occur in the candidate.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    cand_grams = _char_ngrams(_normalize_for_grams(candidate), n)
    ref_grams = _char_ngrams(_normalize_for_grams(reference), n)
    if not ref_grams:
        raise DataError("reference is empty after normalization")
    overlap = sum(min(count, cand_grams[gram]) for gram, count in ref_grams.items())
    return overlap / sum(ref_grams.values())


def mean_scores(values: Iterable[float]) -> float:
    """Plain mean with an explicit error on empty input."""
    values = list(values)
    if not values:
        raise DataError("cannot average zero scores")
    return sum(values) / len(values)
