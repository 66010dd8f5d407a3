"""Estimators for the five structural priors, plus gold availability.

A retriever's apparent language preference is confounded by structure:
how much of each language it was shown (exposure), how big each corpus
is, how long its passages are, where gold pages exist, and which
culture a question belongs to. This module turns raw artifacts (runs,
provenance, sitelinks, cues, corpus stats) into those five tables so
the calibration step can regress them out.
"""

from __future__ import annotations

import json
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .delta import CulturalCue
from .errors import DataError, DomainError, IntegrityError
from .langmodel import (
    LANGUAGES,
    CorpusStats,
    GoldProvenance,
    ProvenanceMap,
    RetrievalRun,
    SitelinkMap,
    validate_lang,
)

PAIR_PRIORS = ("p_ret", "p_gold")
LANG_PRIORS = ("p_cult", "p_db", "passage_len")
_SUM_ATOL = 1e-9


@dataclass(frozen=True)
class PriorTable:
    """All five priors, keyed by language pair or document language.

    The three probability tables that are distributions (each exposure
    row, the cultural table, the corpus-size table) must sum to 1;
    gold availability is a per-pair fraction with no sum constraint,
    and passage_len is a raw positive length.
    """

    p_ret: Mapping[tuple[str, str], float]
    p_gold: Mapping[tuple[str, str], float]
    p_cult: Mapping[str, float]
    p_db: Mapping[str, float]
    passage_len: Mapping[str, float]

    def __post_init__(self) -> None:
        for name, table in (("p_ret", self.p_ret), ("p_gold", self.p_gold)):
            for (query_lang, doc_lang), value in table.items():
                if not 0.0 <= value <= 1.0:
                    raise DataError(f"{name}[{query_lang},{doc_lang}] = {value} outside [0, 1]")
        for name, table in (("p_cult", self.p_cult), ("p_db", self.p_db)):
            for lang, value in table.items():
                if not 0.0 <= value <= 1.0:
                    raise DataError(f"{name}[{lang}] = {value} outside [0, 1]")
        for lang, value in self.passage_len.items():
            if not value > 0:
                raise DataError(f"passage_len[{lang}] = {value} must be positive")
        rows: dict[str, float] = {}
        for (query_lang, _), value in self.p_ret.items():
            rows[query_lang] = rows.get(query_lang, 0.0) + value
        for query_lang, total in rows.items():
            if abs(total - 1.0) > _SUM_ATOL:
                raise IntegrityError(f"p_ret row {query_lang!r} sums to {total}, expected 1")
        for name, table in (("p_cult", self.p_cult), ("p_db", self.p_db)):
            if table and abs(sum(table.values()) - 1.0) > _SUM_ATOL:
                raise IntegrityError(f"{name} sums to {sum(table.values())}, expected 1")

    def get(self, name: str, query_lang: str, doc_lang: str) -> float:
        """Look up one prior value; a missing cell is an error, never 0."""
        if name in PAIR_PRIORS:
            table = getattr(self, name)
            if (query_lang, doc_lang) not in table:
                raise DataError(f"prior {name} has no value for pair ({query_lang!r}, {doc_lang!r})")
            return table[(query_lang, doc_lang)]
        if name in LANG_PRIORS:
            table = getattr(self, name)
            if doc_lang not in table:
                raise DataError(f"prior {name} has no value for language {doc_lang!r}")
            return table[doc_lang]
        raise DataError(f"unknown prior {name!r}")

    def to_json_dict(self) -> dict:
        def nest(table: Mapping[tuple[str, str], float]) -> dict:
            out: dict[str, dict[str, float]] = {}
            for (query_lang, doc_lang), value in table.items():
                out.setdefault(query_lang, {})[doc_lang] = value
            return {q: dict(sorted(row.items())) for q, row in sorted(out.items())}

        return {
            "p_ret": nest(self.p_ret),
            "p_gold": nest(self.p_gold),
            "p_cult": dict(sorted(self.p_cult.items())),
            "p_db": dict(sorted(self.p_db.items())),
            "passage_len": dict(sorted(self.passage_len.items())),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> PriorTable:
        for key in ("p_ret", "p_gold", "p_cult", "p_db", "passage_len"):
            if key not in obj:
                raise DataError(f"prior table object lacks {key!r}")

        def flatten(nested: dict) -> dict[tuple[str, str], float]:
            return {
                (query_lang, doc_lang): float(value)
                for query_lang, row in nested.items()
                for doc_lang, value in row.items()
            }

        return cls(
            p_ret=flatten(obj["p_ret"]),
            p_gold=flatten(obj["p_gold"]),
            p_cult={lang: float(v) for lang, v in obj["p_cult"].items()},
            p_db={lang: float(v) for lang, v in obj["p_db"].items()},
            passage_len={lang: float(v) for lang, v in obj["passage_len"].items()},
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def read(cls, path: str | Path) -> PriorTable:
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def exposure_prior(
    runs: Iterable[RetrievalRun],
    depth: int = 50,
    *,
    languages: Sequence[str] = LANGUAGES,
) -> dict[tuple[str, str], float]:
    """Mean per-query share of each document language in the top ``depth``.

    Lists shorter than ``depth`` use their actual length as the
    denominator, so each query contributes a proper distribution and
    every row sums to 1. Queries are averaged in ascending query_id
    order per query language.
    """
    if depth < 1:
        raise DomainError(f"depth must be >= 1, got {depth}")
    runs = list(runs)
    if not runs:
        raise DataError("exposure prior needs at least one run")
    by_lang: dict[str, dict[str, tuple]] = {}
    for run in runs:
        if run.query_lang is None:
            raise DataError(f"run {run.run_id!r} has no query language label")
        pool = by_lang.setdefault(run.query_lang, {})
        for query_id, cands in run.queries.items():
            if query_id in pool:
                raise IntegrityError(
                    f"query {query_id!r} appears in two runs for query language {run.query_lang!r}"
                )
            pool[query_id] = cands

    doc_langs: set[str] = set(languages)
    for pool in by_lang.values():
        for cands in pool.values():
            doc_langs.update(c.doc_lang for c in cands[:depth])

    out: dict[tuple[str, str], float] = {}
    for query_lang in sorted(by_lang):
        pool = by_lang[query_lang]
        if not pool:
            raise DataError(f"no queries for query language {query_lang!r}")
        sums = dict.fromkeys(sorted(doc_langs), 0.0)
        for query_id in sorted(pool):
            top = pool[query_id][:depth]
            if not top:
                raise DataError(f"query {query_id!r} has an empty candidate list")
            for cand in top:
                sums[cand.doc_lang] += 1.0 / len(top)
        for doc_lang in sorted(doc_langs):
            out[(query_lang, doc_lang)] = sums[doc_lang] / len(pool)
    return out


def _provenance_entries(
    provenance: ProvenanceMap | Mapping[str, GoldProvenance],
) -> Mapping[str, GoldProvenance]:
    return provenance.entries if isinstance(provenance, ProvenanceMap) else provenance


def gold_prior(
    queries_by_lang: Mapping[str, Collection[str]],
    provenance: ProvenanceMap | Mapping[str, GoldProvenance],
    sitelinks: SitelinkMap,
    *,
    languages: Sequence[str] = LANGUAGES,
) -> dict[tuple[str, str], float]:
    """Fraction of each language's queries whose gold page exists per edition.

    A query without a provenance entry counts as gold-absent everywhere
    (it stays in the denominator): unknown is treated as unavailable.
    """
    entries = _provenance_entries(provenance)
    out: dict[tuple[str, str], float] = {}
    for query_lang in sorted(queries_by_lang):
        validate_lang(query_lang, allow_extra=True)
        query_ids = sorted(queries_by_lang[query_lang])
        if not query_ids:
            raise DataError(f"no queries for query language {query_lang!r}")
        for doc_lang in sorted(set(languages)):
            covered = 0
            for query_id in query_ids:
                entry = entries.get(query_id)
                if entry is not None and any(sitelinks.has(w, doc_lang) for w in entry.gold_wpids):
                    covered += 1
            out[(query_lang, doc_lang)] = covered / len(query_ids)
    return out


def cultural_prior(
    cues: Iterable[CulturalCue],
    *,
    languages: Sequence[str] = LANGUAGES,
) -> dict[str, float]:
    """Normalized frequency of the single-label cultural assignments."""
    allowed = set(languages)
    counts = dict.fromkeys(sorted(allowed), 0)
    total = 0
    for cue in cues:
        if cue.cultural_language not in allowed:
            raise DataError(f"cultural label {cue.cultural_language!r} outside the configured language set")
        counts[cue.cultural_language] += 1
        total += 1
    if total == 0:
        raise DataError("cultural prior needs at least one cue")
    return {lang: count / total for lang, count in counts.items()}


def corpus_prior(
    stats: Mapping[str, CorpusStats] | Iterable[CorpusStats],
    *,
    length_stat: str = "median",
) -> tuple[dict[str, float], dict[str, float]]:
    """Normalize corpus sizes to a distribution; pass lengths through."""
    if length_stat not in ("median", "mean"):
        raise DataError(f"length_stat must be 'median' or 'mean', got {length_stat!r}")
    if isinstance(stats, Mapping):
        items = list(stats.values())
    else:
        items = list(stats)
    seen: dict[str, CorpusStats] = {}
    for s in items:
        if s.lang in seen:
            raise IntegrityError(f"duplicate corpus stats for language {s.lang!r}")
        seen[s.lang] = s
    total = sum(s.passage_count for s in seen.values())
    if total == 0:
        raise DataError("corpus prior needs a non-empty corpus (zero total passages)")
    p_db: dict[str, float] = {}
    passage_len: dict[str, float] = {}
    for lang in sorted(seen):
        s = seen[lang]
        p_db[lang] = s.passage_count / total
        if length_stat == "median":
            passage_len[lang] = s.median_passage_len
        else:
            if s.mean_passage_len is None:
                raise DataError(f"{lang}: mean_passage_len requested but not present in the stats")
            passage_len[lang] = s.mean_passage_len
    return p_db, passage_len


@dataclass(frozen=True)
class LangAvailability:
    """One row of the gold-availability report."""

    lang: str
    instances: int
    ratio: float
    both: int
    only_en: int


@dataclass(frozen=True)
class GoldAvailabilityReport:
    """Question-by-language availability accounting.

    Each (question, query language) instance lands in exactly one
    bucket: the query language's own row when gold exists in that
    edition, the English row when gold exists only in English, or the
    none bucket when no gold page is mappable at all. The English row
    therefore aggregates its own questions plus every instance that had
    to fall back to English evidence.
    """

    total_questions: int
    query_languages: tuple[str, ...]
    total_instances: int
    gold_available_questions: int
    per_lang: Mapping[str, LangAvailability]
    none_instances: int

    @property
    def none_ratio(self) -> float:
        return self.none_instances / self.total_instances

    def to_json_dict(self) -> dict:
        return {
            "total_questions": self.total_questions,
            "query_languages": list(self.query_languages),
            "total_instances": self.total_instances,
            "gold_available_questions": self.gold_available_questions,
            "none_instances": self.none_instances,
            "none_ratio": self.none_ratio,
            "per_lang": {
                lang: {
                    "instances": row.instances,
                    "ratio": row.ratio,
                    "both": row.both,
                    "only_en": row.only_en,
                }
                for lang, row in sorted(self.per_lang.items())
            },
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )


def gold_availability_report(
    provenance: ProvenanceMap | Mapping[str, GoldProvenance],
    sitelinks: SitelinkMap,
    query_languages: Sequence[str] = LANGUAGES,
) -> GoldAvailabilityReport:
    """Attribute every (question, query language) instance to one bucket."""
    if "en" not in query_languages:
        raise DataError("query_languages must include en (it receives the fallback instances)")
    if len(set(query_languages)) != len(query_languages):
        raise DataError("query_languages contains duplicates")
    entries = _provenance_entries(provenance)
    langs = tuple(query_languages)
    both = dict.fromkeys(langs, 0)
    only_en = dict.fromkeys(langs, 0)
    available = 0
    none_questions = 0
    for query_id in sorted(entries):
        wpids = [w for w in entries[query_id].gold_wpids if w in sitelinks]
        if not wpids:
            none_questions += 1
            continue
        available += 1
        for lang in langs:
            # Mappable pages always exist in en, so the en instance is "both".
            if any(sitelinks.has(w, lang) for w in wpids):
                both[lang] += 1
            else:
                only_en[lang] += 1

    total_questions = len(entries)
    total_instances = total_questions * len(langs)
    per_lang: dict[str, LangAvailability] = {}
    for lang in langs:
        if both[lang] + only_en[lang] != available:
            raise IntegrityError(
                f"{lang}: both + only_en = {both[lang] + only_en[lang]} but {available} questions are gold-available"
            )
        instances = both[lang]
        if lang == "en":
            instances += sum(only_en[other] for other in langs if other != "en")
        per_lang[lang] = LangAvailability(
            lang=lang,
            instances=instances,
            ratio=instances / total_instances,
            both=both[lang],
            only_en=only_en[lang],
        )
    none_instances = none_questions * len(langs)
    if sum(row.instances for row in per_lang.values()) + none_instances != total_instances:
        raise IntegrityError("instance attribution does not partition the instance set")
    return GoldAvailabilityReport(
        total_questions=total_questions,
        query_languages=langs,
        total_instances=total_instances,
        gold_available_questions=available,
        per_lang=per_lang,
        none_instances=none_instances,
    )
