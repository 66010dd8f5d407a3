"""Core data model: languages, ranked runs, gold provenance, corpus stats.

All file formats are JSONL, one object per line. Parsers validate
eagerly and raise :class:`~langpref.errors.ParseError` with the line
number on malformed input, so a bad line in a million-line run file is
findable. Serializers emit keys in sorted order so that
parse -> serialize -> parse is a fixed point.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, IntegrityError, ParseError

LANGUAGES: tuple[str, ...] = (
    "en", "ar", "es", "fi", "fr", "de", "ja", "it", "ko", "pt", "ru", "zh", "th",
)
LANGUAGE_SET: frozenset[str] = frozenset(LANGUAGES)

LANGUAGE_NAMES: dict[str, str] = {
    "en": "English",
    "ar": "Arabic",
    "es": "Spanish",
    "fi": "Finnish",
    "fr": "French",
    "de": "German",
    "ja": "Japanese",
    "it": "Italian",
    "ko": "Korean",
    "pt": "Portuguese",
    "ru": "Russian",
    "zh": "Chinese",
    "th": "Thai",
}


def validate_lang(code: str, *, allow_extra: bool = False) -> str:
    """Check a language code and return it unchanged.

    Codes must be two lowercase ASCII letters. By default the code must
    also belong to the supported thirteen-language set; ``allow_extra``
    relaxes that to any well-formed code.
    """
    if not isinstance(code, str) or len(code) != 2 or not code.isascii() or not code.islower() or not code.isalpha():
        raise DataError(f"malformed language code {code!r}: expected two lowercase letters")
    if not allow_extra and code not in LANGUAGE_SET:
        raise DataError(
            f"unknown language code {code!r}; supported: {', '.join(LANGUAGES)} "
            "(pass allow_extra to accept others)"
        )
    return code


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    # Yields (1-based line number, parsed object); blank lines are skipped.
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path=str(path), line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path=str(path), line=lineno)
            yield lineno, obj


def _require(obj: dict, key: str, path: str, lineno: int) -> object:
    if key not in obj:
        raise ParseError(f"missing required field {key!r}", path=path, line=lineno)
    return obj[key]


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class RankedCandidate:
    """One retrieved document at one rank for one query."""

    query_id: str
    doc_id: str
    rank: int
    score: float
    doc_lang: str
    wpid: str | None = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise DataError(f"rank must be >= 1, got {self.rank} (query {self.query_id!r}, doc {self.doc_id!r})")


@dataclass(frozen=True)
class RetrievalRun:
    """A ranked list per query, all queries in one language.

    ``queries`` maps query_id to candidates sorted by ascending rank;
    ranks are contiguous from 1. ``query_lang`` may be None when the
    run's query language is unknown or irrelevant (it is required by
    the exposure prior and by pair-level scoring).
    """

    run_id: str
    query_lang: str | None
    queries: Mapping[str, tuple[RankedCandidate, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for query_id, cands in self.queries.items():
            ranks = [c.rank for c in cands]
            if ranks != list(range(1, len(cands) + 1)):
                raise IntegrityError(
                    f"run {self.run_id!r}, query {query_id!r}: ranks must be contiguous from 1, got {ranks[:8]}..."
                    if len(ranks) > 8
                    else f"run {self.run_id!r}, query {query_id!r}: ranks must be contiguous from 1, got {ranks}"
                )

    @property
    def query_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.queries))


def build_run(
    candidates: Iterable[RankedCandidate],
    *,
    run_id: str,
    query_lang: str | None = None,
    expected_depth: int | None = None,
) -> RetrievalRun:
    """Group loose candidates into a validated run.

    Rejects duplicate (query_id, rank) pairs and lists longer than
    ``expected_depth``. Input order does not matter.
    """
    grouped: dict[str, dict[int, RankedCandidate]] = {}
    for cand in candidates:
        per_query = grouped.setdefault(cand.query_id, {})
        if cand.rank in per_query:
            raise IntegrityError(
                f"run {run_id!r}, query {cand.query_id!r}: duplicate rank {cand.rank} "
                f"(docs {per_query[cand.rank].doc_id!r} and {cand.doc_id!r})"
            )
        per_query[cand.rank] = cand
    queries: dict[str, tuple[RankedCandidate, ...]] = {}
    for query_id in sorted(grouped):
        per_query = grouped[query_id]
        if expected_depth is not None and len(per_query) > expected_depth:
            raise IntegrityError(
                f"run {run_id!r}, query {query_id!r}: {len(per_query)} candidates exceeds depth {expected_depth}"
            )
        queries[query_id] = tuple(per_query[r] for r in sorted(per_query))
    return RetrievalRun(run_id=run_id, query_lang=query_lang, queries=queries)


def parse_run(
    path: str | Path,
    expected_depth: int | None = 50,
    *,
    run_id: str | None = None,
    query_lang: str | None = None,
    allow_extra_langs: bool = False,
) -> RetrievalRun:
    """Read a run file: one candidate per line.

    Required fields per line: query_id, doc_id, rank, score, doc_lang.
    Optional: wpid. ``run_id`` defaults to the file stem.
    """
    path = Path(path)
    if query_lang is not None:
        validate_lang(query_lang, allow_extra=allow_extra_langs)
    cands: list[RankedCandidate] = []
    for lineno, obj in _iter_jsonl(path):
        rank = _require(obj, "rank", str(path), lineno)
        score = _require(obj, "score", str(path), lineno)
        if not isinstance(rank, int) or isinstance(rank, bool):
            raise ParseError(f"rank must be an integer, got {rank!r}", path=str(path), line=lineno)
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ParseError(f"score must be a number, got {score!r}", path=str(path), line=lineno)
        doc_lang = _require(obj, "doc_lang", str(path), lineno)
        try:
            validate_lang(doc_lang, allow_extra=allow_extra_langs)
        except DataError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from exc
        wpid = obj.get("wpid")
        if wpid is not None and not isinstance(wpid, str):
            raise ParseError(f"wpid must be a string, got {wpid!r}", path=str(path), line=lineno)
        try:
            cands.append(
                RankedCandidate(
                    query_id=str(_require(obj, "query_id", str(path), lineno)),
                    doc_id=str(_require(obj, "doc_id", str(path), lineno)),
                    rank=rank,
                    score=float(score),
                    doc_lang=doc_lang,
                    wpid=wpid,
                )
            )
        except DataError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from exc
    return build_run(
        cands,
        run_id=run_id if run_id is not None else path.stem,
        query_lang=query_lang,
        expected_depth=expected_depth,
    )


def serialize_run(run: RetrievalRun) -> str:
    """Render a run back to JSONL, queries in sorted order."""
    lines = []
    for query_id in run.query_ids:
        for cand in run.queries[query_id]:
            obj = {
                "query_id": cand.query_id,
                "doc_id": cand.doc_id,
                "rank": cand.rank,
                "score": cand.score,
                "doc_lang": cand.doc_lang,
            }
            if cand.wpid is not None:
                obj["wpid"] = cand.wpid
            lines.append(_dump(obj))
    return "\n".join(lines) + ("\n" if lines else "")


def write_run(run: RetrievalRun, path: str | Path) -> None:
    Path(path).write_text(serialize_run(run), encoding="utf-8")


@dataclass(frozen=True)
class GoldProvenance:
    """Gold Wikipedia page ids for one query."""

    query_id: str
    gold_wpids: frozenset[str]

    def __post_init__(self) -> None:
        if not self.gold_wpids:
            raise DataError(f"query {self.query_id!r}: gold wpid set must be non-empty")


@dataclass(frozen=True)
class ProvenanceMap:
    """All gold provenance entries plus a count of rejected records.

    Records with an empty wpid list are dropped, not fatal: some
    questions genuinely have no traceable gold page and the counting
    protocol needs to know how many.
    """

    entries: Mapping[str, GoldProvenance]
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.entries

    def __getitem__(self, query_id: str) -> GoldProvenance:
        return self.entries[query_id]

    def get(self, query_id: str) -> GoldProvenance | None:
        return self.entries.get(query_id)


def parse_provenance(path: str | Path) -> ProvenanceMap:
    """Read gold provenance: lines of {"query_id": ..., "gold_wpids": [...]}.

    Duplicate query_ids merge by set union. Lines whose wpid list is
    empty are rejected and counted in the result's ``rejected`` field.
    """
    path = Path(path)
    merged: dict[str, set[str]] = {}
    rejected = 0
    for lineno, obj in _iter_jsonl(path):
        query_id = str(_require(obj, "query_id", str(path), lineno))
        wpids = _require(obj, "gold_wpids", str(path), lineno)
        if not isinstance(wpids, list) or not all(isinstance(w, str) for w in wpids):
            raise ParseError("gold_wpids must be a list of strings", path=str(path), line=lineno)
        if not wpids:
            rejected += 1
            continue
        merged.setdefault(query_id, set()).update(wpids)
    entries = {
        qid: GoldProvenance(query_id=qid, gold_wpids=frozenset(wpids))
        for qid, wpids in merged.items()
    }
    return ProvenanceMap(entries=entries, rejected=rejected)


def serialize_provenance(prov: ProvenanceMap) -> str:
    lines = [
        _dump({"query_id": qid, "gold_wpids": sorted(entry.gold_wpids)})
        for qid, entry in sorted(prov.entries.items())
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def write_provenance(prov: ProvenanceMap, path: str | Path) -> None:
    Path(path).write_text(serialize_provenance(prov), encoding="utf-8")


@dataclass(frozen=True)
class SitelinkMap:
    """For each Wikipedia page id, the language editions where it exists.

    Every entry must include "en": pages enter the pool through the
    English edition, so an entry without it indicates upstream
    corruption.
    """

    langs_by_wpid: Mapping[str, frozenset[str]]

    def __post_init__(self) -> None:
        for wpid, langs in self.langs_by_wpid.items():
            if "en" not in langs:
                raise IntegrityError(f"sitelink entry {wpid!r} lacks the en edition")

    def __contains__(self, wpid: str) -> bool:
        return wpid in self.langs_by_wpid

    def __len__(self) -> int:
        return len(self.langs_by_wpid)

    def has(self, wpid: str, lang: str) -> bool:
        """True when the page exists and has an edition in ``lang``."""
        langs = self.langs_by_wpid.get(wpid)
        return langs is not None and lang in langs


def parse_sitelinks(path: str | Path, *, allow_extra_langs: bool = False) -> SitelinkMap:
    """Read sitelinks: lines of {"wpid": ..., "langs": [...]}."""
    path = Path(path)
    mapping: dict[str, frozenset[str]] = {}
    for lineno, obj in _iter_jsonl(path):
        wpid = str(_require(obj, "wpid", str(path), lineno))
        langs = _require(obj, "langs", str(path), lineno)
        if not isinstance(langs, list) or not all(isinstance(lang, str) for lang in langs):
            raise ParseError("langs must be a list of strings", path=str(path), line=lineno)
        for lang in langs:
            try:
                validate_lang(lang, allow_extra=allow_extra_langs)
            except DataError as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
        if wpid in mapping:
            raise ParseError(f"duplicate sitelink entry for wpid {wpid!r}", path=str(path), line=lineno)
        mapping[wpid] = frozenset(langs)
    try:
        return SitelinkMap(langs_by_wpid=mapping)
    except IntegrityError as exc:
        raise IntegrityError(f"{path}: {exc}") from exc


def serialize_sitelinks(sitelinks: SitelinkMap) -> str:
    lines = [
        _dump({"wpid": wpid, "langs": sorted(langs)})
        for wpid, langs in sorted(sitelinks.langs_by_wpid.items())
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def write_sitelinks(sitelinks: SitelinkMap, path: str | Path) -> None:
    Path(path).write_text(serialize_sitelinks(sitelinks), encoding="utf-8")


@dataclass(frozen=True)
class CorpusStats:
    """Passage count and passage-length statistics for one language."""

    lang: str
    passage_count: int
    median_passage_len: float
    mean_passage_len: float | None = None

    def __post_init__(self) -> None:
        if self.passage_count < 0:
            raise DataError(f"{self.lang}: passage_count must be >= 0, got {self.passage_count}")
        if self.median_passage_len < 0:
            raise DataError(f"{self.lang}: median_passage_len must be >= 0, got {self.median_passage_len}")
        # Zero median with a non-empty corpus (or vice versa) means the stats file is corrupt.
        if (self.median_passage_len == 0) != (self.passage_count == 0):
            raise IntegrityError(
                f"{self.lang}: median_passage_len == 0 must coincide with passage_count == 0 "
                f"(got count={self.passage_count}, median={self.median_passage_len})"
            )


def parse_corpus_stats(path: str | Path, *, allow_extra_langs: bool = False) -> dict[str, CorpusStats]:
    """Read corpus stats: lines of {"lang", "passage_count", "median_passage_len"}."""
    path = Path(path)
    stats: dict[str, CorpusStats] = {}
    for lineno, obj in _iter_jsonl(path):
        lang = _require(obj, "lang", str(path), lineno)
        count = _require(obj, "passage_count", str(path), lineno)
        median = _require(obj, "median_passage_len", str(path), lineno)
        try:
            validate_lang(lang, allow_extra=allow_extra_langs)
        except DataError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from exc
        if not isinstance(count, int) or isinstance(count, bool):
            raise ParseError(f"passage_count must be an integer, got {count!r}", path=str(path), line=lineno)
        if not isinstance(median, (int, float)) or isinstance(median, bool):
            raise ParseError(f"median_passage_len must be a number, got {median!r}", path=str(path), line=lineno)
        if lang in stats:
            raise ParseError(f"duplicate corpus stats for language {lang!r}", path=str(path), line=lineno)
        mean = obj.get("mean_passage_len")
        if mean is not None and (not isinstance(mean, (int, float)) or isinstance(mean, bool)):
            raise ParseError(f"mean_passage_len must be a number, got {mean!r}", path=str(path), line=lineno)
        try:
            stats[lang] = CorpusStats(
                lang=lang,
                passage_count=count,
                median_passage_len=float(median),
                mean_passage_len=float(mean) if mean is not None else None,
            )
        except DataError as exc:
            raise ParseError(str(exc), path=str(path), line=lineno) from exc
    return stats


def serialize_corpus_stats(stats: Mapping[str, CorpusStats]) -> str:
    lines = []
    for _, s in sorted(stats.items()):
        obj = {
            "lang": s.lang,
            "passage_count": s.passage_count,
            "median_passage_len": s.median_passage_len,
        }
        if s.mean_passage_len is not None:
            obj["mean_passage_len"] = s.mean_passage_len
        lines.append(_dump(obj))
    return "\n".join(lines) + ("\n" if lines else "")


def write_corpus_stats(stats: Mapping[str, CorpusStats], path: str | Path) -> None:
    Path(path).write_text(serialize_corpus_stats(stats), encoding="utf-8")
