"""Character 3-gram lexical retriever for desk-scale experiments.

Scoring is the multiset intersection size of character trigrams between
query and passage (no idf, no length normalization): the simplest
scheme whose every score can be recounted by hand, which is the point.
Texts are NFC-normalized and lowercased the same way as the n-gram
recall metric so the two agree on what a gram is.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .errors import DataError, DomainError, IntegrityError, ParseError
from .langmodel import RankedCandidate, RetrievalRun, build_run, validate_lang
from .metrics import _char_ngrams, _normalize_for_grams

NGRAM_SIZE = 3


@dataclass(frozen=True)
class Passage:
    doc_id: str
    lang: str
    text: str
    wpid: str | None = None

    def __post_init__(self) -> None:
        validate_lang(self.lang, allow_extra=True)
        if not self.text:
            raise DataError(f"passage {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class ToyCorpus:
    passages: tuple[Passage, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for passage in self.passages:
            if passage.doc_id in seen:
                raise IntegrityError(f"duplicate doc_id {passage.doc_id!r} in corpus")
            seen.add(passage.doc_id)

    def __len__(self) -> int:
        return len(self.passages)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> ToyCorpus:
        path = Path(path)
        passages: list[Passage] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON ({exc.msg})", path=str(path), line=lineno) from exc
                for key in ("doc_id", "lang", "text"):
                    if key not in obj:
                        raise ParseError(f"missing required field {key!r}", path=str(path), line=lineno)
                try:
                    passages.append(
                        Passage(
                            doc_id=str(obj["doc_id"]),
                            lang=obj["lang"],
                            text=obj["text"],
                            wpid=obj.get("wpid"),
                        )
                    )
                except DataError as exc:
                    raise ParseError(str(exc), path=str(path), line=lineno) from exc
        return cls(passages=tuple(passages))

    def to_jsonl(self, path: str | Path) -> None:
        lines = []
        for p in self.passages:
            obj: dict = {"doc_id": p.doc_id, "lang": p.lang, "text": p.text}
            if p.wpid is not None:
                obj["wpid"] = p.wpid
            lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


@dataclass(frozen=True)
class ToyIndex:
    """Immutable inverted index: gram -> {doc_id -> multiplicity}."""

    corpus: ToyCorpus
    postings: Mapping[str, Mapping[str, int]]


def index(corpus: ToyCorpus) -> ToyIndex:
    """Build the inverted trigram index for a non-empty corpus."""
    if not corpus.passages:
        raise DataError("cannot index an empty corpus")
    postings: dict[str, dict[str, int]] = {}
    for passage in corpus.passages:
        grams = _char_ngrams(_normalize_for_grams(passage.text), NGRAM_SIZE)
        for gram, count in grams.items():
            postings.setdefault(gram, {})[passage.doc_id] = count
    return ToyIndex(corpus=corpus, postings=postings)


class ScoredDoc(NamedTuple):
    doc_id: str
    score: int
    lang: str
    wpid: str | None


def search(idx: ToyIndex, query: str, k: int, *, include_zero: bool = True) -> list[ScoredDoc]:
    """Top-k passages by shared-gram count, ties broken by doc_id.

    With ``include_zero`` (the default) passages sharing no gram pad
    the tail in doc_id order, so the result always carries min(k,
    corpus size) entries; without it only positive scores return.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    query_grams = _char_ngrams(_normalize_for_grams(query), NGRAM_SIZE)
    scores: Counter[str] = Counter()
    for gram, q_count in query_grams.items():
        for doc_id, d_count in idx.postings.get(gram, {}).items():
            scores[doc_id] += min(q_count, d_count)
    by_id = {p.doc_id: p for p in idx.corpus.passages}
    if include_zero:
        candidates = sorted(by_id, key=lambda d: (-scores.get(d, 0), d))
    else:
        candidates = sorted((d for d in by_id if scores.get(d, 0) > 0), key=lambda d: (-scores[d], d))
    return [
        ScoredDoc(doc_id=d, score=scores.get(d, 0), lang=by_id[d].lang, wpid=by_id[d].wpid)
        for d in candidates[:k]
    ]


def best_rank(idx: ToyIndex, query: str, wpids: Iterable[str]) -> int | None:
    """Rank of the best-placed passage whose wpid is in ``wpids``.

    Searches the whole corpus; None when no passage carries one of the
    page ids.
    """
    wanted = set(wpids)
    results = search(idx, query, k=len(idx.corpus))
    for position, doc in enumerate(results, start=1):
        if doc.wpid is not None and doc.wpid in wanted:
            return position
    return None


def run_search(
    idx: ToyIndex,
    queries: Mapping[str, str],
    k: int,
    *,
    run_id: str,
    query_lang: str | None = None,
    include_zero: bool = True,
) -> RetrievalRun:
    """Search a batch of queries and emit a run consumable downstream."""
    if not queries:
        raise DataError("run_search needs at least one query")
    candidates: list[RankedCandidate] = []
    for query_id in sorted(queries):
        for rank, doc in enumerate(search(idx, queries[query_id], k, include_zero=include_zero), start=1):
            candidates.append(
                RankedCandidate(
                    query_id=query_id,
                    doc_id=doc.doc_id,
                    rank=rank,
                    score=float(doc.score),
                    doc_lang=doc.lang,
                    wpid=doc.wpid,
                )
            )
    return build_run(candidates, run_id=run_id, query_lang=query_lang, expected_depth=k)
