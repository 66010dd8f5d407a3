"""Preference-aligned query fusion: repetition policy, segments, joining.

A fused query concatenates labeled segments: the English pivot
([GLOB]), the original query ([LOCAL:xx]), a bilingual title bridge,
alias blocks in both languages, and a locale hint. Segment copy counts
come from a confidence-gated policy: the more confidently a query is
tied to one culture, the more copies of the local-language material the
fused string carries, which shifts lexical mass toward the local
edition without touching the retriever.
"""

from __future__ import annotations

import re
import unicodedata
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

from .errors import ConfigError, DataError, DomainError, ValidationError
from .langmodel import validate_lang

DEFAULT_TAU_LOW = 0.6
DEFAULT_TAU_HIGH = 0.85
DEFAULT_TAU_BOOST = 0.7
DEFAULT_DELIMITER = " | "
DEFAULT_MAX_LEN = 900

LABEL_RE = re.compile(r"\[(GLOB|LOCAL:[a-z]{2}|TITLE_BRIDGE|ALIASES:[a-z]{2}|ALIASES:GLOB|LOCALE_HINT)\]")

_CUE_KEYS = frozenset(
    {"is_culture_specific", "cultural_language", "country_or_region", "confidence", "rationale"}
)
_BUNDLE_KEYS = frozenset({"en_title", "local_title", "aliases_en", "aliases_local", "extra_disambig"})


@dataclass(frozen=True)
class CulturalCue:
    """Classifier output: is the query culture-specific, and for whom."""

    is_culture_specific: bool
    cultural_language: str
    country_or_region: str | None
    confidence: float
    rationale: str

    def __post_init__(self) -> None:
        validate_lang(self.cultural_language)
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence must lie in [0, 1], got {self.confidence}")

    @classmethod
    def from_payload(cls, payload: object) -> CulturalCue:
        """Validate a raw JSON payload against the fixed cue schema.

        The schema is closed: missing and extra keys both reject, so a
        drifting upstream model fails loudly instead of silently
        degrading the fusion.
        """
        if not isinstance(payload, dict):
            raise ValidationError(f"cue payload must be an object, got {type(payload).__name__}", payload=payload)
        missing = _CUE_KEYS - payload.keys()
        extra = payload.keys() - _CUE_KEYS
        if missing or extra:
            raise ValidationError(
                f"cue payload keys mismatch (missing: {sorted(missing)}, extra: {sorted(extra)})",
                payload=payload,
            )
        if not isinstance(payload["is_culture_specific"], bool):
            raise ValidationError("is_culture_specific must be a boolean", payload=payload)
        if not isinstance(payload["cultural_language"], str):
            raise ValidationError("cultural_language must be a string", payload=payload)
        region = payload["country_or_region"]
        if region is not None and not isinstance(region, str):
            raise ValidationError("country_or_region must be a string or null", payload=payload)
        confidence = payload["confidence"]
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise ValidationError("confidence must be a number", payload=payload)
        if not isinstance(payload["rationale"], str):
            raise ValidationError("rationale must be a string", payload=payload)
        try:
            return cls(
                is_culture_specific=payload["is_culture_specific"],
                cultural_language=payload["cultural_language"],
                country_or_region=region,
                confidence=float(confidence),
                rationale=payload["rationale"],
            )
        except DataError as exc:
            raise ValidationError(str(exc), payload=payload) from exc

    def to_payload(self) -> dict:
        return {
            "is_culture_specific": self.is_culture_specific,
            "cultural_language": self.cultural_language,
            "country_or_region": self.country_or_region,
            "confidence": self.confidence,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class CueBundle:
    """Disambiguation material for one query: titles, aliases, hint."""

    en_title: str | None
    local_title: str | None
    aliases_en: tuple[str, ...] = ()
    aliases_local: tuple[str, ...] = ()
    extra_disambig: str | None = None

    def __post_init__(self) -> None:
        # The hint must stay short: it is appended verbatim to the fused query.
        if self.extra_disambig is not None and len(self.extra_disambig.split()) > 8:
            raise ValidationError(
                f"extra_disambig exceeds 8 words: {self.extra_disambig!r}",
                payload=self.extra_disambig,
            )

    @classmethod
    def from_payload(cls, payload: object) -> CueBundle:
        """Validate a raw JSON payload against the fixed bundle schema."""
        if not isinstance(payload, dict):
            raise ValidationError(f"bundle payload must be an object, got {type(payload).__name__}", payload=payload)
        missing = _BUNDLE_KEYS - payload.keys()
        extra = payload.keys() - _BUNDLE_KEYS
        if missing or extra:
            raise ValidationError(
                f"bundle payload keys mismatch (missing: {sorted(missing)}, extra: {sorted(extra)})",
                payload=payload,
            )
        for key in ("en_title", "local_title", "extra_disambig"):
            value = payload[key]
            if value is not None and not isinstance(value, str):
                raise ValidationError(f"{key} must be a string or null", payload=payload)
        aliases: dict[str, tuple[str, ...]] = {}
        for key in ("aliases_en", "aliases_local"):
            value = payload[key]
            if value is None:
                aliases[key] = ()
            elif isinstance(value, list) and all(isinstance(item, str) for item in value):
                aliases[key] = tuple(value)
            else:
                raise ValidationError(f"{key} must be a list of strings or null", payload=payload)
        try:
            return cls(
                en_title=payload["en_title"],
                local_title=payload["local_title"],
                aliases_en=aliases["aliases_en"],
                aliases_local=aliases["aliases_local"],
                extra_disambig=payload["extra_disambig"],
            )
        except ValidationError:
            raise
        except DataError as exc:
            raise ValidationError(str(exc), payload=payload) from exc

    def to_payload(self) -> dict:
        return {
            "en_title": self.en_title,
            "local_title": self.local_title,
            "aliases_en": list(self.aliases_en),
            "aliases_local": list(self.aliases_local),
            "extra_disambig": self.extra_disambig,
        }


@dataclass(frozen=True)
class RepetitionPlan:
    """Copy counts for the fused query plus the thresholds that produced them."""

    r_local: int
    r_glob: int
    boost: bool
    tau_low: float = DEFAULT_TAU_LOW
    tau_high: float = DEFAULT_TAU_HIGH
    tau_boost: float = DEFAULT_TAU_BOOST

    def to_json_dict(self) -> dict:
        return {
            "r_local": self.r_local,
            "r_glob": self.r_glob,
            "boost": self.boost,
            "tau_low": self.tau_low,
            "tau_high": self.tau_high,
            "tau_boost": self.tau_boost,
        }


def _check_thresholds(tau_low: float, tau_high: float, tau_boost: float) -> None:
    for name, value in (("tau_low", tau_low), ("tau_high", tau_high), ("tau_boost", tau_boost)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    if not tau_low < tau_high:
        raise ConfigError(f"tau_low must be < tau_high, got {tau_low} >= {tau_high}")


def repetition_policy(
    culture_specific: bool,
    confidence: float,
    *,
    tau_low: float = DEFAULT_TAU_LOW,
    tau_high: float = DEFAULT_TAU_HIGH,
    tau_boost: float = DEFAULT_TAU_BOOST,
) -> RepetitionPlan:
    """Map (culture-specific?, confidence) to copy counts.

    Culture-specific queries earn extra local copies as confidence
    crosses tau_low and tau_high (and lose the second global copy once
    past tau_low); the boost flag doubles the local-side anchors at
    tau_boost. Non-culture-specific queries keep one local copy and two
    global copies. Threshold comparisons are inclusive (>=).
    """
    _check_thresholds(tau_low, tau_high, tau_boost)
    if not 0.0 <= confidence <= 1.0:
        raise DomainError(f"confidence must lie in [0, 1], got {confidence}")
    if culture_specific:
        r_local = 1 + (confidence >= tau_low) + (confidence >= tau_high)
        r_glob = 1 + (confidence < tau_low)
        boost = confidence >= tau_boost
    else:
        r_local = 1
        r_glob = 2
        boost = False
    return RepetitionPlan(
        r_local=int(r_local),
        r_glob=int(r_glob),
        boost=bool(boost),
        tau_low=tau_low,
        tau_high=tau_high,
        tau_boost=tau_boost,
    )


@dataclass(frozen=True)
class Segment:
    """One labeled block of the fused query, emitted ``repeat`` times."""

    label: str
    content: str
    repeat: int

    def __post_init__(self) -> None:
        if not LABEL_RE.fullmatch(self.label):
            raise DataError(f"bad segment label {self.label!r}")
        if not self.content:
            raise DataError(f"segment {self.label} has empty content")
        if self.repeat < 1:
            raise DomainError(f"segment {self.label}: repeat must be >= 1, got {self.repeat}")

    def render(self) -> str:
        return f"{self.label} {self.content}"


def _norm_text(text: str) -> str:
    return unicodedata.normalize("NFC", text).casefold().strip()


class DedupResult(NamedTuple):
    bundle: CueBundle
    single_title: bool
    aliases_merged: bool
    mandatory_local: bool


def dedup_bundle(bundle: CueBundle, query_lang: str) -> DedupResult:
    """Drop bundle material that would duplicate itself in the fusion.

    Titles equal after normalization collapse to the global side;
    alias lists equal as normalized sets keep only the global block.
    The mandatory-local flag reminds callers that non-English queries
    must keep at least one local copy regardless.
    """
    validate_lang(query_lang, allow_extra=True)
    single_title = (
        bundle.en_title is not None
        and bundle.local_title is not None
        and _norm_text(bundle.en_title) == _norm_text(bundle.local_title)
    )
    if single_title:
        bundle = replace(bundle, local_title=None)
    aliases_merged = (
        bool(bundle.aliases_en)
        and bool(bundle.aliases_local)
        and {_norm_text(a) for a in bundle.aliases_en} == {_norm_text(a) for a in bundle.aliases_local}
    )
    if aliases_merged:
        bundle = replace(bundle, aliases_local=())
    return DedupResult(
        bundle=bundle,
        single_title=single_title,
        aliases_merged=aliases_merged,
        mandatory_local=query_lang != "en",
    )


def build_segments(
    q_glob: str,
    q_local: str,
    query_lang: str,
    bundle: CueBundle,
    cue: CulturalCue,
    plan: RepetitionPlan,
) -> tuple[Segment, ...]:
    """Assemble the ordered segment list for one query.

    Order is fixed: global pivot, local query, title bridge, local
    aliases, global aliases, locale hint. The boost flag doubles the
    title bridge and the local alias block only. English queries merge
    the local block into the global one (the two strings coincide) with
    the larger of the two copy counts.
    """
    validate_lang(query_lang, allow_extra=True)
    if not q_glob.strip():
        raise DataError("q_glob must be non-empty")
    if query_lang != "en" and not q_local.strip():
        raise DataError(f"q_local must be non-empty for query_lang={query_lang!r}")

    anchor_repeat = 2 if plan.boost else 1
    segments: list[Segment] = []
    if query_lang == "en":
        segments.append(Segment("[GLOB]", q_glob, max(plan.r_local, plan.r_glob)))
    else:
        segments.append(Segment("[GLOB]", q_glob, plan.r_glob))
        segments.append(Segment(f"[LOCAL:{query_lang}]", q_local, plan.r_local))

    if bundle.en_title is not None and bundle.local_title is not None:
        title = f"{bundle.en_title} / {bundle.local_title}"
    else:
        title = bundle.en_title or bundle.local_title or ""
    if title:
        segments.append(Segment("[TITLE_BRIDGE]", title, anchor_repeat))
    if bundle.aliases_local:
        segments.append(Segment(f"[ALIASES:{query_lang}]", ", ".join(bundle.aliases_local), anchor_repeat))
    if bundle.aliases_en:
        segments.append(Segment("[ALIASES:GLOB]", ", ".join(bundle.aliases_en), 1))

    hint_parts = [part.strip() for part in (cue.country_or_region or "", bundle.extra_disambig or "")]
    hint = " ".join(part for part in hint_parts if part)
    if hint:
        segments.append(Segment("[LOCALE_HINT]", hint, 1))

    if not title and not bundle.aliases_local and not bundle.aliases_en and not hint:
        warnings.warn(
            "degenerate cue bundle (no titles, aliases, or locale hint); "
            "fusing the query segments only",
            stacklevel=2,
        )
    return tuple(segments)


@dataclass(frozen=True)
class FusedQuery:
    """The fused string plus the segment plan that produced it."""

    text: str
    segments: tuple[Segment, ...]
    max_len: int

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise DomainError(f"max_len must be >= 1, got {self.max_len}")
        if len(self.text) > self.max_len:
            raise DataError(f"fused text length {len(self.text)} exceeds max_len {self.max_len}")


def fuse(
    segments: tuple[Segment, ...] | list[Segment],
    delimiter: str = DEFAULT_DELIMITER,
    max_len: int = DEFAULT_MAX_LEN,
    *,
    query_lang: str | None = None,
) -> FusedQuery:
    """Join segment copies with the delimiter and cap the length.

    Copies of the same segment stay adjacent. Truncation is a plain
    character prefix (never splitting a character, which Python string
    slicing guarantees), with one exception: if it would cut away every
    complete local-query copy of a non-English query, one local copy is
    moved to the front and the cut reapplied.
    """
    segments = tuple(segments)
    if not segments:
        raise DataError("fuse requires at least one segment")
    if max_len < 1:
        raise DomainError(f"max_len must be >= 1, got {max_len}")

    def join(segs: tuple[Segment, ...]) -> tuple[str, dict[str, int]]:
        labeled: list[tuple[str, str]] = []
        for seg in segs:
            labeled.extend([(seg.label, seg.render())] * seg.repeat)
        # End offset of the first copy of each label within the join.
        first_end: dict[str, int] = {}
        offset = 0
        for i, (label, piece) in enumerate(labeled):
            if i:
                offset += len(delimiter)
            offset += len(piece)
            first_end.setdefault(label, offset)
        return delimiter.join(piece for _, piece in labeled), first_end

    joined, first_end = join(segments)
    local_labels = [seg.label for seg in segments if seg.label.startswith("[LOCAL:")]
    if (
        len(joined) > max_len
        and query_lang is not None
        and query_lang != "en"
        and local_labels
        and first_end[local_labels[0]] > max_len
    ):
        # No complete local copy would survive; front-load one copy.
        local = next(seg for seg in segments if seg.label == local_labels[0])
        rest: list[Segment] = []
        for seg in segments:
            if seg is local:
                if seg.repeat > 1:
                    rest.append(replace(seg, repeat=seg.repeat - 1))
            else:
                rest.append(seg)
        segments = (replace(local, repeat=1), *rest)
        joined, _ = join(segments)
    return FusedQuery(text=joined[:max_len], segments=segments, max_len=max_len)


class DeltaOutcome(NamedTuple):
    fused: FusedQuery
    plan: RepetitionPlan
    dedup: DedupResult


def run_delta(
    q_local: str,
    query_lang: str,
    cue: CulturalCue,
    bundle: CueBundle,
    q_glob: str,
    *,
    tau_low: float = DEFAULT_TAU_LOW,
    tau_high: float = DEFAULT_TAU_HIGH,
    tau_boost: float = DEFAULT_TAU_BOOST,
    delimiter: str = DEFAULT_DELIMITER,
    max_len: int = DEFAULT_MAX_LEN,
) -> DeltaOutcome:
    """Full fusion for one query, returning the plan and dedup flags too."""
    dedup = dedup_bundle(bundle, query_lang)
    plan = repetition_policy(
        cue.is_culture_specific,
        cue.confidence,
        tau_low=tau_low,
        tau_high=tau_high,
        tau_boost=tau_boost,
    )
    segments = build_segments(q_glob, q_local, query_lang, dedup.bundle, cue, plan)
    fused = fuse(segments, delimiter=delimiter, max_len=max_len, query_lang=query_lang)
    return DeltaOutcome(fused=fused, plan=plan, dedup=dedup)


def delta_transform(
    q_local: str,
    query_lang: str,
    cue: CulturalCue,
    bundle: CueBundle,
    q_glob: str,
    *,
    tau_low: float = DEFAULT_TAU_LOW,
    tau_high: float = DEFAULT_TAU_HIGH,
    tau_boost: float = DEFAULT_TAU_BOOST,
    delimiter: str = DEFAULT_DELIMITER,
    max_len: int = DEFAULT_MAX_LEN,
) -> FusedQuery:
    """Deduplicate, plan repetitions, build segments, fuse. Deterministic."""
    return run_delta(
        q_local,
        query_lang,
        cue,
        bundle,
        q_glob,
        tau_low=tau_low,
        tau_high=tau_high,
        tau_boost=tau_boost,
        delimiter=delimiter,
        max_len=max_len,
    ).fused
