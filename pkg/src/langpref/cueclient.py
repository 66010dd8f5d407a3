"""Cue resolution: cached replay or OpenAI-compatible chat completions.

Three payload kinds feed the fusion pipeline: the cultural cue (is the
query culture-specific, and whose culture), the disambiguation bundle
(titles, aliases, hint), and the English pivot translation. Each is
answered from an append-only JSONL cache when possible; otherwise the
client POSTs the fixed wire-format prompt to a chat-completions
endpoint at temperature 0 and stores the validated payload back, so a
populated cache makes every later run fully offline and byte-stable.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import httpx

from .delta import CueBundle, CulturalCue
from .errors import ConfigError, DataError, ParseError, TransportError, ValidationError
from .langmodel import LANGUAGE_NAMES

KIND_CULTURAL = "cultural"
KIND_BUNDLE = "bundle"
KIND_TRANSLATION = "translation"
CACHE_KINDS = (KIND_CULTURAL, KIND_BUNDLE, KIND_TRANSLATION)

# Wire-format prompt texts. These strings are the protocol the cached
# payloads were produced under; do not edit them without invalidating
# every existing cache.
CULTURAL_SYSTEM_PROMPT = """\
You are annotating a FAIR multilingual retrieval setup.
Given an English query, decide the SINGLE most appropriate "cultural database language"
where the relevant evidence SHOULD exist in a fair, localized setting.

CRITICAL RULES:
- You MUST choose exactly ONE language from this fixed set:
  {en, ar, es, de, ja, ko, th, zh, fr, it, pt, ru, fi}
- Prefer the LOCAL language of the primary place/culture the query is about.
- Do NOT choose 'en' just because the query text is English.
- Choose 'en' only if the query's primary cultural context is inherently English-speaking
  (e.g., US/UK-specific) OR the query is truly global / multi-country / not place-specific.
- If the query mentions a place that maps to one of the non-English languages,
  pick that non-English language.

Examples:
- "when did hong kong go back to china" -> cultural_language="zh"
- "what is the capital of france" -> cultural_language="fr"
- "who was the first president of the united states" -> cultural_language="en"
- "compare gdp of france and germany" -> cultural_language="en" (multi-country/global)

Output (JSON only; no extra text):
{
  "country_or_region": string (SINGLE primary place/region),
  "cultural_language": string (exactly one from the set),
  "is_culture_specific": boolean,
  "confidence": number in [0,1],
  "rationale": short string
}"""

CULTURAL_USER_TEMPLATE = "Query: {query_en}"

BUNDLE_SYSTEM_TEMPLATE = """\
Goal: Produce title/alias anchors and a short disambiguation hint for fused query construction.

Return Format:
- SINGLE-LINE JSON object only (no markdown, no explanation).
- Keys must be EXACTLY:
    en_title, local_title, aliases_en, aliases_local, extra_disambig

Constraints:
- aliases_en / aliases_local: 0..K items each
- Titles: plausible Wikipedia page titles; use null if unsure
- extra_disambig: <= 8 words
- local_title & aliases_local MUST be in {query_lang}; English fields MUST be English
- Do not add new keys"""

TRANSLATION_SYSTEM_TEMPLATE = """\
You are a professional translator from {lang_name} to English.
You receive a question in the source language and must translate it into fluent,
natural English while preserving the original meaning as much as possible.
- Keep named entities as appropriate English forms.
- Do not add explanations or extra information.
Return STRICT JSON with a single key "translation"."""

TRANSLATION_USER_TEMPLATE = """\
Question in {lang_name}:
{query}

Return only:
{{"translation": "<the question translated into English>"}}"""


def validate_payload(kind: str, payload: object) -> dict:
    """Schema-check one payload; returns it as a plain dict.

    Cultural and bundle payloads delegate to their type constructors;
    translations must be exactly a single-key object with a non-empty
    string.
    """
    if kind == KIND_CULTURAL:
        return CulturalCue.from_payload(payload).to_payload()
    if kind == KIND_BUNDLE:
        return CueBundle.from_payload(payload).to_payload()
    if kind == KIND_TRANSLATION:
        if not isinstance(payload, dict) or set(payload.keys()) != {"translation"}:
            raise ValidationError(
                "translation payload must be exactly {\"translation\": ...}", payload=payload
            )
        text = payload["translation"]
        if not isinstance(text, str) or not text.strip():
            raise ValidationError("translation must be a non-empty string", payload=payload)
        return {"translation": text}
    raise DataError(f"unknown cache kind {kind!r}; expected one of {CACHE_KINDS}")


class CueCache:
    """Append-only JSONL store keyed by (query_id, kind); last entry wins."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str], dict] = {}
        self._sources: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON ({exc.msg})", path=str(self.path), line=lineno) from exc
                if not isinstance(obj, dict) or "key" not in obj or "payload" not in obj:
                    raise ParseError("expected {\"key\": ..., \"payload\": ...}", path=str(self.path), line=lineno)
                key = obj["key"]
                if not isinstance(key, dict) or "query_id" not in key or "kind" not in key:
                    raise ParseError("key must carry query_id and kind", path=str(self.path), line=lineno)
                kind = key["kind"]
                try:
                    payload = validate_payload(kind, obj["payload"])
                except DataError as exc:
                    raise ParseError(str(exc), path=str(self.path), line=lineno) from exc
                self._entries[(str(key["query_id"]), kind)] = payload
                self._sources[(str(key["query_id"]), kind)] = "file"

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, query_id: str, kind: str) -> dict | None:
        return self._entries.get((query_id, kind))

    def items(self) -> list[tuple[tuple[str, str], dict]]:
        """All (key, payload) entries, unordered; callers sort as needed."""
        return list(self._entries.items())

    def source_of(self, query_id: str, kind: str) -> str | None:
        return self._sources.get((query_id, kind))

    def put(self, query_id: str, kind: str, payload: object, *, source: str = "http") -> dict:
        """Validate, persist (when file-backed), and remember one payload."""
        validated = validate_payload(kind, payload)
        line = json.dumps(
            {"key": {"query_id": query_id, "kind": kind}, "payload": validated},
            ensure_ascii=False,
            sort_keys=True,
        )
        with self._lock:
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            self._entries[(query_id, kind)] = validated
            self._sources[(query_id, kind)] = source
        return validated


class CueClient:
    """Resolve cues from the cache, falling back to the HTTP endpoint.

    The endpoint speaks the OpenAI chat-completions JSON shape. Every
    request is temperature 0. Transport failures and 5xx responses are
    retried a bounded number of times; anything else fails fast.
    """

    def __init__(
        self,
        cache: CueCache | None = None,
        *,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        temperature: float = 0.0,
        timeout: float = 30.0,
        max_retries: int = 3,
        retry_delay: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        if endpoint is not None and not model:
            raise ConfigError("an endpoint requires a model id")
        self.cache = cache
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> CueClient:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def _cached(self, query_id: str, kind: str) -> dict | None:
        if self.cache is None:
            return None
        return self.cache.get(query_id, kind)

    def _store(self, query_id: str, kind: str, payload: dict) -> None:
        if self.cache is not None:
            self.cache.put(query_id, kind, payload, source="http")

    def _require_endpoint(self, query_id: str, kind: str) -> None:
        if self.endpoint is not None:
            return
        if self.cache is None:
            raise ConfigError("neither a cue cache nor an endpoint is configured")
        raise DataError(
            f"cue cache has no {kind} entry for query {query_id!r} and no endpoint is configured"
        )

    def _chat(self, system: str, user: str) -> str:
        assert self.endpoint is not None
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(1 + self.max_retries):
            if attempt and self.retry_delay:
                time.sleep(self.retry_delay)
            try:
                response = self._client.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = TransportError(f"endpoint returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"endpoint returned {response.status_code}: {response.text[:200]}"
                )
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion envelope: {exc}") from exc
            if not isinstance(content, str):
                raise TransportError(f"completion content is not text: {type(content).__name__}")
            return content
        raise TransportError(
            f"endpoint failed after {1 + self.max_retries} attempts: {last_error}"
        )

    @staticmethod
    def _parse_content(content: str) -> object:
        try:
            return json.loads(content)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"model output is not valid JSON: {exc.msg}", payload=content) from exc

    def get_cultural_cue(self, query_en: str, query_id: str) -> CulturalCue:
        """Classify one English query's cultural home language."""
        cached = self._cached(query_id, KIND_CULTURAL)
        if cached is not None:
            return CulturalCue.from_payload(cached)
        self._require_endpoint(query_id, KIND_CULTURAL)
        content = self._chat(CULTURAL_SYSTEM_PROMPT, CULTURAL_USER_TEMPLATE.format(query_en=query_en))
        cue = CulturalCue.from_payload(self._parse_content(content))
        self._store(query_id, KIND_CULTURAL, cue.to_payload())
        return cue

    def get_bundle(self, q_en: str, q_orig: str, query_lang: str, cue: CulturalCue, *, query_id: str) -> CueBundle:
        """Fetch title/alias anchors and the disambiguation hint."""
        cached = self._cached(query_id, KIND_BUNDLE)
        if cached is not None:
            return CueBundle.from_payload(cached)
        self._require_endpoint(query_id, KIND_BUNDLE)
        user = json.dumps(
            {
                "q_en": q_en,
                "q_orig": q_orig,
                "query_lang": query_lang,
                "country_or_region": cue.country_or_region,
                "cultural_language": cue.cultural_language,
                "is_culture_specific": cue.is_culture_specific,
                "confidence": cue.confidence,
            },
            ensure_ascii=False,
        )
        content = self._chat(BUNDLE_SYSTEM_TEMPLATE.format(query_lang=query_lang), user)
        bundle = CueBundle.from_payload(self._parse_content(content))
        self._store(query_id, KIND_BUNDLE, bundle.to_payload())
        return bundle

    def get_translation(self, q_local: str, query_lang: str, *, query_id: str) -> str:
        """English pivot for one query; English input is the identity."""
        if query_lang == "en":
            return q_local
        cached = self._cached(query_id, KIND_TRANSLATION)
        if cached is not None:
            return cached["translation"]
        self._require_endpoint(query_id, KIND_TRANSLATION)
        if query_lang not in LANGUAGE_NAMES:
            raise DataError(f"no language name known for {query_lang!r}")
        lang_name = LANGUAGE_NAMES[query_lang]
        content = self._chat(
            TRANSLATION_SYSTEM_TEMPLATE.format(lang_name=lang_name),
            TRANSLATION_USER_TEMPLATE.format(lang_name=lang_name, query=q_local),
        )
        payload = validate_payload(KIND_TRANSLATION, self._parse_content(content))
        self._store(query_id, KIND_TRANSLATION, payload)
        return payload["translation"]
