"""Command-line front end.

Subcommands cover each step (mlrs, recall, priors, calibrate, delp,
correlate, gold-report, fuse, toy-search) plus a `pipeline` command
that runs the whole measurement end to end on a directory of inputs and
writes a hash manifest. Settings come from a flat key=value config file
with flag overrides; exit codes are 0 (ok), 2 (config), 3 (data),
4 (transport).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .calibrate import (
    DEFAULT_EPSILON,
    DEFAULT_LAMBDA,
    correlation_report,
    delp_with_model,
)
from .cueclient import KIND_CULTURAL, CueCache, CueClient
from .delta import (
    DEFAULT_DELIMITER,
    DEFAULT_MAX_LEN,
    DEFAULT_TAU_BOOST,
    DEFAULT_TAU_HIGH,
    DEFAULT_TAU_LOW,
    CueBundle,
    CulturalCue,
    run_delta,
)
from .errors import ConfigError, DataError, LangprefError, ParseError
from .langmodel import (
    LANGUAGES,
    RetrievalRun,
    parse_corpus_stats,
    parse_provenance,
    parse_run,
    parse_sitelinks,
    serialize_run,
    validate_lang,
)
from .metrics import PairScoreMatrix, mlrs_pair_detail, recall_at_k
from .priors import (
    PriorTable,
    corpus_prior,
    cultural_prior,
    exposure_prior,
    gold_availability_report,
    gold_prior,
)
from .toyretriever import ToyCorpus, index, run_search

DEFAULT_DEPTH = 50

FILE_FORMATS_HELP = """\
file formats (all JSONL unless noted):
  run file          {"query_id": str, "doc_id": str, "rank": int >= 1,
                     "score": float, "doc_lang": str, "wpid": str?}
                    ranks contiguous from 1 per query; one line per candidate.
  gold provenance   {"query_id": str, "gold_wpids": [str, ...]}
                    empty lists are rejected (counted, not fatal).
  sitelinks         {"wpid": str, "langs": [str, ...]}  every entry includes "en".
  corpus stats      {"lang": str, "passage_count": int,
                     "median_passage_len": float, "mean_passage_len": float?}
  cue cache         {"key": {"query_id": str, "kind": "cultural"|"bundle"|"translation"},
                     "payload": {...}}  append-only; the last entry for a key wins.
  toy corpus        {"doc_id": str, "lang": str, "text": str, "wpid": str?}
  toy queries       {"query_id": str, "text": str}
  fuse batch input  {"query_id": str, "q_local": str, "lang": str, "q_glob": str,
                     "cue": {...}, "bundle": {...}}
  fuse batch output {"query_id": str, "fused": str, "plan": {...}}
  fuse queries      {"query_id": str, "lang": str, "q_local": str}
                    (pipeline fuse stage; pivots and cues come from the cue cache)
  priors / scores / delp / correlation / manifest: single JSON documents.

config file: flat key=value lines, '#' comments. Keys: lambda, epsilon,
tau_low, tau_high, tau_boost, max_len, depth, delimiter, languages,
allow_extra_langs, encoder_id, endpoint, model, api_key_env, figures,
free_intercept, regress_same_lang, global_normalizer, length_stat.
Quote values to keep whitespace (delimiter=" | ").

pipeline input directory layout:
  runs/init_<lang>.jsonl     initial rankings per query language
  runs/rerank_<lang>.jsonl   reranked versions of the same pools
  gold.jsonl  sitelinks.jsonl  corpus_stats.jsonl  cues.jsonl  queries.jsonl
"""


@dataclass(frozen=True)
class Config:
    """Resolved settings shared by all subcommands."""

    lam: float = DEFAULT_LAMBDA
    epsilon: float = DEFAULT_EPSILON
    tau_low: float = DEFAULT_TAU_LOW
    tau_high: float = DEFAULT_TAU_HIGH
    tau_boost: float = DEFAULT_TAU_BOOST
    max_len: int = DEFAULT_MAX_LEN
    depth: int = DEFAULT_DEPTH
    delimiter: str = DEFAULT_DELIMITER
    languages: tuple[str, ...] = LANGUAGES
    allow_extra_langs: bool = False
    encoder_id: str = "toy-3gram"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "LANGPREF_API_KEY"
    figures: bool = False
    free_intercept: bool = False
    regress_same_lang: bool = False
    global_normalizer: bool = False
    length_stat: str = "median"

    def validate(self) -> Config:
        for name in ("tau_low", "tau_high", "tau_boost"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not self.tau_low < self.tau_high:
            raise ConfigError(f"tau_low must be < tau_high, got {self.tau_low} >= {self.tau_high}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.delimiter:
            raise ConfigError("delimiter must be non-empty")
        if not self.languages:
            raise ConfigError("languages must be non-empty")
        if len(set(self.languages)) != len(self.languages):
            raise ConfigError("languages contains duplicates")
        for code in self.languages:
            try:
                validate_lang(code, allow_extra=self.allow_extra_langs)
            except DataError as exc:
                raise ConfigError(str(exc)) from exc
        if not self.encoder_id:
            raise ConfigError("encoder_id must be non-empty")
        if self.length_stat not in ("median", "mean"):
            raise ConfigError(f"length_stat must be 'median' or 'mean', got {self.length_stat!r}")
        return self

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "tau_low": self.tau_low,
            "tau_high": self.tau_high,
            "tau_boost": self.tau_boost,
            "max_len": self.max_len,
            "depth": self.depth,
            "delimiter": self.delimiter,
            "languages": list(self.languages),
            "allow_extra_langs": self.allow_extra_langs,
            "encoder_id": self.encoder_id,
            "endpoint": self.endpoint,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "figures": self.figures,
            "free_intercept": self.free_intercept,
            "regress_same_lang": self.regress_same_lang,
            "global_normalizer": self.global_normalizer,
            "length_stat": self.length_stat,
        }


_CONFIG_KEYS = {
    "lambda": ("lam", float),
    "epsilon": ("epsilon", float),
    "tau_low": ("tau_low", float),
    "tau_high": ("tau_high", float),
    "tau_boost": ("tau_boost", float),
    "max_len": ("max_len", int),
    "depth": ("depth", int),
    "delimiter": ("delimiter", str),
    "languages": ("languages", "langs"),
    "allow_extra_langs": ("allow_extra_langs", bool),
    "encoder_id": ("encoder_id", str),
    "endpoint": ("endpoint", "optstr"),
    "model": ("model", "optstr"),
    "api_key_env": ("api_key_env", str),
    "figures": ("figures", bool),
    "free_intercept": ("free_intercept", bool),
    "regress_same_lang": ("regress_same_lang", bool),
    "global_normalizer": ("global_normalizer", bool),
    "length_stat": ("length_stat", str),
}


def _coerce(key: str, kind, raw: str):
    if kind is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    if kind is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "langs":
        codes = tuple(code for code in raw.replace(",", " ").split() if code)
        if not codes:
            raise ConfigError(f"{key}: expected language codes, got {raw!r}")
        return codes
    if kind == "optstr":
        stripped = raw.strip()
        return None if stripped in ("", "none") else stripped
    return raw


def parse_config_file(path: str | Path) -> dict:
    """Read flat key=value lines into Config field overrides."""
    overrides: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        value = value.strip()
        if len(value) >= 2 and value.startswith('"') and value.endswith('"'):
            value = value[1:-1]
        attr, kind = _CONFIG_KEYS[key]
        overrides[attr] = _coerce(key, kind, value)
    return overrides


def load_config(args: argparse.Namespace) -> Config:
    """File settings first, then any flag overrides, then validation."""
    overrides: dict = {}
    if getattr(args, "config", None):
        overrides.update(parse_config_file(args.config))
    for field_info in fields(Config):
        value = getattr(args, field_info.name, None)
        if value is not None:
            overrides[field_info.name] = (
                tuple(value) if field_info.name == "languages" else value
            )
    return Config(**overrides).validate()


def _write_json(obj: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _emit_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _lang_from_stem(stem: str) -> str | None:
    # Run files follow <stage>_<lang>.jsonl; anything else needs --query-lang.
    if "_" in stem:
        tail = stem.rsplit("_", 1)[1]
        if len(tail) == 2 and tail.isascii() and tail.isalpha() and tail.islower():
            return tail
    return None


def _parse_run_with_lang(path: Path, cfg: Config, override: str | None = None) -> RetrievalRun:
    lang = override if override is not None else _lang_from_stem(path.stem)
    return parse_run(
        path,
        expected_depth=cfg.depth,
        query_lang=lang,
        allow_extra_langs=cfg.allow_extra_langs,
    )


def _discover_runs(runs_dir: Path, prefix: str, cfg: Config) -> dict[str, RetrievalRun]:
    """Load <prefix>_<lang>.jsonl files keyed by query language."""
    if not runs_dir.is_dir():
        raise DataError(f"run directory {runs_dir} does not exist")
    out: dict[str, RetrievalRun] = {}
    for path in sorted(runs_dir.glob(f"{prefix}_*.jsonl")):
        lang = _lang_from_stem(path.stem)
        if lang is None:
            raise DataError(f"cannot infer a query language from {path.name!r}")
        out[lang] = _parse_run_with_lang(path, cfg, override=lang)
    return out


# ---------------------------------------------------------------- subcommands


def cmd_mlrs(args: argparse.Namespace, cfg: Config) -> int:
    init_run = _parse_run_with_lang(Path(args.init), cfg, override=args.query_lang)
    rerank_run = _parse_run_with_lang(Path(args.rerank), cfg, override=args.query_lang)
    validate_lang(args.doc_lang, allow_extra=cfg.allow_extra_langs)
    cell = mlrs_pair_detail(init_run, rerank_run, args.doc_lang, global_normalizer=cfg.global_normalizer)
    _emit_json(
        {
            "doc_lang": args.doc_lang,
            "query_lang": init_run.query_lang,
            "score": cell.score,
            "n_queries": cell.n_queries,
            "zero_normalizer_queries": cell.zero_normalizer_queries,
            "zero_target_doc_queries": cell.zero_target_doc_queries,
            "global_normalizer": cfg.global_normalizer,
        },
        args.out,
    )
    return 0


def cmd_recall(args: argparse.Namespace, cfg: Config) -> int:
    run = _parse_run_with_lang(Path(args.run), cfg, override=args.query_lang)
    provenance = parse_provenance(args.gold)
    sitelinks = parse_sitelinks(args.sitelinks, allow_extra_langs=cfg.allow_extra_langs) if args.sitelinks else None
    report = recall_at_k(run, provenance.entries, args.k, sitelinks=sitelinks)
    _emit_json(
        {
            "k": args.k,
            "recall": report.value,
            "evaluated": report.evaluated,
            "excluded_no_gold": report.excluded_no_gold,
        },
        args.out,
    )
    return 0


def _build_prior_table(
    runs_dir: Path,
    gold_path: Path,
    sitelinks_path: Path,
    cues_path: Path,
    corpus_path: Path,
    cfg: Config,
) -> PriorTable:
    init_runs = _discover_runs(runs_dir, "init", cfg)
    if not init_runs:
        raise DataError(f"no init_<lang>.jsonl run files in {runs_dir}")
    p_ret = exposure_prior(init_runs.values(), depth=cfg.depth, languages=cfg.languages)
    provenance = parse_provenance(gold_path)
    sitelinks = parse_sitelinks(sitelinks_path, allow_extra_langs=cfg.allow_extra_langs)
    queries_by_lang = {lang: set(run.queries) for lang, run in init_runs.items()}
    p_gold = gold_prior(queries_by_lang, provenance, sitelinks, languages=cfg.languages)
    cache = CueCache(cues_path)
    cues = [
        CulturalCue.from_payload(payload)
        for (_, kind), payload in sorted(cache.items())
        if kind == KIND_CULTURAL
    ]
    p_cult = cultural_prior(cues, languages=cfg.languages)
    stats = parse_corpus_stats(corpus_path, allow_extra_langs=cfg.allow_extra_langs)
    p_db, passage_len = corpus_prior(stats, length_stat=cfg.length_stat)
    return PriorTable(p_ret=p_ret, p_gold=p_gold, p_cult=p_cult, p_db=p_db, passage_len=passage_len)


def cmd_priors(args: argparse.Namespace, cfg: Config) -> int:
    table = _build_prior_table(
        Path(args.runs), Path(args.gold), Path(args.sitelinks), Path(args.cues), Path(args.corpus), cfg
    )
    table.write(args.out)
    return 0


def _build_mlrs_matrix(runs_dir: Path, cfg: Config) -> PairScoreMatrix:
    init_runs = _discover_runs(runs_dir, "init", cfg)
    rerank_runs = _discover_runs(runs_dir, "rerank", cfg)
    paired = sorted(init_runs.keys() & rerank_runs.keys())
    if not paired:
        raise DataError(f"no matching init/rerank run pairs in {runs_dir}")
    doc_langs: set[str] = set()
    for lang in paired:
        for cands in init_runs[lang].queries.values():
            doc_langs.update(c.doc_lang for c in cands)
    cells: dict[tuple[str, str], float] = {}
    same_lang: dict[str, float] = {}
    for query_lang in paired:
        for doc_lang in sorted(doc_langs):
            cell = mlrs_pair_detail(
                init_runs[query_lang],
                rerank_runs[query_lang],
                doc_lang,
                global_normalizer=cfg.global_normalizer,
            )
            if doc_lang == query_lang:
                same_lang[query_lang] = cell.score
            else:
                cells[(query_lang, doc_lang)] = cell.score
    return PairScoreMatrix(encoder_id=cfg.encoder_id, kind="raw_mlrs", cells=cells, same_lang=same_lang)


def _load_raw_matrix(path: str | Path) -> PairScoreMatrix:
    matrix = PairScoreMatrix.read(path)
    if matrix.kind != "raw_mlrs":
        raise DataError(f"{path}: expected a raw_mlrs matrix, got kind {matrix.kind!r}")
    return matrix


def _load_delp_matrix(path: str | Path) -> PairScoreMatrix:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if "delp" in obj and isinstance(obj["delp"], dict):
        # Combined calibrate artifact: {"model": ..., "residuals": ..., "delp": ...}
        return PairScoreMatrix.from_json_dict(obj["delp"])
    return PairScoreMatrix.from_json_dict(obj)


def _calibrate_artifact(scores: PairScoreMatrix, priors: PriorTable, cfg: Config, *, include_same_lang: bool) -> dict:
    matrix, model = delp_with_model(
        scores,
        priors,
        cfg.lam,
        cfg.epsilon,
        include_same_lang=include_same_lang,
        regress_same_lang=cfg.regress_same_lang,
        free_intercept=cfg.free_intercept,
    )
    residuals: dict[str, dict[str, float]] = {}
    for (query_lang, doc_lang) in model.pairs:
        value = matrix.value(query_lang, doc_lang) - model.mu
        residuals.setdefault(query_lang, {})[doc_lang] = value
    return {
        "model": model.to_json_dict(),
        "residuals": {q: dict(sorted(row.items())) for q, row in sorted(residuals.items())},
        "delp": matrix.to_json_dict(),
    }


def cmd_calibrate(args: argparse.Namespace, cfg: Config) -> int:
    scores = _load_raw_matrix(args.scores)
    priors = PriorTable.read(args.priors)
    artifact = _calibrate_artifact(scores, priors, cfg, include_same_lang=not args.exclude_same_lang)
    _write_json(artifact, args.out)
    return 0


def cmd_delp(args: argparse.Namespace, cfg: Config) -> int:
    scores = _load_raw_matrix(args.scores)
    priors = PriorTable.read(args.priors)
    matrix, _ = delp_with_model(
        scores,
        priors,
        cfg.lam,
        cfg.epsilon,
        include_same_lang=not args.exclude_same_lang,
        regress_same_lang=cfg.regress_same_lang,
        free_intercept=cfg.free_intercept,
    )
    matrix.write(args.out)
    return 0


def cmd_correlate(args: argparse.Namespace, cfg: Config) -> int:
    raw = _load_raw_matrix(args.raw)
    delp_matrix = _load_delp_matrix(args.delp)
    priors = PriorTable.read(args.priors)
    report = correlation_report(raw, delp_matrix, priors, epsilon=cfg.epsilon)
    _emit_json(report, args.out)
    if args.csv:
        from .report import write_correlation_csv

        write_correlation_csv(report, args.csv)
    if args.figures_dir:
        from .report import render_matrix_heatmap

        figures_dir = Path(args.figures_dir)
        figures_dir.mkdir(parents=True, exist_ok=True)
        render_matrix_heatmap(raw, figures_dir / "raw_heatmap.png")
        render_matrix_heatmap(delp_matrix, figures_dir / "delp_heatmap.png")
    return 0


def cmd_gold_report(args: argparse.Namespace, cfg: Config) -> int:
    provenance = parse_provenance(args.gold)
    sitelinks = parse_sitelinks(args.sitelinks, allow_extra_langs=cfg.allow_extra_langs)
    report = gold_availability_report(provenance, sitelinks, cfg.languages)
    _emit_json(report.to_json_dict(), args.out)
    if args.figure:
        from .report import render_availability_bars

        render_availability_bars(report, args.figure)
    return 0


def _load_payload_file(path: str | Path) -> object:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", path=str(path)) from exc


def _fuse_one(query_id: str, q_local: str, lang: str, q_glob: str, cue_payload: object, bundle_payload: object, cfg: Config) -> dict:
    cue = CulturalCue.from_payload(cue_payload)
    bundle = CueBundle.from_payload(bundle_payload)
    outcome = run_delta(
        q_local,
        lang,
        cue,
        bundle,
        q_glob,
        tau_low=cfg.tau_low,
        tau_high=cfg.tau_high,
        tau_boost=cfg.tau_boost,
        delimiter=cfg.delimiter,
        max_len=cfg.max_len,
    )
    return {"query_id": query_id, "fused": outcome.fused.text, "plan": outcome.plan.to_json_dict()}


def cmd_fuse(args: argparse.Namespace, cfg: Config) -> int:
    if args.batch:
        out_lines: list[str] = []
        for lineno, raw in enumerate(Path(args.batch).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path=str(args.batch), line=lineno) from exc
            for key in ("query_id", "q_local", "lang", "q_glob", "cue", "bundle"):
                if key not in obj:
                    raise ParseError(f"missing required field {key!r}", path=str(args.batch), line=lineno)
            for key in ("q_local", "lang", "q_glob"):
                if not isinstance(obj[key], str):
                    raise ParseError(f"field {key!r} must be a string", path=str(args.batch), line=lineno)
            record = _fuse_one(
                str(obj["query_id"]), obj["q_local"], obj["lang"], obj["q_glob"], obj["cue"], obj["bundle"], cfg
            )
            out_lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
        text = "\n".join(out_lines) + ("\n" if out_lines else "")
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    if not args.query or not args.lang or not args.cue or not args.bundle:
        raise ConfigError("fuse needs either --batch or all of --query/--lang/--cue/--bundle")
    q_glob = args.glob
    if q_glob is None:
        if args.lang != "en":
            raise ConfigError("--glob is required for non-English queries")
        q_glob = args.query
    record = _fuse_one(
        "cli",
        args.query,
        args.lang,
        q_glob,
        _load_payload_file(args.cue),
        _load_payload_file(args.bundle),
        cfg,
    )
    print(record["fused"])
    return 0


def cmd_toy_search(args: argparse.Namespace, cfg: Config) -> int:
    corpus = ToyCorpus.from_jsonl(args.corpus)
    idx = index(corpus)
    queries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(args.queries).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path=str(args.queries), line=lineno) from exc
        if "query_id" not in obj or "text" not in obj:
            raise ParseError("expected query_id and text fields", path=str(args.queries), line=lineno)
        if not isinstance(obj["text"], str):
            raise ParseError("text must be a string", path=str(args.queries), line=lineno)
        query_id = str(obj["query_id"])
        if query_id in queries:
            raise ParseError(f"duplicate query_id {query_id!r}", path=str(args.queries), line=lineno)
        queries[query_id] = obj["text"]
    run = run_search(
        idx,
        queries,
        args.k,
        run_id=Path(args.out).stem if args.out else "toy",
        query_lang=args.query_lang,
        include_zero=not args.drop_zero_scores,
    )
    text = serialize_run(run)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ pipeline

PIPELINE_STAGES = ("priors", "mlrs", "calibrate", "correlate", "gold-report", "fuse")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _pipeline_fuse(inputs: Path, out_path: Path, cfg: Config) -> None:
    queries_path = inputs / "queries.jsonl"
    if not queries_path.exists():
        raise DataError(f"missing fuse input {queries_path}")
    records: dict[str, tuple[str, str]] = {}
    for lineno, raw in enumerate(queries_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", path=str(queries_path), line=lineno) from exc
        for key in ("query_id", "lang", "q_local"):
            if key not in obj:
                raise ParseError(f"missing required field {key!r}", path=str(queries_path), line=lineno)
        if not isinstance(obj["lang"], str) or not isinstance(obj["q_local"], str):
            raise ParseError("lang and q_local must be strings", path=str(queries_path), line=lineno)
        query_id = str(obj["query_id"])
        if query_id in records:
            raise ParseError(f"duplicate query_id {query_id!r}", path=str(queries_path), line=lineno)
        validate_lang(obj["lang"], allow_extra=cfg.allow_extra_langs)
        records[query_id] = (obj["lang"], obj["q_local"])
    if not records:
        raise DataError(f"{queries_path} contains no queries")
    cache = CueCache(inputs / "cues.jsonl")
    with CueClient(
        cache,
        endpoint=cfg.endpoint,
        api_key=cfg.api_key(),
        model=cfg.model,
    ) as client:
        lines = []
        for query_id in sorted(records):
            lang, q_local = records[query_id]
            q_glob = client.get_translation(q_local, lang, query_id=query_id)
            cue = client.get_cultural_cue(q_glob, query_id)
            bundle = client.get_bundle(q_glob, q_local, lang, cue, query_id=query_id)
            outcome = run_delta(
                q_local,
                lang,
                cue,
                bundle,
                q_glob,
                tau_low=cfg.tau_low,
                tau_high=cfg.tau_high,
                tau_boost=cfg.tau_boost,
                delimiter=cfg.delimiter,
                max_len=cfg.max_len,
            )
            lines.append(
                json.dumps(
                    {"query_id": query_id, "fused": outcome.fused.text, "plan": outcome.plan.to_json_dict()},
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_pipeline(inputs: Path, out_dir: Path, cfg: Config) -> dict:
    """Execute every stage, hash every artifact, write the manifest.

    The manifest is deterministic for fixed inputs and config: relative
    paths, content hashes, no timestamps. A stage failure still writes
    a manifest naming the failed stage and flagging the partial outputs
    as stale, then re-raises the error.
    """
    inputs = Path(inputs)
    out_dir = Path(out_dir)
    if not inputs.is_dir():
        raise DataError(f"input directory {inputs} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)

    input_files = sorted(p for p in inputs.rglob("*") if p.is_file())
    artifacts: list[Path] = []
    stages_done: list[str] = []

    def manifest_dict(status: str, failed_stage: str | None = None) -> dict:
        entries = []
        for path in sorted(artifacts, key=lambda p: p.relative_to(out_dir).as_posix()):
            entry = {
                "name": path.relative_to(out_dir).as_posix(),
                "sha256": _sha256(path),
                "bytes": path.stat().st_size,
            }
            if status != "ok":
                entry["stale"] = True
            entries.append(entry)
        doc = {
            "status": status,
            "stages": list(PIPELINE_STAGES),
            "stages_completed": list(stages_done),
            "artifacts": entries,
            "inputs": [
                {"name": p.relative_to(inputs).as_posix(), "sha256": _sha256(p)} for p in input_files
            ],
            "config": cfg.to_json_dict(),
        }
        if failed_stage is not None:
            doc["failed_stage"] = failed_stage
        return doc

    table: PriorTable | None = None
    matrix: PairScoreMatrix | None = None
    delp_matrix: PairScoreMatrix | None = None

    stage = PIPELINE_STAGES[0]
    try:
        stage = "priors"
        table = _build_prior_table(
            inputs / "runs",
            inputs / "gold.jsonl",
            inputs / "sitelinks.jsonl",
            inputs / "cues.jsonl",
            inputs / "corpus_stats.jsonl",
            cfg,
        )
        table.write(out_dir / "priors.json")
        artifacts.append(out_dir / "priors.json")
        stages_done.append(stage)

        stage = "mlrs"
        matrix = _build_mlrs_matrix(inputs / "runs", cfg)
        matrix.write(out_dir / "mlrs.json")
        artifacts.append(out_dir / "mlrs.json")
        stages_done.append(stage)

        stage = "calibrate"
        artifact = _calibrate_artifact(matrix, table, cfg, include_same_lang=True)
        delp_matrix = PairScoreMatrix.from_json_dict(artifact["delp"])
        artifacts.append(_write_json(artifact, out_dir / "delp.json"))
        stages_done.append(stage)

        stage = "correlate"
        report = correlation_report(matrix, delp_matrix, table, epsilon=cfg.epsilon)
        artifacts.append(_write_json(report, out_dir / "correlation.json"))
        if cfg.figures:
            from .report import render_matrix_heatmap, write_correlation_csv

            write_correlation_csv(report, out_dir / "correlation.csv")
            artifacts.append(out_dir / "correlation.csv")
            artifacts.append(render_matrix_heatmap(matrix, out_dir / "raw_heatmap.png"))
            artifacts.append(render_matrix_heatmap(delp_matrix, out_dir / "delp_heatmap.png"))
        stages_done.append(stage)

        stage = "gold-report"
        provenance = parse_provenance(inputs / "gold.jsonl")
        sitelinks = parse_sitelinks(inputs / "sitelinks.jsonl", allow_extra_langs=cfg.allow_extra_langs)
        availability = gold_availability_report(provenance, sitelinks, cfg.languages)
        availability.write(out_dir / "gold_report.json")
        artifacts.append(out_dir / "gold_report.json")
        if cfg.figures:
            from .report import render_availability_bars

            artifacts.append(render_availability_bars(availability, out_dir / "availability.png"))
        stages_done.append(stage)

        stage = "fuse"
        _pipeline_fuse(inputs, out_dir / "fused.jsonl", cfg)
        artifacts.append(out_dir / "fused.jsonl")
        stages_done.append(stage)
    except LangprefError as exc:
        _write_json(manifest_dict("failed", failed_stage=stage), out_dir / "manifest.json")
        raise type(exc)(f"pipeline stage {stage!r} failed: {exc}") from exc

    manifest = manifest_dict("ok")
    _write_json(manifest, out_dir / "manifest.json")
    return manifest


def cmd_pipeline(args: argparse.Namespace, cfg: Config) -> int:
    run_pipeline(Path(args.inputs), Path(args.out), cfg)
    return 0


# ------------------------------------------------------------------- parsing


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    group.add_argument("--config", metavar="FILE", help="flat key=value config file")
    group.add_argument("--lambda", dest="lam", type=float, help="ridge strength (default 1.0)")
    group.add_argument("--epsilon", type=float, help="log offset (default 1e-6)")
    group.add_argument("--tau-low", dest="tau_low", type=float, help="first confidence threshold (default 0.6)")
    group.add_argument("--tau-high", dest="tau_high", type=float, help="second confidence threshold (default 0.85)")
    group.add_argument("--tau-boost", dest="tau_boost", type=float, help="anchor boost threshold (default 0.7)")
    group.add_argument("--max-len", dest="max_len", type=int, help="fused query length cap (default 900)")
    group.add_argument("--depth", type=int, help="candidate depth (default 50)")
    group.add_argument("--delimiter", help='segment delimiter (default " | ")')
    group.add_argument(
        "--languages",
        nargs="+",
        metavar="LANG",
        help="language set (default: the 13 supported codes)",
    )
    group.add_argument(
        "--allow-extra-langs",
        dest="allow_extra_langs",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="accept well-formed codes outside the supported set",
    )
    group.add_argument("--encoder-id", dest="encoder_id", help="encoder label for matrices and models")
    group.add_argument("--endpoint", help="chat-completions endpoint URL (omit for cache-only)")
    group.add_argument("--model", help="model id for the endpoint")
    group.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
    group.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="render PNG figures in the pipeline",
    )
    group.add_argument(
        "--free-intercept",
        dest="free_intercept",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="exempt the intercept from the ridge penalty",
    )
    group.add_argument(
        "--regress-same-lang",
        dest="regress_same_lang",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="fit a coefficient for the same-language indicator too",
    )
    group.add_argument(
        "--global-normalizer",
        dest="global_normalizer",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="normalize promotion scores by the whole pool, not the target language",
    )
    group.add_argument("--length-stat", dest="length_stat", choices=["median", "mean"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langpref",
        description=(
            "Measure debiased language preference of multilingual retrievers "
            "and build preference-aligned fused queries."
        ),
        epilog=FILE_FORMATS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str, func) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name,
            help=help_text,
            description=help_text,
            epilog=FILE_FORMATS_HELP,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.set_defaults(func=func)
        _add_config_flags(p)
        return p

    p = add("mlrs", "score one (init, rerank) run pair for one document language", cmd_mlrs)
    p.add_argument("--init", required=True, help="initial-ranking run file")
    p.add_argument("--rerank", required=True, help="reranked run file over the same pools")
    p.add_argument("--doc-lang", dest="doc_lang", required=True, help="target document language")
    p.add_argument("--query-lang", dest="query_lang", help="query language (default: from the filename)")
    p.add_argument("-o", "--out", help="write the JSON cell report here instead of stdout")

    p = add("recall", "recall@k of a run against gold provenance", cmd_recall)
    p.add_argument("--run", required=True, help="run file with wpid fields")
    p.add_argument("--gold", required=True, help="gold provenance JSONL")
    p.add_argument("--sitelinks", help="sitelink map JSONL (filters unmappable gold)")
    p.add_argument("--query-lang", dest="query_lang")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("-o", "--out")

    p = add("priors", "estimate all five structural priors", cmd_priors)
    p.add_argument("--runs", required=True, help="directory of init_<lang>.jsonl run files")
    p.add_argument("--gold", required=True)
    p.add_argument("--sitelinks", required=True)
    p.add_argument("--cues", required=True, help="cue cache JSONL (cultural entries feed p_cult)")
    p.add_argument("--corpus", required=True, help="corpus stats JSONL")
    p.add_argument("-o", "--out", required=True)

    p = add("calibrate", "fit the prior regression and write model, residuals, and debiased scores", cmd_calibrate)
    p.add_argument("--scores", required=True, help="raw pair-score matrix JSON")
    p.add_argument("--priors", required=True, help="prior table JSON")
    p.add_argument("--exclude-same-lang", dest="exclude_same_lang", action="store_true")
    p.add_argument("-o", "--out", required=True)

    p = add("delp", "write just the debiased score matrix", cmd_delp)
    p.add_argument("--scores", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--exclude-same-lang", dest="exclude_same_lang", action="store_true")
    p.add_argument("-o", "--out", required=True)

    p = add("correlate", "per-prior correlations before and after calibration", cmd_correlate)
    p.add_argument("--raw", required=True, help="raw pair-score matrix JSON")
    p.add_argument("--delp", required=True, help="debiased matrix JSON (bare or calibrate artifact)")
    p.add_argument("--priors", required=True)
    p.add_argument("-o", "--out", help="write JSON here instead of stdout")
    p.add_argument("--csv", help="also write a prior,raw,delp CSV table")
    p.add_argument("--figures-dir", dest="figures_dir", help="render heatmap PNGs into this directory")

    p = add("gold-report", "question-by-language gold availability accounting", cmd_gold_report)
    p.add_argument("--gold", required=True)
    p.add_argument("--sitelinks", required=True)
    p.add_argument("-o", "--out")
    p.add_argument("--figure", help="render the availability bar chart PNG here")

    p = add("fuse", "build one fused query (or a batch) from cue material", cmd_fuse)
    p.add_argument("--query", help="the original (local-language) query")
    p.add_argument("--lang", help="query language code")
    p.add_argument("--cue", help="cultural cue payload JSON file")
    p.add_argument("--bundle", help="cue bundle payload JSON file")
    p.add_argument("--glob", help="English pivot (defaults to --query for en)")
    p.add_argument("--batch", help="batch JSONL input; see file formats")
    p.add_argument("-o", "--out", help="batch output JSONL (default stdout)")

    p = add("toy-search", "run the trigram toy retriever over a corpus", cmd_toy_search)
    p.add_argument("--corpus", required=True, help="toy corpus JSONL")
    p.add_argument("--queries", required=True, help="toy queries JSONL")
    p.add_argument("--k", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--query-lang", dest="query_lang")
    p.add_argument("--drop-zero-scores", dest="drop_zero_scores", action="store_true")
    p.add_argument("-o", "--out", help="run file to write (default stdout)")

    p = add("pipeline", "run priors, mlrs, calibrate, correlate, gold-report, and fuse end to end", cmd_pipeline)
    p.add_argument("--inputs", required=True, help="input directory; see layout below")
    p.add_argument("--out", required=True, help="output directory for artifacts and manifest")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except LangprefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
