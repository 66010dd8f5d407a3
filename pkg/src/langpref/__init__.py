"""Language-preference measurement and preference-aligned query fusion.

The package has two halves. The measurement half scores how strongly a
multilingual retriever promotes documents of each language when it
reranks (raw pair scores), then strips the part explained by structural
priors with a ridge regression, leaving a debiased preference score per
(query language, document language) pair. The construction half turns a
local-language question plus its cue material into a single fused query
whose segment repetitions follow a confidence-thresholded policy.
"""

from __future__ import annotations

from .calibrate import (
    DEFAULT_EPSILON,
    DEFAULT_LAMBDA,
    FEATURE_NAMES,
    CalibrationModel,
    FeatureVector,
    build_features,
    correlation_report,
    delp,
    delp_with_model,
    pearson,
    residualize,
    ridge_fit,
    write_correlation_report,
)
from .cueclient import (
    CACHE_KINDS,
    KIND_BUNDLE,
    KIND_CULTURAL,
    KIND_TRANSLATION,
    CueCache,
    CueClient,
    validate_payload,
)
from .delta import (
    DEFAULT_DELIMITER,
    DEFAULT_MAX_LEN,
    DEFAULT_TAU_BOOST,
    DEFAULT_TAU_HIGH,
    DEFAULT_TAU_LOW,
    CueBundle,
    CulturalCue,
    DedupResult,
    DeltaOutcome,
    FusedQuery,
    RepetitionPlan,
    Segment,
    build_segments,
    dedup_bundle,
    delta_transform,
    fuse,
    repetition_policy,
    run_delta,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    IntegrityError,
    LangprefError,
    ParseError,
    TransportError,
    ValidationError,
)
from .langmodel import (
    LANGUAGE_NAMES,
    LANGUAGES,
    CorpusStats,
    GoldProvenance,
    ProvenanceMap,
    RankedCandidate,
    RetrievalRun,
    SitelinkMap,
    build_run,
    parse_corpus_stats,
    parse_provenance,
    parse_run,
    parse_sitelinks,
    serialize_run,
    validate_lang,
    write_run,
)
from .metrics import (
    PairCellReport,
    PairScoreMatrix,
    QueryMlrs,
    RecallReport,
    char_ngram_recall,
    mlrs_for_query,
    mlrs_pair,
    mlrs_pair_detail,
    rank_gain,
    recall_at_k,
)
from .priors import (
    GoldAvailabilityReport,
    LangAvailability,
    PriorTable,
    corpus_prior,
    cultural_prior,
    exposure_prior,
    gold_availability_report,
    gold_prior,
)
from .toyretriever import Passage, ScoredDoc, ToyCorpus, ToyIndex, best_rank, index, run_search, search

__version__ = "0.1.0"

__all__ = [
    "CACHE_KINDS",
    "DEFAULT_DELIMITER",
    "DEFAULT_EPSILON",
    "DEFAULT_LAMBDA",
    "DEFAULT_MAX_LEN",
    "DEFAULT_TAU_BOOST",
    "DEFAULT_TAU_HIGH",
    "DEFAULT_TAU_LOW",
    "FEATURE_NAMES",
    "KIND_BUNDLE",
    "KIND_CULTURAL",
    "KIND_TRANSLATION",
    "LANGUAGE_NAMES",
    "LANGUAGES",
    "CalibrationModel",
    "ConfigError",
    "CorpusStats",
    "CueBundle",
    "CueCache",
    "CueClient",
    "CulturalCue",
    "DataError",
    "DedupResult",
    "DeltaOutcome",
    "DomainError",
    "FeatureVector",
    "FusedQuery",
    "GoldAvailabilityReport",
    "GoldProvenance",
    "IntegrityError",
    "LangAvailability",
    "LangprefError",
    "PairCellReport",
    "PairScoreMatrix",
    "ParseError",
    "Passage",
    "PriorTable",
    "ProvenanceMap",
    "QueryMlrs",
    "RankedCandidate",
    "RecallReport",
    "RepetitionPlan",
    "RetrievalRun",
    "ScoredDoc",
    "Segment",
    "SitelinkMap",
    "ToyCorpus",
    "ToyIndex",
    "TransportError",
    "ValidationError",
    "best_rank",
    "build_features",
    "build_run",
    "build_segments",
    "char_ngram_recall",
    "corpus_prior",
    "correlation_report",
    "cultural_prior",
    "dedup_bundle",
    "delp",
    "delp_with_model",
    "delta_transform",
    "exposure_prior",
    "fuse",
    "gold_availability_report",
    "gold_prior",
    "index",
    "mlrs_for_query",
    "mlrs_pair",
    "mlrs_pair_detail",
    "parse_corpus_stats",
    "parse_provenance",
    "parse_run",
    "parse_sitelinks",
    "pearson",
    "rank_gain",
    "recall_at_k",
    "repetition_policy",
    "residualize",
    "ridge_fit",
    "run_delta",
    "run_search",
    "search",
    "serialize_run",
    "validate_lang",
    "validate_payload",
    "write_correlation_report",
    "write_run",
]
