"""Ridge calibration: regress structural priors out of raw scores.

The raw promotion score of a language pair partly reflects structure
(exposure, corpus size, passage length, gold availability, cultural
skew) rather than genuine preference. A small ridge regression predicts
the raw score from log-transformed priors; what survives as residual,
re-centered by the global mean so the scale stays readable, is the
debiased preference. The same-language indicator rides along in the
feature vector so downstream analysis can see it, but by default it is
not regressed: removing it would also remove exactly the monolingual
preference the measurement exists to reveal.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DataError, DomainError, IntegrityError
from .metrics import PairScoreMatrix
from .priors import PriorTable

DEFAULT_LAMBDA = 1.0
DEFAULT_EPSILON = 1e-6

FEATURE_NAMES = (
    "intercept",
    "log_p_ret",
    "log_p_db",
    "log_passage_len",
    "log_p_gold",
    "log_p_cult",
    "same_lang",
)
# Correlation analysis covers the probability priors, in their regression form.
REPORT_PRIORS = ("p_ret", "p_gold", "p_cult")
_NORMAL_EQ_RTOL = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    """The fixed 7-component covariate vector for one language pair."""

    components: tuple[float, ...]
    epsilon: float

    def __post_init__(self) -> None:
        if len(self.components) != len(FEATURE_NAMES):
            raise DataError(f"expected {len(FEATURE_NAMES)} components, got {len(self.components)}")
        if self.components[0] != 1.0:
            raise DataError(f"component 0 must be the intercept 1, got {self.components[0]}")
        if self.components[6] not in (0.0, 1.0):
            raise DataError(f"component 6 must be a 0/1 indicator, got {self.components[6]}")
        if not all(math.isfinite(c) for c in self.components):
            raise DataError(f"non-finite feature component in {self.components}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=float)


def build_features(priors: PriorTable, query_lang: str, doc_lang: str, epsilon: float) -> FeatureVector:
    """Assemble the covariates for one pair; missing priors are errors."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    components = (
        1.0,
        math.log(priors.get("p_ret", query_lang, doc_lang) + epsilon),
        math.log(priors.get("p_db", query_lang, doc_lang) + epsilon),
        math.log(priors.get("passage_len", query_lang, doc_lang) + epsilon),
        math.log(priors.get("p_gold", query_lang, doc_lang) + epsilon),
        math.log(priors.get("p_cult", query_lang, doc_lang) + epsilon),
        1.0 if query_lang == doc_lang else 0.0,
    )
    return FeatureVector(components=components, epsilon=epsilon)


def ridge_fit(X: np.ndarray, y: np.ndarray, lam: float, *, free_intercept: bool = False) -> np.ndarray:
    """Closed-form ridge solution (X'X + lam*I)^-1 X'y.

    Every coefficient is regularized, the intercept included, because
    the constant column is an ordinary covariate here;
    ``free_intercept`` exempts column 0 for comparison runs. The
    symmetric system is solved by Cholesky factorization and checked
    against the normal equations to a 1e-12 relative tolerance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n, k = X.shape
    if n < 1:
        raise DataError("ridge_fit needs at least one row")
    if y.shape != (n,):
        raise DataError(f"y must have shape ({n},), got {y.shape}")
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    penalty = lam * np.eye(k)
    if free_intercept and k > 0:
        penalty[0, 0] = 0.0
    gram = X.T @ X + penalty
    rhs = X.T @ y
    try:
        factor = cho_factor(gram)
    except LinAlgError as exc:
        raise DataError(
            "normal equations are singular (rank-deficient design); use lambda > 0"
        ) from exc
    beta = cho_solve(factor, rhs)
    # One step of iterative refinement, then enforce the residual tolerance.
    residual = rhs - gram @ beta
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if float(np.max(np.abs(residual))) > _NORMAL_EQ_RTOL * scale:
        beta = beta + cho_solve(factor, residual)
        residual = rhs - gram @ beta
        if float(np.max(np.abs(residual))) > _NORMAL_EQ_RTOL * scale:
            raise DataError(
                "normal equations too ill-conditioned to satisfy the 1e-12 tolerance; use a larger lambda"
            )
    return beta


@dataclass(frozen=True)
class CalibrationModel:
    """A fitted debiasing model for one encoder."""

    encoder_id: str
    beta: tuple[float, ...]
    lam: float
    mu: float
    epsilon: float
    pairs: tuple[tuple[str, str], ...]
    free_intercept: bool = False
    regress_same_lang: bool = False

    def __post_init__(self) -> None:
        if len(self.beta) != len(FEATURE_NAMES):
            raise DataError(f"beta must have {len(FEATURE_NAMES)} coefficients, got {len(self.beta)}")

    def predict(self, features: FeatureVector) -> float:
        return float(np.dot(self.beta, features.as_array()))

    def to_json_dict(self) -> dict:
        return {
            "encoder_id": self.encoder_id,
            "feature_names": list(FEATURE_NAMES),
            "beta": list(self.beta),
            "lambda": self.lam,
            "mu": self.mu,
            "epsilon": self.epsilon,
            "pairs": [list(pair) for pair in self.pairs],
            "free_intercept": self.free_intercept,
            "regress_same_lang": self.regress_same_lang,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> CalibrationModel:
        for key in ("encoder_id", "beta", "lambda", "mu", "epsilon", "pairs"):
            if key not in obj:
                raise DataError(f"calibration model object lacks {key!r}")
        return cls(
            encoder_id=obj["encoder_id"],
            beta=tuple(float(b) for b in obj["beta"]),
            lam=float(obj["lambda"]),
            mu=float(obj["mu"]),
            epsilon=float(obj["epsilon"]),
            pairs=tuple((p[0], p[1]) for p in obj["pairs"]),
            free_intercept=bool(obj.get("free_intercept", False)),
            regress_same_lang=bool(obj.get("regress_same_lang", False)),
        )


def _design(
    scores: PairScoreMatrix,
    priors: PriorTable,
    epsilon: float,
    *,
    include_same_lang: bool,
) -> tuple[list[tuple[str, str]], np.ndarray, np.ndarray]:
    pairs = scores.pairs(include_same_lang=include_same_lang)
    if not pairs:
        raise DataError("calibration set is empty")
    X = np.stack([build_features(priors, q, d, epsilon).as_array() for q, d in pairs])
    y = np.asarray([scores.value(q, d) for q, d in pairs], dtype=float)
    return pairs, X, y


def residualize(
    scores: PairScoreMatrix,
    priors: PriorTable,
    lam: float = DEFAULT_LAMBDA,
    epsilon: float = DEFAULT_EPSILON,
    *,
    include_same_lang: bool = True,
    regress_same_lang: bool = False,
    free_intercept: bool = False,
) -> tuple[dict[tuple[str, str], float], CalibrationModel]:
    """Fit the prior regression and return per-pair residuals plus the model.

    The calibration set is every pair in the matrix (monolingual cells
    included by default), in sorted pair order. With the default
    ``regress_same_lang=False`` the indicator column is carried with a
    zero coefficient rather than fitted.
    """
    pairs, X, y = _design(scores, priors, epsilon, include_same_lang=include_same_lang)
    n_cols = X.shape[1] if regress_same_lang else X.shape[1] - 1
    fitted = ridge_fit(X[:, :n_cols], y, lam, free_intercept=free_intercept)
    beta = np.zeros(X.shape[1])
    beta[:n_cols] = fitted
    residuals = y - X @ beta
    model = CalibrationModel(
        encoder_id=scores.encoder_id,
        beta=tuple(float(b) for b in beta),
        lam=lam,
        mu=float(np.mean(y)),
        epsilon=epsilon,
        pairs=tuple(pairs),
        free_intercept=free_intercept,
        regress_same_lang=regress_same_lang,
    )
    return {pair: float(r) for pair, r in zip(pairs, residuals)}, model


def delp_with_model(
    scores: PairScoreMatrix,
    priors: PriorTable,
    lam: float = DEFAULT_LAMBDA,
    epsilon: float = DEFAULT_EPSILON,
    *,
    include_same_lang: bool = True,
    regress_same_lang: bool = False,
    free_intercept: bool = False,
) -> tuple[PairScoreMatrix, CalibrationModel]:
    """Residualize, then re-center by the global raw mean."""
    residuals, model = residualize(
        scores,
        priors,
        lam,
        epsilon,
        include_same_lang=include_same_lang,
        regress_same_lang=regress_same_lang,
        free_intercept=free_intercept,
    )
    cells: dict[tuple[str, str], float] = {}
    same_lang: dict[str, float] = {}
    for (query_lang, doc_lang), residual in residuals.items():
        value = residual + model.mu
        if query_lang == doc_lang:
            same_lang[query_lang] = value
        else:
            cells[(query_lang, doc_lang)] = value
    matrix = PairScoreMatrix(encoder_id=scores.encoder_id, kind="delp", cells=cells, same_lang=same_lang)
    return matrix, model


def delp(
    scores: PairScoreMatrix,
    priors: PriorTable,
    lam: float = DEFAULT_LAMBDA,
    epsilon: float = DEFAULT_EPSILON,
    **kwargs,
) -> PairScoreMatrix:
    return delp_with_model(scores, priors, lam, epsilon, **kwargs)[0]


def pearson(values_a: Sequence[float], values_b: Sequence[float]) -> float:
    """Sample Pearson correlation with explicit degenerate-input errors."""
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"pearson needs two equal-length 1-D sequences, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise DataError(f"pearson needs at least 2 points, got {a.size}")
    if float(np.std(a)) == 0.0 or float(np.std(b)) == 0.0:
        raise DataError("pearson is undefined for zero-variance input")
    return float(np.corrcoef(a, b)[0, 1])


def correlation_report(
    raw: PairScoreMatrix,
    delp_matrix: PairScoreMatrix,
    priors: PriorTable,
    *,
    epsilon: float = DEFAULT_EPSILON,
) -> dict:
    """Per-prior correlations before and after calibration.

    Covariates enter in the regression's own form, log(p + epsilon),
    over the shared pair set of the two matrices.
    """
    if raw.kind != "raw_mlrs":
        raise DataError(f"raw matrix has kind {raw.kind!r}, expected raw_mlrs")
    if delp_matrix.kind != "delp":
        raise DataError(f"delp matrix has kind {delp_matrix.kind!r}, expected delp")
    if raw.encoder_id != delp_matrix.encoder_id:
        raise IntegrityError(
            f"encoder mismatch: raw is {raw.encoder_id!r}, delp is {delp_matrix.encoder_id!r}"
        )
    pairs = raw.pairs()
    if pairs != delp_matrix.pairs():
        raise IntegrityError("raw and delp matrices do not share a pair set")
    raw_values = [raw.value(q, d) for q, d in pairs]
    delp_values = [delp_matrix.value(q, d) for q, d in pairs]
    by_prior: dict[str, dict[str, float]] = {}
    for name in REPORT_PRIORS:
        covariate = [math.log(priors.get(name, q, d) + epsilon) for q, d in pairs]
        by_prior[name] = {
            "raw": pearson(covariate, raw_values),
            "delp": pearson(covariate, delp_values),
        }
    return {
        "encoder_id": raw.encoder_id,
        "n_pairs": len(pairs),
        "epsilon": epsilon,
        "priors": by_prior,
    }


def write_correlation_report(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
