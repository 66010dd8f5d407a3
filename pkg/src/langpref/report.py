"""Rendered outputs: score heatmaps, availability bars, correlation CSV.

Figures are rendered with the Agg backend at fixed size and dpi and
carry no timestamps, so a rerun on identical inputs produces identical
bytes; the pipeline manifest relies on that.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Mapping
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import PairScoreMatrix
from .priors import GoldAvailabilityReport

_KIND_TITLES = {"raw_mlrs": "raw promotion score", "delp": "debiased preference"}


def correlation_csv(report: Mapping) -> str:
    """Render a correlation report as a prior,raw,delp CSV table."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prior", "raw", "delp"])
    for name, row in sorted(report["priors"].items()):
        writer.writerow([name, f"{row['raw']:.6f}", f"{row['delp']:.6f}"])
    return buf.getvalue()


def write_correlation_csv(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(correlation_csv(report), encoding="utf-8")


def render_matrix_heatmap(matrix: PairScoreMatrix, out_path: str | Path) -> Path:
    """Draw the pair grid, monolingual cells on the diagonal."""
    langs = sorted({q for q, _ in matrix.cells} | {d for _, d in matrix.cells} | set(matrix.same_lang))
    n = len(langs)
    grid = np.full((n, n), np.nan)
    for i, query_lang in enumerate(langs):
        for j, doc_lang in enumerate(langs):
            try:
                grid[i, j] = matrix.value(query_lang, doc_lang)
            except Exception:
                pass  # missing cells stay blank
    fig, ax = plt.subplots(figsize=(7.5, 6.2))
    masked = np.ma.masked_invalid(grid)
    image = ax.imshow(masked, cmap="viridis", aspect="auto")
    ax.set_xticks(range(n), langs)
    ax.set_yticks(range(n), langs)
    ax.set_xlabel("document language")
    ax.set_ylabel("query language")
    ax.set_title(f"{_KIND_TITLES.get(matrix.kind, matrix.kind)}: {matrix.encoder_id}")
    if n <= 16:
        low, high = float(masked.min()), float(masked.max())
        midpoint = (low + high) / 2
        for i in range(n):
            for j in range(n):
                if not np.isnan(grid[i, j]):
                    color = "white" if grid[i, j] < midpoint else "black"
                    ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", fontsize=7, color=color)
    fig.colorbar(image, ax=ax, shrink=0.85)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_availability_bars(report: GoldAvailabilityReport, out_path: str | Path) -> Path:
    """Bar chart of per-language instance share, annotated with counts."""
    langs = list(report.query_languages)
    ratios = [report.per_lang[lang].ratio * 100 for lang in langs]
    counts = [report.per_lang[lang].instances for lang in langs]
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    bars = ax.bar(langs, ratios, color="#4878a8")
    for bar, count in zip(bars, counts):
        ax.text(
            bar.get_x() + bar.get_width() / 2,
            bar.get_height(),
            f"{count:,}",
            ha="center",
            va="bottom",
            fontsize=7,
        )
    ax.set_ylabel("share of question instances (%)")
    ax.set_xlabel("attributed language")
    ax.set_title(
        f"gold availability: {report.gold_available_questions:,} of {report.total_questions:,} questions mappable"
    )
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
