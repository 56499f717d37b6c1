"""Matplotlib renderings written alongside the delimited reports."""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import CohortReport

__all__ = ["save_band_cds_figure", "save_latency_figure", "save_frontier_figure"]

_STAGES = ["point_proc", "backbone", "neck", "head", "post_proc"]


def save_band_cds_figure(report: CohortReport, path: Union[str, Path]) -> Path:
    """Bar chart of aggregate CDS per range band."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = [b.band.label for b in report.bands]
    cds = [0.0 if b.aggregate is None else b.aggregate.cds for b in report.bands]
    ap = [0.0 if b.aggregate is None else b.aggregate.ap for b in report.bands]
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(labels))
    ax.bar([i - 0.2 for i in x], ap, width=0.4, label="AP", color="#7fb3d5")
    ax.bar([i + 0.2 for i in x], cds, width=0.4, label="CDS", color="#2e86c1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{report.method}: per-band accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_latency_figure(reports: Sequence[CohortReport], path: Union[str, Path]) -> Path:
    """Stacked per-stage latency means, one bar per method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports = [r for r in reports if r.latency is not None]
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(reports)), 4))
    bottoms = [0.0] * len(reports)
    for stage in _STAGES:
        values = [r.latency.stage_means.get(stage, 0.0) for r in reports]
        ax.bar([r.method for r in reports], values, bottom=bottoms, label=stage)
        bottoms = [b + v for b, v in zip(bottoms, values)]
    ax.set_ylabel("mean latency (ms)")
    ax.set_title("modeled per-stage latency")
    ax.legend(fontsize=8)
    ax.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_frontier_figure(reports: Sequence[CohortReport], path: Union[str, Path]) -> Path:
    """Accuracy-vs-latency scatter: full-range CDS against mean frame latency."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for report in reports:
        if report.latency is None or not report.bands:
            continue
        full = report.bands[-1]
        cds = 0.0 if full.aggregate is None else full.aggregate.cds
        marker = "*" if "ensemble" in report.method or "near_far" in report.method else "o"
        size = 160 if marker == "*" else 60
        ax.scatter(report.latency.mean_ms, cds, s=size, marker=marker)
        ax.annotate(report.method, (report.latency.mean_ms, cds), fontsize=7, xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("mean frame latency (ms)")
    ax.set_ylabel("full-range CDS")
    ax.set_title("accuracy-latency frontier")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
