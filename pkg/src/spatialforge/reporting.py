"""Figure rendering for the stats and eval reports."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport, TIERS  # noqa: E402


def composition_figures(report: dict, out_dir: Union[str, Path]) -> list[Path]:
    """Bar charts of the composition report, one per axis."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for axis in ("by_mode", "by_corpus", "by_task_category", "by_input_modality"):
        data = report.get(axis) or {}
        if not data:
            continue
        labels = list(data)
        values = [data[k]["percent"] for k in labels]
        fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(labels)), 3.2))
        ax.bar(labels, values, color="#4878a8")
        ax.set_ylabel("% of samples")
        ax.set_title(axis.replace("by_", "composition by "))
        ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        path = out_dir / f"composition_{axis[3:]}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def eval_figures(report: EvalReport, out_dir: Union[str, Path]) -> list[Path]:
    """Per-category score bars and a tier-average summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    labels = sorted(report.reduced_scores)
    values = [report.reduced_scores[k] for k in labels]
    fig, ax = plt.subplots(figsize=(max(5, 0.7 * len(labels)), 3.5))
    ax.bar(labels, values, color="#6a9955")
    ax.set_ylabel("score")
    ax.set_title("reduced category scores")
    ax.tick_params(axis="x", rotation=60)
    fig.tight_layout()
    path = out_dir / "eval_categories.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    if report.tier_averages:
        fig, ax = plt.subplots(figsize=(4, 3.2))
        ax.bar(list(TIERS), [report.tier_averages.get(t, 0.0) for t in TIERS],
               color=["#7fbf7f", "#e0c068", "#d08080"])
        ax.set_ylabel("mean score")
        ax.set_title("difficulty tier averages")
        fig.tight_layout()
        path = out_dir / "eval_tiers.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
