"""Benchmark scoring: mean relative accuracy, multiple-choice accuracy,
subtask dimension reduction, difficulty-tier stratification, report emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .core import AnswerSpec, Sample, UnparseableAnswer, canonicalize_answer

DEFAULT_MRA_THRESHOLDS = tuple(0.50 + 0.05 * k for k in range(10))

TIERS = ("Low", "Mid", "High")


class UnassignedCategory(KeyError):
    pass


class EmptyReport(ValueError):
    pass


class MissingPrediction(KeyError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    mra_thresholds: tuple[float, ...] = DEFAULT_MRA_THRESHOLDS
    numeric_unparseable_score: float = 0.0


def mra(pred: Optional[float], gold: float,
        thresholds: Sequence[float] = DEFAULT_MRA_THRESHOLDS) -> float:
    """Mean relative accuracy: fraction of thresholds theta with
    |pred - gold| / |gold| < 1 - theta. gold == 0 falls back to exact match."""
    if pred is None:
        return 0.0
    if gold == 0.0:
        return 1.0 if pred == 0.0 else 0.0
    rel = abs(pred - gold) / abs(gold)
    hits = sum(1 for th in thresholds if rel < 1.0 - th)
    return hits / len(thresholds)


def mc_accuracy(preds: Mapping[str, Optional[str]],
                golds: Mapping[str, str]) -> tuple[float, list[str]]:
    """Exact canonical-label match rate; missing predictions count as
    incorrect and are returned as flags."""
    if not golds:
        raise EmptyReport("no gold answers")
    missing = [sid for sid in golds if preds.get(sid) is None]
    correct = sum(1 for sid, g in golds.items() if preds.get(sid) == g)
    return correct / len(golds), missing


def reduce_dimensions(scores: Mapping[str, float],
                      pairing: Mapping[str, str]) -> dict[str, float]:
    """Average paired subtask scores into their reduced category; unpaired
    subtasks pass through under their own name."""
    groups: dict[str, list[float]] = {}
    for subtask, score in scores.items():
        key = pairing.get(subtask, subtask)
        groups.setdefault(key, []).append(score)
    return {k: sum(v) / len(v) for k, v in groups.items()}


def tier_average(category_scores: Mapping[str, float],
                 tier_map: Mapping[str, str]) -> dict[str, float]:
    """Unweighted mean of member category scores per difficulty tier."""
    members: dict[str, list[float]] = {t: [] for t in TIERS}
    for cat, score in category_scores.items():
        tier = tier_map.get(cat)
        if tier is None:
            raise UnassignedCategory(cat)
        if tier not in TIERS:
            raise UnassignedCategory(f"{cat} assigned to unknown tier {tier}")
        members[tier].append(score)
    return {t: (sum(v) / len(v) if v else 0.0) for t, v in members.items()}


@dataclass
class EvalReport:
    category_scores: dict[str, float] = field(default_factory=dict)
    reduced_scores: dict[str, float] = field(default_factory=dict)
    tier_averages: dict[str, float] = field(default_factory=dict)
    overall_per_subtask: float = 0.0
    overall_per_reduced: float = 0.0
    counts: dict[str, int] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "category_scores": self.category_scores,
            "reduced_scores": self.reduced_scores,
            "tier_averages": self.tier_averages,
            "overall": {
                "per_subtask": self.overall_per_subtask,
                "per_reduced_category": self.overall_per_reduced,
            },
            "counts": self.counts,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        return cls(
            category_scores=dict(d.get("category_scores", {})),
            reduced_scores=dict(d.get("reduced_scores", {})),
            tier_averages=dict(d.get("tier_averages", {})),
            overall_per_subtask=d.get("overall", {}).get("per_subtask", 0.0),
            overall_per_reduced=d.get("overall", {}).get("per_reduced_category", 0.0),
            counts=dict(d.get("counts", {})),
            flags=list(d.get("flags", [])),
        )


def build_report(scores: Mapping[str, float],
                 pairing: Optional[Mapping[str, str]] = None,
                 tier_map: Optional[Mapping[str, str]] = None,
                 counts: Optional[Mapping[str, int]] = None,
                 flags: Sequence[str] = ()) -> EvalReport:
    """Aggregate per-subtask scores into the report structure.

    Both overall weightings are emitted: the mean over unreduced subtasks and
    the mean over reduced categories (they differ whenever pairs exist).
    """
    if not scores:
        raise EmptyReport("no category scores")
    reduced = reduce_dimensions(scores, pairing or {})
    tiers = tier_average(reduced, tier_map) if tier_map else {}
    return EvalReport(
        category_scores=dict(scores),
        reduced_scores=reduced,
        tier_averages=tiers,
        overall_per_subtask=sum(scores.values()) / len(scores),
        overall_per_reduced=sum(reduced.values()) / len(reduced),
        counts=dict(counts or {}),
        flags=list(flags),
    )


def score_predictions(preds: Mapping[str, str], golds: Mapping[str, Sample],
                      cfg: ProtocolConfig = ProtocolConfig()) -> dict[str, float]:
    """Per-subtask scores: MRA for numeric golds, accuracy for MC golds,
    grouped by each sample's task category. Scores are on a 0-100 scale."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for sid, s in golds.items():
        raw = preds.get(sid)
        score = 0.0
        if raw is not None:
            try:
                pred = canonicalize_answer(raw, s.answer)
            except UnparseableAnswer:
                pred = None
            if pred is not None:
                if s.answer.kind == "Numeric":
                    score = mra(pred, float(s.answer.value), cfg.mra_thresholds)
                else:
                    gold_label = canonicalize_answer(str(s.answer.value), s.answer)
                    score = 1.0 if pred == gold_label else 0.0
        cat = s.task_category or "uncategorized"
        sums[cat] = sums.get(cat, 0.0) + score
        counts[cat] = counts.get(cat, 0) + 1
    return {cat: 100.0 * sums[cat] / counts[cat] for cat in sums}


def emit_report(report: EvalReport, fmt: str = "json") -> bytes:
    if not report.category_scores:
        raise EmptyReport("report has no categories")
    if fmt == "json":
        return (json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "markdown":
        lines = ["| Category | Score |", "| --- | --- |"]
        if report.tier_averages:
            tier_cells = " / ".join(
                f"{t}: {report.tier_averages.get(t, 0.0):.2f}" for t in TIERS)
            lines.insert(0, f"**Tiers** — {tier_cells}\n")
        for cat in sorted(report.reduced_scores):
            lines.append(f"| {cat} | {report.reduced_scores[cat]:.2f} |")
        lines.append("")
        lines.append(f"Overall (per subtask): {report.overall_per_subtask:.2f}")
        lines.append(f"Overall (per reduced category): {report.overall_per_reduced:.2f}")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")
