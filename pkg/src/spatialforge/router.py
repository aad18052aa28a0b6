"""Difficulty-aware routing: probe with an ensemble, grade, route on consistent failure."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .core import AnswerSpec, Sample, UnparseableAnswer, canonicalize_answer
from .gateway import BackendRequest, Gateway, GatewayError

TEXT_PATH = "TextPath"
VISUAL_PATH = "VisualPath"


class WrongAttemptCount(ValueError):
    pass


@dataclass(frozen=True)
class ProberVerdict:
    prober_id: str
    raw_answer: str
    correct: bool

    def to_json(self) -> dict:
        return {"prober_id": self.prober_id, "raw_answer": self.raw_answer,
                "correct": self.correct}


@dataclass(frozen=True)
class RouterConfig:
    probers: tuple[str, ...] = ("prober-a", "prober-b", "prober-c")
    runs_per_prober: int = 1
    failure_threshold: float = 2.0 / 3.0
    numeric_tolerance: float = 0.25

    @classmethod
    def from_json(cls, d: dict) -> "RouterConfig":
        return cls(
            probers=tuple(d.get("probers", cls.probers)),
            runs_per_prober=int(d.get("runs_per_prober", 1)),
            failure_threshold=float(d.get("failure_threshold", 2.0 / 3.0)),
            numeric_tolerance=float(d.get("numeric_tolerance", 0.25)),
        )

    @property
    def total_attempts(self) -> int:
        return len(self.probers) * self.runs_per_prober


@dataclass(frozen=True)
class RoutingDecision:
    sample_id: str
    path: str
    verdicts: tuple[ProberVerdict, ...]

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "path": self.path,
                "verdicts": [v.to_json() for v in self.verdicts]}


@dataclass
class RoutingStats:
    total: int = 0
    text_path: int = 0
    visual_path: int = 0
    routing_failed: int = 0
    by_corpus: dict = field(default_factory=dict)

    def add(self, corpus: str, outcome: str) -> None:
        self.total += 1
        if outcome == TEXT_PATH:
            self.text_path += 1
        elif outcome == VISUAL_PATH:
            self.visual_path += 1
        else:
            self.routing_failed += 1
        c = self.by_corpus.setdefault(corpus, {"TextPath": 0, "VisualPath": 0, "failed": 0})
        c["TextPath" if outcome == TEXT_PATH else
          "VisualPath" if outcome == VISUAL_PATH else "failed"] += 1

    def to_json(self) -> dict:
        routed = self.text_path + self.visual_path
        return {
            "total": self.total,
            "text_path": self.text_path,
            "visual_path": self.visual_path,
            "routing_failed": self.routing_failed,
            "visual_fraction": (self.visual_path / routed) if routed else 0.0,
            "by_corpus": self.by_corpus,
        }


def grade_attempt(raw: str, gold: AnswerSpec, tol: float = 0.25) -> bool:
    """Grade one prober attempt; unparseable answers count as incorrect."""
    try:
        pred = canonicalize_answer(raw, gold)
    except UnparseableAnswer:
        return False
    if gold.kind == "MultipleChoice":
        return pred == canonicalize_answer(str(gold.value), gold)
    gold_v = float(gold.value)
    return abs(pred - gold_v) / max(abs(gold_v), 1e-9) <= tol


def decide_route(sample_id: str, verdicts: list[ProberVerdict],
                 cfg: RouterConfig) -> RoutingDecision:
    """Pooled majority rule: VisualPath iff the incorrect fraction reaches the
    failure threshold."""
    if len(verdicts) != cfg.total_attempts:
        raise WrongAttemptCount(
            f"expected {cfg.total_attempts} verdicts, got {len(verdicts)}")
    incorrect = sum(1 for v in verdicts if not v.correct)
    path = VISUAL_PATH if incorrect / len(verdicts) >= cfg.failure_threshold else TEXT_PATH
    return RoutingDecision(sample_id=sample_id, path=path, verdicts=tuple(verdicts))


def attempt_seed(global_seed: int, sample_id: str, prober_id: str, run: int) -> int:
    """Stable per-attempt seed so replay hashes match across runs and workers."""
    digest = hashlib.sha256(
        f"{global_seed}:{sample_id}:{prober_id}:{run}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def probe_payload(s: Sample) -> dict:
    return {
        "sample_id": s.id,
        "query": s.query,
        "media": [m.uri for m in s.media],
        "answer_kind": s.answer.kind,
        "mc_options": list(s.answer.mc_options) if s.answer.mc_options else None,
    }


def route_sample(s: Sample, cfg: RouterConfig, gateway: Gateway,
                 seed: int = 0) -> Optional[RoutingDecision]:
    """Probe one sample; None means a gateway failure (sample routing_failed)."""
    verdicts = []
    try:
        for prober in cfg.probers:
            for run in range(cfg.runs_per_prober):
                req = BackendRequest(
                    backend_id=prober, op_kind="Answer", payload=probe_payload(s),
                    seed=attempt_seed(seed, s.id, prober, run))
                resp = gateway.invoke(req)
                raw = resp.body if resp.status == "Ok" else ""
                correct = bool(raw) and grade_attempt(raw, s.answer, cfg.numeric_tolerance)
                verdicts.append(ProberVerdict(prober_id=prober, raw_answer=raw,
                                              correct=correct))
    except GatewayError:
        return None
    return decide_route(s.id, verdicts, cfg)


def route_corpus(samples: list[Sample], cfg: RouterConfig, gateway: Gateway,
                 seed: int = 0, workers: int = 1) -> tuple[list[dict], RoutingStats]:
    """Route every sample; output order equals input order regardless of the
    execution order. Returns (routed rows, stats)."""
    def work(s: Sample) -> Optional[RoutingDecision]:
        return route_sample(s, cfg, gateway, seed=seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decisions = list(pool.map(work, samples))
    else:
        decisions = [work(s) for s in samples]

    stats = RoutingStats()
    rows = []
    for s, dec in zip(samples, decisions):
        row = s.to_json()
        if dec is None:
            row["routing"] = {"sample_id": s.id, "path": None, "failed": True}
            stats.add(s.corpus, "failed")
        else:
            row["routing"] = dec.to_json()
            stats.add(s.corpus, dec.path)
        rows.append(row)
    return rows, stats
