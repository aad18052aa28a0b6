"""Textual backfilling, mix balancing, structured-record assembly, composition
statistics, and the append-only human-review decision log."""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import ReasoningTuple, Sample, VisRef
from .gateway import BackendRequest, Gateway, GatewayError
from .router import attempt_seed, grade_attempt

INTERLEAVED = "Interleaved"
TEXTUAL = "Textual"

IMG_START = "<img_start>"
IMG_END = "<img_end>"

INTERLEAVED_KINDS = ("Plan", "ImageStart", "Image", "ImageEnd", "Deduct", "Answer")
TEXTUAL_KINDS = ("Plan", "Deduct", "Answer")


class InsufficientPool(ValueError):
    pass


class EmptyManifest(ValueError):
    pass


class MalformedRecord(ValueError):
    pass


@dataclass(frozen=True)
class InterleavedRecord:
    sample_id: str
    mode: str  # Interleaved | Textual
    segments: tuple[tuple[str, str], ...]  # (kind, payload)
    corpus: str = "OTHER"
    task_category: str = ""
    input_modality: str = "SingleImage"

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "mode": self.mode,
            "segments": [{"kind": k, "payload": p} for k, p in self.segments],
            "corpus": self.corpus,
            "task_category": self.task_category,
            "input_modality": self.input_modality,
        }

    @classmethod
    def from_json(cls, d: dict) -> "InterleavedRecord":
        rec = cls(
            sample_id=d["sample_id"],
            mode=d["mode"],
            segments=tuple((seg["kind"], seg["payload"]) for seg in d["segments"]),
            corpus=d.get("corpus", "OTHER"),
            task_category=d.get("task_category", ""),
            input_modality=d.get("input_modality", "SingleImage"),
        )
        rec.validate()
        return rec

    def validate(self) -> None:
        kinds = tuple(k for k, _ in self.segments)
        expected = INTERLEAVED_KINDS if self.mode == INTERLEAVED else TEXTUAL_KINDS
        if kinds != expected:
            raise MalformedRecord(
                f"{self.mode} record must have segments {expected}, got {kinds}")


def assemble_record(s: Sample, t: ReasoningTuple) -> InterleavedRecord:
    """Lay the reasoning tuple out as a delimiter-marked segment sequence."""
    if t.vis is not None:
        mode = INTERLEAVED
        segments = (
            ("Plan", t.plan),
            ("ImageStart", IMG_START),
            ("Image", t.vis.image_uri),
            ("ImageEnd", IMG_END),
            ("Deduct", t.deduct),
            ("Answer", t.final_answer),
        )
    else:
        mode = TEXTUAL
        segments = (("Plan", t.plan), ("Deduct", t.deduct), ("Answer", t.final_answer))
    rec = InterleavedRecord(
        sample_id=s.id, mode=mode, segments=segments, corpus=s.corpus,
        task_category=s.task_category, input_modality=s.input_modality)
    rec.validate()
    return rec


def backfill_sample(row: dict, backend_id: str, gateway: Gateway,
                    tol: float = 0.25, seed: int = 0) -> dict:
    """Synthesize a pure-text reasoning chain for a TextPath row.

    The chain must be non-empty and its final answer must grade against the
    gold; otherwise the candidate is dropped with a reason.
    """
    s = Sample.from_json(row)
    routing = row.get("routing") or {}
    if routing.get("path") != "TextPath":
        row["backfill"] = {"status": "skipped", "reason": "not TextPath"}
        return row
    req = BackendRequest(
        backend_id=backend_id, op_kind="Synthesize",
        payload={"sample_id": s.id, "query": s.query,
                 "media": [m.uri for m in s.media]},
        seed=attempt_seed(seed, s.id, backend_id, 0))
    try:
        resp = gateway.invoke(req)
    except GatewayError:
        row["backfill"] = {"status": "dropped", "reason": "backend failure"}
        return row
    if resp.status != "Ok":
        row["backfill"] = {"status": "dropped", "reason": f"backend {resp.status}"}
        return row
    try:
        chain = json.loads(resp.body)
        plan = str(chain["plan"])
        deduct = str(chain["deduct"])
        final = str(chain["final_answer"])
    except (json.JSONDecodeError, KeyError, TypeError):
        row["backfill"] = {"status": "dropped", "reason": "malformed chain"}
        return row
    if not plan.strip() or not deduct.strip():
        row["backfill"] = {"status": "dropped", "reason": "empty chain text"}
        return row
    if not grade_attempt(final, s.answer, tol):
        row["backfill"] = {"status": "dropped", "reason": "inconsistent chain"}
        return row
    row["backfill"] = {"status": "ok", "plan": plan, "deduct": deduct,
                       "final_answer": final}
    return row


def backfill_corpus(rows: list[dict], backend_id: str, gateway: Gateway,
                    tol: float = 0.25, seed: int = 0,
                    workers: int = 1) -> list[dict]:
    def work(row: dict) -> dict:
        return backfill_sample(dict(row), backend_id, gateway, tol, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, rows))
    return [work(r) for r in rows]


def balance_counts(n_interleaved: int, n_textual: int,
                   target_ratio: float) -> tuple[int, int]:
    """Pick (i, t) hitting the target interleaved ratio with maximal data.

    The binding pool is used in full; the other count is the one minimizing
    |i/(i+t) - target|, ties breaking toward the larger total and then the
    larger interleaved count.
    """
    if n_interleaved < 1 or n_textual < 1:
        raise InsufficientPool("both pools must be non-empty")
    r = target_ratio

    def best_over(candidates) -> tuple[int, int]:
        best = None
        for i, t in candidates:
            key = (abs(i / (i + t) - r), -(i + t), -i)
            if best is None or key < best[0]:
                best = (key, (i, t))
        return best[1]

    if n_interleaved * (1 - r) / r <= n_textual:
        i = n_interleaved
        ideal = i * (1 - r) / r
        ts = {max(1, min(n_textual, int(ideal))),
              max(1, min(n_textual, int(ideal) + 1))}
        return best_over((i, t) for t in ts)
    t = n_textual
    ideal = t * r / (1 - r)
    is_ = {max(1, min(n_interleaved, int(ideal))),
           max(1, min(n_interleaved, int(ideal) + 1))}
    return best_over((i, t) for i in is_)


def balance_mix(interleaved_pool: Sequence[str], textual_pool: Sequence[str],
                target_ratio: float, seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministically select ids from each pool to hit the target mix."""
    if not (0 < target_ratio < 1):
        raise ValueError("target_ratio must lie in (0, 1)")
    i, t = balance_counts(len(interleaved_pool), len(textual_pool), target_ratio)
    rng = random.Random(seed)
    sel_i = sorted(rng.sample(list(interleaved_pool), i))
    sel_t = sorted(rng.sample(list(textual_pool), t))
    return sel_i, sel_t


def _pct(count: int, total: int) -> float:
    if total == 0:
        return 0.0
    q = Decimal(count) * 100 / Decimal(total)
    return float(q.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def composition_report(records: Iterable[InterleavedRecord]) -> dict:
    """Exact counts and 2-decimal half-up percentages by mode, corpus,
    category, and input modality."""
    records = list(records)
    if not records:
        raise EmptyManifest("composition report needs at least one record")
    total = len(records)

    def axis(key) -> dict:
        counts: dict[str, int] = {}
        for r in records:
            counts[key(r)] = counts.get(key(r), 0) + 1
        return {k: {"count": v, "percent": _pct(v, total)}
                for k, v in sorted(counts.items())}

    return {
        "total": total,
        "by_mode": axis(lambda r: r.mode),
        "by_corpus": axis(lambda r: r.corpus),
        "by_task_category": axis(lambda r: r.task_category),
        "by_input_modality": axis(lambda r: r.input_modality),
    }


# --- human review ---

REVIEW_STATUSES = ("Pending", "Approved", "Rejected")


class NotFound(KeyError):
    pass


@dataclass(frozen=True)
class ReviewDecision:
    sample_id: str
    decision: str  # Approved | Rejected
    reviewer: str
    revision: int
    reason: str = ""

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "decision": self.decision,
                "reviewer": self.reviewer, "revision": self.revision,
                "reason": self.reason}

    @classmethod
    def from_json(cls, d: dict) -> "ReviewDecision":
        return cls(sample_id=d["sample_id"], decision=d["decision"],
                   reviewer=d.get("reviewer", ""), revision=int(d["revision"]),
                   reason=d.get("reason", ""))


class ReviewLog:
    """Append-only decision log; the latest revision per item wins and
    re-applying an identical decision is a no-op."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[ReviewDecision] = []
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.entries.append(ReviewDecision.from_json(json.loads(line)))

    def apply(self, item_ids: set[str], d: ReviewDecision) -> str:
        if d.sample_id not in item_ids:
            raise NotFound(d.sample_id)
        if d.decision not in ("Approved", "Rejected"):
            raise ValueError(f"decision must be Approved or Rejected, got {d.decision}")
        if any(e == d for e in self.entries):
            return self.status_of(d.sample_id)  # idempotent replay
        self.entries.append(d)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(d.to_json(), sort_keys=True) + "\n")
        return self.status_of(d.sample_id)

    def status_of(self, sample_id: str) -> str:
        latest: Optional[ReviewDecision] = None
        for e in self.entries:
            if e.sample_id == sample_id:
                if latest is None or e.revision >= latest.revision:
                    latest = e
        return latest.decision if latest else "Pending"

    def statuses(self) -> dict[str, str]:
        out: dict[str, ReviewDecision] = {}
        for e in self.entries:
            cur = out.get(e.sample_id)
            if cur is None or e.revision >= cur.revision:
                out[e.sample_id] = e
        return {k: v.decision for k, v in out.items()}


def export_final(records: Sequence[InterleavedRecord],
                 log: ReviewLog) -> list[InterleavedRecord]:
    """Final manifest: everything not rejected by its latest review decision."""
    statuses = log.statuses()
    return [r for r in records if statuses.get(r.sample_id) != "Rejected"]


def assemble_corpus(verified_rows: list[dict], backfilled_rows: list[dict],
                    target_ratio: float = 0.4786,
                    seed: int = 0) -> tuple[list[InterleavedRecord], dict]:
    """Build the final record pools from pipeline rows and balance the mix.

    Interleaved pool: rows whose verification retained the render. Textual
    pool: rows with an accepted backfill chain.
    """
    interleaved: dict[str, InterleavedRecord] = {}
    for row in verified_rows:
        ver = row.get("verification")
        if not ver or ver.get("final") != "Retained":
            continue
        s = Sample.from_json(row)
        render = row["render"]
        plan = row.get("plan") or f"Plan: ground the query spatially. {s.query}"
        deduct = row.get("deduct") or "Deduce the answer from the rendered state."
        t = ReasoningTuple(plan=plan, deduct=deduct,
                           final_answer=str(s.answer.value),
                           vis=VisRef(image_uri=render["image"],
                                      render_kind=render["kind"]))
        interleaved[s.id] = assemble_record(s, t)

    textual: dict[str, InterleavedRecord] = {}
    for row in backfilled_rows:
        bf = row.get("backfill")
        if not bf or bf.get("status") != "ok":
            continue
        s = Sample.from_json(row)
        t = ReasoningTuple(plan=bf["plan"], deduct=bf["deduct"],
                           final_answer=bf["final_answer"], vis=None)
        textual[s.id] = assemble_record(s, t)

    if not interleaved or not textual:
        raise InsufficientPool(
            f"pools: {len(interleaved)} interleaved, {len(textual)} textual")
    sel_i, sel_t = balance_mix(sorted(interleaved), sorted(textual),
                               target_ratio, seed)
    records = [interleaved[i] for i in sel_i] + [textual[t] for t in sel_t]
    stats = {
        "pool_interleaved": len(interleaved),
        "pool_textual": len(textual),
        "selected_interleaved": len(sel_i),
        "selected_textual": len(sel_t),
        "realized_ratio": len(sel_i) / (len(sel_i) + len(sel_t)),
        "target_ratio": target_ratio,
    }
    return records, stats
