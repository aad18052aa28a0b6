"""Zero-leakage lint and the two-stage verification gate (factuality + blind test),
with per-corpus rejection accounting."""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import AnswerSpec, Sample, UnparseableAnswer, canonicalize_answer
from .gateway import BackendRequest, Gateway, GatewayError
from .router import attempt_seed, grade_attempt

RETAINED = "Retained"
REJECTED_LEAKAGE = "RejectedLeakage"
REJECTED_FACTUALITY = "RejectedFactuality"
REJECTED_BLIND_TEST = "RejectedBlindTest"
UNVERIFIED = "Unverified"

_STANDALONE_NUMBER_RE = re.compile(r"(?<![\w.])[-+]?\d+(?:\.\d+)?(?![\w.])")


@dataclass(frozen=True)
class LintResult:
    passed: bool
    spans: tuple[tuple[int, int, int, str], ...] = ()
    # spans: (text index, start, end, matched text)


def lint_zero_leakage(texts: Sequence[str], gold: AnswerSpec) -> LintResult:
    """Fail iff any text leaks the gold answer.

    Rules: (a) the gold answer string of length >= 2, case-insensitive on a
    word boundary; (b) a standalone numeral equal to the gold numeric; (c) an
    explicit "answer is <label>" pattern for MC golds. Single-letter MC labels
    only trip rule (c) so legitimate scene markers survive.
    """
    spans: list[tuple[int, int, int, str]] = []

    gold_str = str(gold.value)
    patterns: list[re.Pattern] = []
    if len(gold_str) >= 2:
        patterns.append(re.compile(r"\b" + re.escape(gold_str) + r"\b", re.IGNORECASE))
    if gold.kind == "MultipleChoice":
        patterns.append(re.compile(
            r"answer\s+is\s+" + re.escape(gold_str) + r"\b", re.IGNORECASE))

    gold_num: Optional[float] = None
    if gold.kind == "Numeric":
        gold_num = float(gold.value)

    for i, text in enumerate(texts):
        for pat in patterns:
            for m in pat.finditer(text):
                spans.append((i, m.start(), m.end(), m.group(0)))
        if gold_num is not None:
            for m in _STANDALONE_NUMBER_RE.finditer(text):
                try:
                    if float(m.group(0)) == gold_num:
                        spans.append((i, m.start(), m.end(), m.group(0)))
                except ValueError:
                    pass
    return LintResult(passed=not spans, spans=tuple(spans))


@dataclass
class VerificationTrail:
    sample_id: str
    corpus: str = "OTHER"
    leakage: Optional[dict] = None      # {"outcome": pass|fail, "spans": [...]}
    factuality: Optional[dict] = None   # {"outcome": pass|fail|unverified, "reason": str}
    blind_test: Optional[dict] = None   # {"outcome": keep|discard|unverified, "examiner_answer": str}
    final: str = UNVERIFIED

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "corpus": self.corpus,
                "leakage": self.leakage, "factuality": self.factuality,
                "blind_test": self.blind_test, "final": self.final}

    @classmethod
    def from_json(cls, d: dict) -> "VerificationTrail":
        return cls(sample_id=d["sample_id"], corpus=d.get("corpus", "OTHER"),
                   leakage=d.get("leakage"), factuality=d.get("factuality"),
                   blind_test=d.get("blind_test"), final=d.get("final", UNVERIFIED))


class MalformedJudgeResponse(ValueError):
    pass


def _parse_judge_body(body: str) -> dict:
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedJudgeResponse(str(exc)) from None
    if not isinstance(doc, dict) or "verdict" not in doc:
        raise MalformedJudgeResponse("missing verdict field")
    return doc


def factuality_check(s: Sample, image_uri: str, judge: str,
                     gateway: Gateway, seed: int = 0) -> tuple[str, str]:
    """Ask the judge backend whether the rendered image is structurally sound.
    Returns (outcome, reason) with outcome in pass|fail|unverified."""
    req = BackendRequest(
        backend_id=judge, op_kind="Judge",
        payload={"sample_id": s.id, "image": image_uri, "query": s.query,
                 "check": "factuality"},
        seed=attempt_seed(seed, s.id, judge, 0))
    try:
        resp = gateway.invoke(req)
    except GatewayError as exc:
        return "unverified", f"transport: {exc}"
    if resp.status != "Ok":
        return "unverified", f"backend status {resp.status}"
    try:
        doc = _parse_judge_body(resp.body)
    except MalformedJudgeResponse as exc:
        return "unverified", f"malformed judge response: {exc}"
    verdict = str(doc.get("verdict", "")).lower()
    reason = str(doc.get("reason", ""))
    if verdict not in ("pass", "fail"):
        return "unverified", f"malformed judge verdict {verdict!r}"
    return verdict, reason


def blind_test(s: Sample, image_uri: str, examiner: str, gateway: Gateway,
               tol: float = 0.25, seed: int = 0) -> tuple[str, str]:
    """Examiner answers the query conditioned solely on the generated image;
    the original media never enter the payload. Returns (outcome, answer)."""
    payload = {"sample_id": s.id, "image": image_uri, "query": s.query,
               "answer_kind": s.answer.kind,
               "mc_options": list(s.answer.mc_options) if s.answer.mc_options else None}
    req = BackendRequest(backend_id=examiner, op_kind="Answer", payload=payload,
                         seed=attempt_seed(seed, s.id, examiner, 0))
    try:
        resp = gateway.invoke(req)
    except GatewayError:
        return "unverified", ""
    if resp.status != "Ok":
        return "unverified", ""
    outcome = "keep" if grade_attempt(resp.body, s.answer, tol) else "discard"
    return outcome, resp.body


@dataclass(frozen=True)
class VerifierConfig:
    judge: str = "judge"
    examiner: str = "examiner"
    numeric_tolerance: float = 0.25

    @classmethod
    def from_json(cls, d: dict) -> "VerifierConfig":
        return cls(judge=d.get("judge", "judge"),
                   examiner=d.get("examiner", "examiner"),
                   numeric_tolerance=float(d.get("numeric_tolerance", 0.25)))


def verify_sample(row: dict, cfg: VerifierConfig, gateway: Gateway,
                  seed: int = 0) -> dict:
    """Run the gate over one rendered row; attaches a `verification` trail.

    Only rows with a rendered image are candidates; the stages short-circuit,
    so a leakage or factuality rejection never reaches the next backend.
    """
    s = Sample.from_json(row)
    render = row.get("render") or {}
    image = render.get("image")
    if not image or render.get("kind") in (None, "NoRender"):
        row["verification"] = None
        return row

    trail = VerificationTrail(sample_id=s.id, corpus=s.corpus)
    texts = []
    prompt = render.get("prompt")
    if prompt:
        texts.append(prompt.get("instruction", ""))
    for key in ("plan", "deduct"):
        if row.get(key):
            texts.append(str(row[key]))
    lint = lint_zero_leakage(texts, s.answer)
    trail.leakage = {"outcome": "pass" if lint.passed else "fail",
                     "spans": [list(sp) for sp in lint.spans]}
    if not lint.passed:
        trail.final = REJECTED_LEAKAGE
        row["verification"] = trail.to_json()
        return row

    outcome, reason = factuality_check(s, image, cfg.judge, gateway, seed)
    trail.factuality = {"outcome": outcome, "reason": reason}
    if outcome == "unverified":
        trail.final = UNVERIFIED
        row["verification"] = trail.to_json()
        return row
    if outcome == "fail":
        trail.final = REJECTED_FACTUALITY
        row["verification"] = trail.to_json()
        return row

    outcome, answer = blind_test(s, image, cfg.examiner, gateway,
                                 cfg.numeric_tolerance, seed)
    trail.blind_test = {"outcome": outcome, "examiner_answer": answer}
    if outcome == "unverified":
        trail.final = UNVERIFIED
    elif outcome == "discard":
        trail.final = REJECTED_BLIND_TEST
    else:
        trail.final = RETAINED
    row["verification"] = trail.to_json()
    return row


def verify_corpus(rows: list[dict], cfg: VerifierConfig, gateway: Gateway,
                  seed: int = 0, workers: int = 1) -> list[dict]:
    def work(row: dict) -> dict:
        return verify_sample(dict(row), cfg, gateway, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, rows))
    return [work(r) for r in rows]


@dataclass
class CorpusStageStats:
    candidates: int = 0
    leakage_rejected: int = 0
    stage1_rejected: int = 0
    stage2_rejected: int = 0
    retained: int = 0
    unverified: int = 0

    @property
    def stage2_entrants(self) -> int:
        return self.stage2_rejected + self.retained + self._stage2_unverified

    def to_json(self) -> dict:
        entered1 = self.candidates - self.leakage_rejected
        r1 = self.stage1_rejected / entered1 if entered1 else 0.0
        entered2 = entered1 - self.stage1_rejected - self._stage1_unverified
        r2 = self.stage2_rejected / entered2 if entered2 else 0.0
        retention = self.retained / entered1 if entered1 else 0.0
        return {
            "candidates": self.candidates,
            "leakage_rejected": self.leakage_rejected,
            "stage1_rejected": self.stage1_rejected,
            "stage2_rejected": self.stage2_rejected,
            "retained": self.retained,
            "unverified": self.unverified,
            "stage1_rate": r1,
            "stage2_rate": r2,
            "retention_rate": retention,
        }

    _stage1_unverified: int = 0
    _stage2_unverified: int = 0


def stage_statistics(trails: Sequence[VerificationTrail]) -> dict:
    """Per-corpus stage accounting shaped like the two-stage rejection table."""
    per: dict[str, CorpusStageStats] = {}
    for t in trails:
        st = per.setdefault(t.corpus, CorpusStageStats())
        st.candidates += 1
        if t.final == REJECTED_LEAKAGE:
            st.leakage_rejected += 1
        elif t.final == REJECTED_FACTUALITY:
            st.stage1_rejected += 1
        elif t.final == REJECTED_BLIND_TEST:
            st.stage2_rejected += 1
        elif t.final == RETAINED:
            st.retained += 1
        else:
            st.unverified += 1
            if t.blind_test is not None:
                st._stage2_unverified += 1
            else:
                st._stage1_unverified += 1
    totals = CorpusStageStats()
    for st in per.values():
        totals.candidates += st.candidates
        totals.leakage_rejected += st.leakage_rejected
        totals.stage1_rejected += st.stage1_rejected
        totals.stage2_rejected += st.stage2_rejected
        totals.retained += st.retained
        totals.unverified += st.unverified
        totals._stage1_unverified += st._stage1_unverified
        totals._stage2_unverified += st._stage2_unverified
    return {
        "by_corpus": {c: st.to_json() for c, st in sorted(per.items())},
        "total": totals.to_json(),
    }


def retention_from_rates(stage1_rate: float, stage2_rate: float) -> float:
    """Algebraic identity linking stage rejection rates to overall retention."""
    return (1.0 - stage1_rate) * (1.0 - stage2_rate)
