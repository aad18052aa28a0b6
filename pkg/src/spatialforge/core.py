"""Shared data model: samples, answers, reasoning tuples, manifest I/O."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

CORPORA = ("SPAR", "VSI", "VLM3R", "OTHER")
MODALITIES = ("SingleImage", "MultiView", "VideoFrames")
MEDIA_KINDS = ("RGB", "DepthGrid")
ANSWER_KINDS = ("MultipleChoice", "Numeric")

_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


class UnparseableAnswer(ValueError):
    """Raw answer text cannot be mapped onto the answer spec."""


@dataclass(frozen=True)
class MediaRef:
    uri: str
    kind: str = "RGB"
    width: int = 0
    height: int = 0

    def to_json(self) -> dict:
        return {"uri": self.uri, "kind": self.kind, "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, d: dict) -> "MediaRef":
        return cls(uri=d["uri"], kind=d.get("kind", "RGB"),
                   width=int(d.get("width", 0)), height=int(d.get("height", 0)))


@dataclass(frozen=True)
class AnswerSpec:
    kind: str  # MultipleChoice | Numeric
    value: Union[str, float]
    mc_options: Optional[tuple[str, ...]] = None
    unit: Optional[str] = None

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind, "value": self.value}
        if self.mc_options is not None:
            d["mc_options"] = list(self.mc_options)
        if self.unit is not None:
            d["unit"] = self.unit
        return d

    @classmethod
    def from_json(cls, d: dict) -> "AnswerSpec":
        opts = d.get("mc_options")
        return cls(kind=d["kind"], value=d["value"],
                   mc_options=tuple(opts) if opts is not None else None,
                   unit=d.get("unit"))


@dataclass(frozen=True)
class Sample:
    id: str
    query: str
    media: tuple[MediaRef, ...]
    answer: AnswerSpec
    corpus: str = "OTHER"
    task_category: str = ""
    input_modality: str = "SingleImage"
    frame_count: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        d = dict(self.extra)
        d.update({
            "id": self.id,
            "query": self.query,
            "media": [m.to_json() for m in self.media],
            "answer": self.answer.to_json(),
            "corpus": self.corpus,
            "task_category": self.task_category,
            "input_modality": self.input_modality,
            "frame_count": self.frame_count,
        })
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Sample":
        known = {"id", "query", "media", "answer", "corpus", "task_category",
                 "input_modality", "frame_count"}
        extra = {k: v for k, v in d.items() if k not in known}
        return cls(
            id=d["id"],
            query=d["query"],
            media=tuple(MediaRef.from_json(m) for m in d.get("media", [])),
            answer=AnswerSpec.from_json(d["answer"]),
            corpus=d.get("corpus", "OTHER"),
            task_category=d.get("task_category", ""),
            input_modality=d.get("input_modality", "SingleImage"),
            frame_count=int(d.get("frame_count", 0)),
            extra=extra,
        )


@dataclass(frozen=True)
class VisRef:
    """Reference to a generated intermediate image and how it was rendered."""
    image_uri: str
    render_kind: str  # BEV | POV | DepthOverlay


@dataclass(frozen=True)
class ReasoningTuple:
    plan: str
    deduct: str
    final_answer: str
    vis: Optional[VisRef] = None

    def is_textual(self) -> bool:
        return self.vis is None


def canonicalize_answer(raw: str, spec: AnswerSpec) -> Union[str, float]:
    """Normalize a raw answer string against its spec.

    MultipleChoice maps to a single uppercase option label; Numeric parses the
    first dot-decimal number (unit words are stripped, number words are not
    supported). Raises UnparseableAnswer otherwise.
    """
    if not raw or not str(raw).strip():
        raise UnparseableAnswer("empty answer text")
    raw = str(raw)

    if spec.kind == "MultipleChoice":
        labels = [opt.upper() for opt in (spec.mc_options or ())]
        cleaned = re.sub(r"^[\W_]+|[\W_]+$", "", raw.strip()).upper()
        if cleaned in labels:
            return cleaned
        tokens = re.findall(r"[A-Za-z0-9]+", raw.upper())
        hits = [t for t in tokens if t in labels]
        if len(set(hits)) == 1:
            return hits[0]
        raise UnparseableAnswer(f"no unique option label in {raw!r}")

    if spec.kind == "Numeric":
        m = _NUMBER_RE.search(raw)
        if m is None:
            raise UnparseableAnswer(f"no numeric value in {raw!r}")
        value = float(m.group(0))
        if value != value or value in (float("inf"), float("-inf")):
            raise UnparseableAnswer(f"non-finite numeric value in {raw!r}")
        return value

    raise UnparseableAnswer(f"unknown answer kind {spec.kind!r}")


def validate_sample(s: Sample) -> list[str]:
    """Return every invariant violation; an empty list means the sample is ok."""
    violations = []
    if not s.id:
        violations.append("id non-empty")
    if not s.media:
        violations.append("media non-empty")
    if s.corpus not in CORPORA:
        violations.append(f"corpus one of {CORPORA}")
    if s.input_modality not in MODALITIES:
        violations.append(f"input_modality one of {MODALITIES}")
    if s.frame_count < 0:
        violations.append("frame_count non-negative")
    if s.input_modality == "VideoFrames" and s.frame_count != len(s.media):
        violations.append("frame_count mismatch")
    for m in s.media:
        if m.kind not in MEDIA_KINDS:
            violations.append(f"media kind one of {MEDIA_KINDS}")
        if m.width < 0 or m.height < 0:
            violations.append("media dimensions non-negative")
    a = s.answer
    if a.kind == "MultipleChoice":
        if not a.mc_options:
            violations.append("mc_options required for MultipleChoice")
        elif str(a.value) not in a.mc_options:
            violations.append("value among mc_options labels")
    elif a.kind == "Numeric":
        try:
            v = float(a.value)
        except (TypeError, ValueError):
            violations.append("numeric value parseable")
        else:
            if v != v or v in (float("inf"), float("-inf")):
                violations.append("numeric value finite")
    else:
        violations.append(f"answer kind one of {ANSWER_KINDS}")
    return violations


def validate_manifest(samples: Iterable[Sample]) -> dict[str, list[str]]:
    """Map sample id -> violations, including manifest-level id uniqueness."""
    seen: set[str] = set()
    out: dict[str, list[str]] = {}
    for s in samples:
        v = validate_sample(s)
        if s.id in seen:
            v = v + ["id unique within manifest"]
        seen.add(s.id)
        if v:
            out[s.id] = v
    return out


def read_manifest(path: Union[str, Path]) -> list[Sample]:
    return [Sample.from_json(d) for d in read_jsonl(path)]


def write_manifest(path: Union[str, Path], samples: Iterable[Sample]) -> None:
    write_jsonl(path, (s.to_json() for s in samples))


def read_jsonl(path: Union[str, Path]) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: Union[str, Path], rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
