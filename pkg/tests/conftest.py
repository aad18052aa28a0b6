"""Shared fixtures: deterministic corpus builders and mock model backends."""

from __future__ import annotations

import base64
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
import pytest

from spatialforge.core import AnswerSpec, MediaRef, Sample
from spatialforge.gateway import BackendRequest, BackendResponse

MC_OPTIONS = ("A", "B", "C", "D")

CATEGORIES = [
    ("route_plan", "MultipleChoice"),
    ("perspective_shift", "MultipleChoice"),
    ("camera_distance", "Numeric"),
    ("object_count", "Numeric"),
    ("relative_distance", "MultipleChoice"),
]
CORPORA_CYCLE = ["SPAR", "VSI", "VLM3R"]


def _digest(*parts) -> int:
    return int.from_bytes(
        hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()[:8],
        "big")


def make_sample(idx: int, media_dir: Path | None = None) -> Sample:
    category, kind = CATEGORIES[idx % len(CATEGORIES)]
    corpus = CORPORA_CYCLE[idx % len(CORPORA_CYCLE)]
    sid = f"s{idx:04d}"
    if kind == "MultipleChoice":
        answer = AnswerSpec(kind="MultipleChoice",
                            value=MC_OPTIONS[idx % 4], mc_options=MC_OPTIONS)
    else:
        answer = AnswerSpec(kind="Numeric", value=float(2 + idx % 7) + 0.5,
                            unit="meters")
    media = [MediaRef(uri=f"{sid}_rgb.png", kind="RGB", width=64, height=64)]
    extra = {}
    if category == "camera_distance":
        depth_uri = f"{sid}_depth.bin"
        media.append(MediaRef(uri=depth_uri, kind="DepthGrid",
                              width=32, height=32))
        if media_dir is not None:
            write_raw_depth(media_dir / depth_uri, 32, 32, seed=idx)
        extra["boxes"] = [{"x": 4, "y": 4, "w": 12, "h": 10, "label": 1}]
    return Sample(
        id=sid,
        query=f"Spatial question {idx} about the scene layout near marker M{idx % 9}.",
        media=tuple(media),
        answer=answer,
        corpus=corpus,
        task_category=category,
        input_modality="MultiView",
        frame_count=0,
        extra=extra,
    )


def make_corpus(n: int, media_dir: Path | None = None) -> list[Sample]:
    if media_dir is not None:
        media_dir.mkdir(parents=True, exist_ok=True)
    return [make_sample(i, media_dir) for i in range(n)]


def write_raw_depth(path: Path, w: int, h: int, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    vals = rng.integers(1, 500, size=(h, w)).astype("<f4")
    path.write_bytes(struct.pack("<II", w, h) + vals.tobytes())


def tiny_png(seed: str) -> bytes:
    from PIL import Image
    rng = np.random.default_rng(_digest(seed) % (2 ** 31))
    arr = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def gold_text(s: Sample) -> str:
    if s.answer.kind == "MultipleChoice":
        return str(s.answer.value)
    return f"{s.answer.value} meters"


def wrong_text(s: Sample) -> str:
    if s.answer.kind == "MultipleChoice":
        options = [o for o in s.answer.mc_options if o != s.answer.value]
        return options[0]
    return f"{float(s.answer.value) * 2 + 1} meters"


class MockSpatialBackends:
    """Deterministic offline stand-in for probers, judges, examiners,
    generators, and synthesizers.

    Behavior is a pure function of (sample id, backend id), so recorded
    cassettes are reproducible. A per-sample plan dict can override it.
    """

    def __init__(self, samples: list[Sample], plan: dict | None = None):
        self.samples = {s.id: s for s in samples}
        self.plan = plan or {}
        self.calls: list[BackendRequest] = []

    def _plan_for(self, sid: str) -> dict:
        if sid in self.plan:
            return self.plan[sid]
        # default: deterministic pseudo-random behavior per sample
        d = _digest(sid, "behavior")
        return {
            "prober_wrong": [(d >> k) & 1 == 1 for k in range(3)],
            "judge": "fail" if (d >> 8) % 5 == 0 else "pass",
            "examiner": "wrong" if (d >> 16) % 4 == 0 else "correct",
            "synth": "inconsistent" if (d >> 24) % 7 == 0 else "ok",
        }

    def __call__(self, req: BackendRequest) -> BackendResponse:
        self.calls.append(req)
        sid = req.payload.get("sample_id")
        s = self.samples.get(sid)
        plan = self._plan_for(sid) if s else {}

        if req.backend_id.startswith("prober"):
            idx = {"prober-a": 0, "prober-b": 1, "prober-c": 2}.get(
                req.backend_id, 0)
            wrong = plan.get("prober_wrong", [False, False, False])[idx]
            return BackendResponse(
                status="Ok", body=wrong_text(s) if wrong else gold_text(s))

        if req.op_kind == "Judge":
            verdict = plan.get("judge", "pass")
            doc = {"verdict": verdict,
                   "reason": "topology corruption" if verdict == "fail" else ""}
            return BackendResponse(status="Ok", body=json.dumps(doc))

        if req.backend_id == "examiner":
            wrong = plan.get("examiner") == "wrong"
            return BackendResponse(
                status="Ok", body=wrong_text(s) if wrong else gold_text(s))

        if req.op_kind == "Generate":
            return BackendResponse(
                status="Ok",
                body=base64.b64encode(tiny_png(sid or "none")).decode())

        if req.op_kind == "Synthesize":
            mode = plan.get("synth", "ok")
            if mode == "empty":
                chain = {"plan": "", "deduct": "", "final_answer": gold_text(s)}
            elif mode == "inconsistent":
                chain = {"plan": f"Think about {sid}.",
                         "deduct": "Therefore the answer follows.",
                         "final_answer": wrong_text(s)}
            else:
                chain = {"plan": f"Lay out the spatial relations for {sid}.",
                         "deduct": "Deduce the final quantity step by step.",
                         "final_answer": gold_text(s)}
            return BackendResponse(status="Ok", body=json.dumps(chain))

        return BackendResponse(status="Refused", body="unknown backend")


@pytest.fixture
def small_corpus(tmp_path):
    media = tmp_path / "media"
    samples = make_corpus(20, media)
    return samples, media
