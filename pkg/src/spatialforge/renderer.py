"""Task-oriented rendering: keyframe selection, modality routing, zero-leakage
prompt construction, depth pseudo-color projection, resolution bucketing."""

from __future__ import annotations

import base64
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import MediaRef, Sample
from .gateway import BackendRequest, Gateway, GatewayError

BEV = "BEV"
POV = "POV"
DEPTH_OVERLAY = "DepthOverlay"
NO_RENDER = "NoRender"

# Category taxonomy: the three triggered families, everything else configured
# here takes the textual path.
DEFAULT_TAXONOMY = {
    "route_plan": BEV,
    "global_topology": BEV,
    "spatial_layout": BEV,
    "perspective_shift": POV,
    "egocentric_view": POV,
    "view_change": POV,
    "camera_distance": DEPTH_OVERLAY,
    "camera_depth": DEPTH_OVERLAY,
    "object_count": NO_RENDER,
    "object_size": NO_RENDER,
    "relative_distance": NO_RENDER,
    "relative_direction": NO_RENDER,
    "appearance_order": NO_RENDER,
}

MARKER_PRESERVATION_CLAUSE = (
    "Preserve every original object marker and keep the spatial layout of the "
    "scene unchanged."
)

# 5-stop jet-like colormap; fixed table keeps outputs bit-testable.
COLOR_STOPS = (
    (0.00, (0, 0, 128)),
    (0.25, (0, 255, 255)),
    (0.50, (0, 255, 0)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 0, 0)),
)


class UnknownCategory(KeyError):
    pass


class EmptyValidRegion(ValueError):
    pass


class LeakageUnavoidable(ValueError):
    """The gold answer cannot be kept out of the generation prompt."""


@dataclass(frozen=True)
class PromptSpec:
    instruction: str
    marker_preservation_clause: str
    forbidden_strings: tuple[str, ...]
    target_viewpoint: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "instruction": self.instruction,
            "marker_preservation_clause": self.marker_preservation_clause,
            "forbidden_strings": list(self.forbidden_strings),
            "target_viewpoint": self.target_viewpoint,
        }


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int
    label: int

    def validate(self, width: int, height: int) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box sides must be positive")
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise ValueError("box outside image bounds")


@dataclass
class DepthGrid:
    width: int
    height: int
    values: np.ndarray  # (h, w) float, meters
    valid: np.ndarray   # (h, w) bool

    @classmethod
    def from_raw_f32(cls, path: Union[str, Path]) -> "DepthGrid":
        """Raw little-endian float32 grid behind an 8-byte (width, height) header."""
        blob = Path(path).read_bytes()
        w, h = struct.unpack("<II", blob[:8])
        values = np.frombuffer(blob[8:8 + 4 * w * h], dtype="<f4").reshape(h, w)
        values = values.astype(np.float64)
        return cls(width=w, height=h, values=values, valid=np.isfinite(values))

    @classmethod
    def from_png16(cls, path: Union[str, Path]) -> "DepthGrid":
        """16-bit grayscale PNG in millimeters; zero marks missing depth."""
        from PIL import Image
        img = Image.open(path)
        arr = np.asarray(img, dtype=np.uint16)
        values = arr.astype(np.float64) / 1000.0
        return cls(width=arr.shape[1], height=arr.shape[0],
                   values=values, valid=arr > 0)


def load_depth(path: Union[str, Path]) -> DepthGrid:
    p = Path(path)
    if p.suffix.lower() == ".png":
        return DepthGrid.from_png16(p)
    return DepthGrid.from_raw_f32(p)


def select_keyframes(n_frames: int, budget: int, strategy: str = "uniform",
                     gateway: Optional[Gateway] = None,
                     sample: Optional[Sample] = None, seed: int = 0) -> list[int]:
    """Pick a strictly increasing index subset of length min(budget, n_frames)."""
    if n_frames < 1 or budget < 1:
        raise ValueError("n_frames and budget must be >= 1")
    if strategy == "model":
        return _model_keyframes(n_frames, budget, gateway, sample, seed)
    b = min(budget, n_frames)
    if b == 1:
        return [0]
    return [int(i * (n_frames - 1) / (b - 1) + 0.5) for i in range(b)]


def _model_keyframes(n_frames: int, budget: int, gateway: Gateway,
                     sample: Sample, seed: int) -> list[int]:
    import json
    req = BackendRequest(
        backend_id="keyframer", op_kind="Answer",
        payload={"sample_id": sample.id, "query": sample.query,
                 "n_frames": n_frames, "budget": budget, "task": "keyframes"},
        seed=seed)
    resp = gateway.invoke(req)
    idx = sorted(set(int(i) for i in json.loads(resp.body)))
    idx = [i for i in idx if 0 <= i < n_frames][:budget]
    if not idx:
        return select_keyframes(n_frames, budget, "uniform")
    return idx


def classify_render_kind(task_category: str,
                         taxonomy: Optional[dict] = None) -> str:
    table = taxonomy if taxonomy is not None else DEFAULT_TAXONOMY
    try:
        return table[task_category]
    except KeyError:
        raise UnknownCategory(task_category) from None


def gold_answer_forms(sample: Sample) -> tuple[str, ...]:
    """String and digit forms of the gold answer, for leakage screening."""
    a = sample.answer
    forms = [str(a.value)]
    if a.kind == "Numeric":
        v = float(a.value)
        if v == int(v):
            forms.append(str(int(v)))
        forms.append(repr(v))
    else:
        forms.append(f"answer is {a.value}")
    out = []
    for f in forms:
        if f not in out:
            out.append(f)
    return tuple(out)


def build_generation_prompt(s: Sample, kind: str) -> PromptSpec:
    """Compose the generation instruction for a BEV/POV render and verify that
    it passes the zero-leakage lint."""
    from .verifier import lint_zero_leakage

    if kind not in (BEV, POV):
        raise ValueError(f"prompt construction only applies to BEV/POV, got {kind}")
    target_viewpoint = None
    if kind == BEV:
        scene = ("Render a top-down 2D bird's-eye-view map of the scene, "
                 "showing walls, obstacles, and labeled objects.")
    else:
        target_viewpoint = str(s.extra.get("target_viewpoint",
                                           "the viewpoint described in the query"))
        scene = (f"Render the scene as a novel point-of-view image seen from "
                 f"{target_viewpoint}.")
    instruction = (
        f"{scene} {MARKER_PRESERVATION_CLAUSE} "
        f"Do not draw any text, numbers, or measurements in the image. "
        f"Scene context: {s.query}"
    )
    spec = PromptSpec(
        instruction=instruction,
        marker_preservation_clause=MARKER_PRESERVATION_CLAUSE,
        forbidden_strings=gold_answer_forms(s),
        target_viewpoint=target_viewpoint,
    )
    result = lint_zero_leakage([spec.instruction], s.answer)
    if not result.passed:
        raise LeakageUnavoidable(
            f"gold answer cannot be excluded from the prompt for {s.id}: "
            f"{result.spans}")
    return spec


# 3x5 bitmap digits for deterministic label rendering.
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


def _draw_label(img: np.ndarray, x: int, y: int, label: int) -> None:
    h, w = img.shape[:2]
    cx = x
    for ch in str(label):
        rows = _DIGITS[ch]
        for dy, row in enumerate(rows):
            for dx, bit in enumerate(row):
                if bit == "1" and 0 <= y + dy < h and 0 <= cx + dx < w:
                    img[y + dy, cx + dx] = (255, 255, 255)
        cx += 4


def colorize(t: np.ndarray) -> np.ndarray:
    """Map normalized depth in [0, 1] through the 5-stop table.

    Channels interpolate linearly between stops and truncate to integers, so a
    mid-stop value like t=0.125 lands on (0, 127, 191).
    """
    t = np.clip(t, 0.0, 1.0)
    seg = np.minimum((t / 0.25).astype(np.int64), 3)
    s = (t - seg * 0.25) / 0.25
    lo = np.array([c for _, c in COLOR_STOPS[:-1]], dtype=np.float64)
    hi = np.array([c for _, c in COLOR_STOPS[1:]], dtype=np.float64)
    c0 = lo[seg]
    c1 = hi[seg]
    rgb = c0 + s[..., None] * (c1 - c0)
    return np.floor(rgb).astype(np.uint8)


def depth_to_pseudocolor(d: DepthGrid, boxes: Sequence[BBox] = ()) -> np.ndarray:
    """Project a depth grid to an RGB8 image with white 2-px box outlines and
    bitmap label indices at each box's top-left corner."""
    if not d.valid.any():
        raise EmptyValidRegion("depth grid has no valid pixels")
    for b in boxes:
        b.validate(d.width, d.height)
    vals = d.values
    vmin = vals[d.valid].min()
    vmax = vals[d.valid].max()
    if vmax == vmin:
        t = np.zeros_like(vals, dtype=np.float64)
    else:
        t = (vals - vmin) / (vmax - vmin)
    img = colorize(t)
    img[~d.valid] = (0, 0, 0)
    for b in boxes:
        x0, y0, x1, y1 = b.x, b.y, b.x + b.w, b.y + b.h
        img[y0:min(y0 + 2, y1), x0:x1] = (255, 255, 255)
        img[max(y1 - 2, y0):y1, x0:x1] = (255, 255, 255)
        img[y0:y1, x0:min(x0 + 2, x1)] = (255, 255, 255)
        img[y0:y1, max(x1 - 2, x0):x1] = (255, 255, 255)
        _draw_label(img, x0 + 3, y0 + 3, b.label)
    return img


def bucket_resolution(w: int, h: int, grid: dict) -> tuple[int, int]:
    """Clamp each side to [min, max] and floor to the stride grid anchored at min."""
    lo, hi, stride = int(grid["min"]), int(grid["max"]), int(grid["stride"])

    def one(side: int) -> int:
        side = max(lo, min(hi, side))
        return lo + ((side - lo) // stride) * stride

    return one(w), one(h)


def save_png(img: np.ndarray, path: Union[str, Path]) -> None:
    from PIL import Image
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


@dataclass
class RenderConfig:
    taxonomy: dict = field(default_factory=lambda: dict(DEFAULT_TAXONOMY))
    keyframe_budget: int = 8
    keyframe_strategy: str = "uniform"

    @classmethod
    def from_json(cls, d: dict) -> "RenderConfig":
        taxonomy = dict(DEFAULT_TAXONOMY)
        taxonomy.update(d.get("taxonomy", {}))
        return cls(taxonomy=taxonomy,
                   keyframe_budget=int(d.get("keyframe_budget", 8)),
                   keyframe_strategy=d.get("keyframe_strategy", "uniform"))


def render_sample(row: dict, cfg: RenderConfig, gateway: Gateway,
                  media_dir: Path, out_dir: Path, seed: int = 0) -> dict:
    """Render one routed row in place; adds a `render` object."""
    s = Sample.from_json(row)
    routing = row.get("routing") or {}
    if routing.get("path") != "VisualPath":
        row["render"] = None
        return row
    try:
        kind = classify_render_kind(s.task_category, cfg.taxonomy)
    except UnknownCategory:
        row["render"] = {"kind": None, "error": "unknown_category"}
        return row
    if kind == NO_RENDER:
        row["render"] = {"kind": NO_RENDER, "image": None}
        return row

    frame_idx = select_keyframes(max(len(s.media), 1), cfg.keyframe_budget,
                                 "uniform")
    keyframes = [s.media[i].uri for i in frame_idx if i < len(s.media)]

    if kind == DEPTH_OVERLAY:
        depth_ref = next((m for m in s.media if m.kind == "DepthGrid"), None)
        if depth_ref is None:
            row["render"] = {"kind": kind, "error": "no_depth_media"}
            return row
        grid = load_depth(media_dir / depth_ref.uri)
        boxes = [BBox(**b) for b in s.extra.get("boxes", [])]
        img = depth_to_pseudocolor(grid, boxes)
        out_name = f"{s.id}_depth.png"
        save_png(img, out_dir / out_name)
        row["render"] = {"kind": kind, "image": out_name, "keyframes": keyframes,
                         "prompt": None}
        return row

    try:
        prompt = build_generation_prompt(s, kind)
    except LeakageUnavoidable:
        row["render"] = {"kind": kind, "error": "leakage_unavoidable"}
        return row
    try:
        resp = gateway.invoke(BackendRequest(
            backend_id="generator", op_kind="Generate",
            payload={"sample_id": s.id, "kind": kind,
                     "prompt": prompt.to_json(), "keyframes": keyframes},
            seed=seed))
    except GatewayError:
        row["render"] = {"kind": kind, "error": "generation_failed"}
        return row
    if resp.status != "Ok":
        row["render"] = {"kind": kind, "error": "generation_refused"}
        return row
    out_name = f"{s.id}_{kind.lower()}.png"
    (out_dir / out_name).write_bytes(base64.b64decode(resp.body))
    row["render"] = {"kind": kind, "image": out_name, "keyframes": keyframes,
                     "prompt": prompt.to_json()}
    return row


def render_corpus(rows: list[dict], cfg: RenderConfig, gateway: Gateway,
                  media_dir: Union[str, Path], out_dir: Union[str, Path],
                  seed: int = 0, workers: int = 1) -> list[dict]:
    media_dir = Path(media_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(row: dict) -> dict:
        return render_sample(dict(row), cfg, gateway, media_dir, out_dir, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, rows))
    return [work(r) for r in rows]
