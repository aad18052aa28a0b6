"""Pure numeric kernels: hybrid attention masks, rectified-flow losses,
timestep shifting, schedules, and EMA. No neural network anywhere."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TEXT = "Text"
IMAGE = "Image"


class DimMismatch(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class StepOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class TokenSpan:
    kind: str  # Text | Image
    length: int

    def __post_init__(self):
        if self.kind not in (TEXT, IMAGE):
            raise ValueError(f"span kind must be Text or Image, got {self.kind}")
        if self.length < 1:
            raise ValueError("span length must be >= 1")


def build_hybrid_mask(spans: Sequence[TokenSpan]) -> np.ndarray:
    """allowed[i][j] = causal (j <= i) OR i, j inside the same Image span."""
    n = sum(s.length for s in spans)
    mask = np.tril(np.ones((n, n), dtype=bool))
    offset = 0
    for s in spans:
        if s.kind == IMAGE:
            mask[offset:offset + s.length, offset:offset + s.length] = True
        offset += s.length
    return mask


def interpolate(z0: np.ndarray, z1: np.ndarray, t: float) -> np.ndarray:
    """Linear interpolant t*z1 + (1-t)*z0."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise DimMismatch(f"{z0.shape} vs {z1.shape}")
    return t * z1 + (1.0 - t) * z0


def flow_loss(v_pred: np.ndarray, z0: np.ndarray, z1: np.ndarray) -> float:
    """Mean squared error of the predicted velocity against z1 - z0."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if not (v_pred.shape == z0.shape == z1.shape):
        raise DimMismatch(f"{v_pred.shape}, {z0.shape}, {z1.shape}")
    diff = v_pred - (z1 - z0)
    return float(np.mean(diff * diff))


def flow_loss_grad(v_pred: np.ndarray, z0: np.ndarray,
                   z1: np.ndarray) -> np.ndarray:
    """Analytic gradient of flow_loss w.r.t. v_pred: 2*(v_pred - (z1-z0))/N."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if not (v_pred.shape == z0.shape == z1.shape):
        raise DimMismatch(f"{v_pred.shape}, {z0.shape}, {z1.shape}")
    return 2.0 * (v_pred - (z1 - z0)) / v_pred.size


def shift_timestep(u: float, mu: float, reciprocal: bool = False) -> float:
    """Bias a uniform draw toward the high-noise (small t) regime.

    Default map t = u / (mu - (mu-1)*u); the reciprocal convention
    t = mu*u / (1 + (mu-1)*u) is available behind the flag.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    if mu < 1.0:
        raise ValueError("mu must be >= 1")
    if reciprocal:
        return mu * u / (1.0 + (mu - 1.0) * u)
    return u / (mu - (mu - 1.0) * u)


def cross_entropy(logits: np.ndarray, targets: Sequence[int],
                  loss_mask: Optional[Sequence[int]] = None) -> float:
    """Mean negative log-softmax of the targets over unmasked positions."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise DimMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= logits.shape[1]):
        raise ValueError("targets outside vocabulary")
    if loss_mask is None:
        mask = np.ones(targets.shape[0], dtype=bool)
    else:
        mask = np.asarray(loss_mask, dtype=bool)
        if mask.shape[0] != targets.shape[0]:
            raise DimMismatch("mask length mismatch")
    if not mask.any():
        raise EmptyMask("no unmasked positions")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    nll = logz - shifted[np.arange(targets.shape[0]), targets]
    return float(nll[mask].mean())


@dataclass(frozen=True)
class JointLossConfig:
    lambda_text: float = 1.0
    lambda_img: float = 1.0
    mu: float = 3.0
    dropout_p: float = 0.3
    ema_decay: float = 0.995

    def __post_init__(self):
        if self.lambda_text < 0 or self.lambda_img < 0:
            raise ValueError("balancing coefficients must be non-negative")
        if self.mu < 1.0:
            raise ValueError("mu must be >= 1")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must lie in [0, 1]")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")


def joint_loss(ce: float, fl: float, cfg: JointLossConfig) -> float:
    return cfg.lambda_text * ce + cfg.lambda_img * fl


def cond_dropout(c, p: float, rng: np.random.Generator):
    """Drop the condition token with probability p under the given generator."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p > 0.0 and rng.random() < p:
        return None
    return c


@dataclass(frozen=True)
class ScheduleConfig:
    peak_lr: float
    min_lr: float
    total_steps: int
    warmup_steps: int

    def __post_init__(self):
        if not 0 < self.min_lr <= self.peak_lr:
            raise ValueError("need 0 < min_lr <= peak_lr")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("need 0 <= warmup_steps < total_steps")


# Hyperparameters of the two training phases, kept as named configs.
WARMUP_PHASE_SCHEDULE = ScheduleConfig(peak_lr=2e-5, min_lr=2e-6,
                                       total_steps=10_000, warmup_steps=500)
JOINT_PHASE_SCHEDULE = ScheduleConfig(peak_lr=1e-5, min_lr=1e-6,
                                      total_steps=4_000, warmup_steps=200)


def lr_at(step: int, cfg: ScheduleConfig) -> float:
    """Linear warmup from 0 to peak, then cosine decay from peak to min."""
    if not 0 <= step <= cfg.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (
        1.0 + math.cos(math.pi * progress))


def ema_update(ema_state: np.ndarray, params: np.ndarray,
               decay: float) -> np.ndarray:
    """ema' = decay*ema + (1-decay)*params, elementwise."""
    ema_state = np.asarray(ema_state, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if ema_state.shape != params.shape:
        raise DimMismatch(f"{ema_state.shape} vs {params.shape}")
    return decay * ema_state + (1.0 - decay) * params


def _brute_force_mask(spans: Sequence[TokenSpan]) -> np.ndarray:
    """Independent per-cell evaluation of the mask rule, for self-checking."""
    span_of = []
    for idx, s in enumerate(spans):
        span_of.extend([(idx, s.kind)] * s.length)
    n = len(span_of)
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            same_image = (span_of[i][0] == span_of[j][0]
                          and span_of[i][1] == IMAGE)
            mask[i, j] = (j <= i) or same_image
    return mask


def selfcheck(verbose: bool = True) -> bool:
    """Run the kernel property suite; prints one line per check."""
    rng = np.random.default_rng(7)
    checks: list[tuple[str, bool]] = []

    ok = True
    for _ in range(200):
        spans = []
        total = 0
        target = int(rng.integers(1, 65))
        while total < target:
            length = int(rng.integers(1, 9))
            spans.append(TokenSpan(kind=TEXT if rng.random() < 0.5 else IMAGE,
                                   length=length))
            total += length
        if not np.array_equal(build_hybrid_mask(spans), _brute_force_mask(spans)):
            ok = False
            break
    checks.append(("hybrid mask matches per-cell rule (200 layouts)", ok))

    z0 = rng.normal(size=16)
    z1 = rng.normal(size=16)
    checks.append(("interpolate endpoints",
                   np.allclose(interpolate(z0, z1, 0.0), z0)
                   and np.allclose(interpolate(z0, z1, 1.0), z1)))

    ok = True
    for _ in range(100):
        v = rng.normal(size=12)
        a = rng.normal(size=12)
        b = rng.normal(size=12)
        g = flow_loss_grad(v, a, b)
        eps = 1e-6
        for k in range(12):
            vp = v.copy(); vp[k] += eps
            vm = v.copy(); vm[k] -= eps
            fd = (flow_loss(vp, a, b) - flow_loss(vm, a, b)) / (2 * eps)
            if abs(fd - g[k]) / max(abs(g[k]), 1e-8) > 1e-5:
                ok = False
    checks.append(("flow_loss gradient vs central differences", ok))

    grid = np.linspace(0.0, 1.0, 1000)
    checks.append(("timestep shift skews toward noise (t <= u, mu=3)",
                   all(shift_timestep(float(u), 3.0) <= u + 1e-15 for u in grid)))
    checks.append(("shift_timestep(0.5, 3) == 0.25",
                   abs(shift_timestep(0.5, 3.0) - 0.25) < 1e-15))

    cfg = JOINT_PHASE_SCHEDULE
    mid = cfg.warmup_steps + (cfg.total_steps - cfg.warmup_steps) // 2
    checks.append(("lr schedule anchors",
                   abs(lr_at(cfg.warmup_steps, cfg) - 1e-5) < 1e-18
                   and abs(lr_at(cfg.total_steps, cfg) - 1e-6) < 1e-18
                   and abs(lr_at(mid, cfg) - 5.5e-6) < 1e-12))

    ema = np.zeros(4)
    params = np.ones(4)
    for k in range(1, 501):
        ema = ema_update(ema, params, 0.995)
        if abs(abs(ema[0] - 1.0) - 0.995 ** k) > 1e-12:
            checks.append(("EMA geometric decay", False))
            break
    else:
        checks.append(("EMA geometric decay", True))

    all_ok = all(ok for _, ok in checks)
    if verbose:
        for name, ok in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return all_ok
