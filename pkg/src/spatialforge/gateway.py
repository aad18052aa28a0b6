"""Pluggable backend gateway with retries, in-flight limits, and record/replay."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

OP_KINDS = ("Answer", "Judge", "Generate", "Synthesize")
MODES = ("live", "record", "replay")


class GatewayError(Exception):
    pass


class ReplayMiss(GatewayError):
    """Strict replay found no cassette entry for the request."""


class ExhaustedRetries(GatewayError):
    """Transport kept failing through every allowed attempt."""


@dataclass(frozen=True)
class BackendRequest:
    backend_id: str
    op_kind: str
    payload: dict
    seed: int = 0


@dataclass(frozen=True)
class BackendResponse:
    status: str  # Ok | Refused | TransportError
    body: str = ""
    latency_ms: int = 0

    def to_json(self) -> dict:
        return {"status": self.status, "body": self.body, "latency_ms": self.latency_ms}

    @classmethod
    def from_json(cls, d: dict) -> "BackendResponse":
        return cls(status=d["status"], body=d.get("body", ""),
                   latency_ms=int(d.get("latency_ms", 0)))


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_s: float = 0.0
    backoff_multiplier: float = 2.0
    max_in_flight: int = 8


def canonical_bytes(doc) -> bytes:
    """Canonical serialization: sorted keys, no insignificant whitespace,
    shortest round-trip decimal floats (json repr)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def canonical_hash(req: BackendRequest) -> str:
    """64-bit hex digest, a pure function of (backend_id, op_kind, payload, seed)."""
    doc = {"backend_id": req.backend_id, "op_kind": req.op_kind,
           "payload": req.payload, "seed": req.seed}
    return hashlib.sha256(canonical_bytes(doc)).hexdigest()[:16]


@dataclass
class CassetteEntry:
    request_hash: str
    backend_id: str
    request_echo: dict
    response: BackendResponse

    def to_json(self) -> dict:
        return {"request_hash": self.request_hash, "backend_id": self.backend_id,
                "request_echo": self.request_echo, "response": self.response.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "CassetteEntry":
        return cls(request_hash=d["request_hash"], backend_id=d["backend_id"],
                   request_echo=d.get("request_echo", {}),
                   response=BackendResponse.from_json(d["response"]))


class Cassette:
    """Append-only request/response log keyed by canonical request hash."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, CassetteEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        e = CassetteEntry.from_json(json.loads(line))
                        self._entries[e.request_hash] = e

    def lookup(self, request_hash: str) -> Optional[CassetteEntry]:
        return self._entries.get(request_hash)

    def append(self, entry: CassetteEntry) -> None:
        with self._lock:
            self._entries[entry.request_hash] = entry
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_json(), ensure_ascii=False,
                                        sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


Transport = Callable[[BackendRequest], BackendResponse]


class HttpTransport:
    """Live transport: HTTP POST with a JSON body to a per-backend base URL."""

    def __init__(self, backends: dict, timeout_s: float = 60.0):
        import httpx
        self._backends = backends
        self._client = httpx.Client(timeout=timeout_s)

    def __call__(self, req: BackendRequest) -> BackendResponse:
        cfg = self._backends.get(req.backend_id)
        if cfg is None or not cfg.get("base_url"):
            return BackendResponse(status="TransportError",
                                   body=f"no base_url for backend {req.backend_id!r}")
        headers = dict(cfg.get("headers", {}))
        key_env = cfg.get("api_key_env")
        if key_env and os.environ.get(key_env):
            headers.setdefault("Authorization", f"Bearer {os.environ[key_env]}")
        body = {"op_kind": req.op_kind, "payload": req.payload, "seed": req.seed}
        start = time.monotonic()
        try:
            resp = self._client.post(cfg["base_url"], json=body, headers=headers)
        except Exception as exc:  # network failures are data, not crashes
            return BackendResponse(status="TransportError", body=str(exc))
        latency = int((time.monotonic() - start) * 1000)
        if resp.status_code >= 500:
            return BackendResponse(status="TransportError",
                                   body=f"HTTP {resp.status_code}", latency_ms=latency)
        if resp.status_code >= 400:
            return BackendResponse(status="Refused", body=resp.text, latency_ms=latency)
        return BackendResponse(status="Ok", body=resp.text, latency_ms=latency)


class Gateway:
    """Shared-safe access point for all model backends.

    Modes: live (transport + retry), record (live + cassette append),
    replay (cassette lookup only, never touches the transport).
    """

    def __init__(self, mode: str = "replay",
                 transport: Optional[Transport] = None,
                 cassette: Optional[Cassette] = None,
                 policy: Optional[RetryPolicy] = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "replay" and cassette is None:
            raise ValueError("replay mode requires a cassette")
        if mode in ("live", "record") and transport is None:
            raise ValueError(f"{mode} mode requires a transport")
        self.mode = mode
        self.transport = transport
        self.cassette = cassette
        self.policy = policy or RetryPolicy()
        self._sems: dict[str, threading.BoundedSemaphore] = {}
        self._sems_lock = threading.Lock()

    def _sem(self, backend_id: str) -> threading.BoundedSemaphore:
        with self._sems_lock:
            sem = self._sems.get(backend_id)
            if sem is None:
                sem = threading.BoundedSemaphore(self.policy.max_in_flight)
                self._sems[backend_id] = sem
            return sem

    def invoke(self, req: BackendRequest) -> BackendResponse:
        if self.mode == "replay":
            entry = self.cassette.lookup(canonical_hash(req))
            if entry is None:
                raise ReplayMiss(f"no cassette entry for {req.backend_id}/{req.op_kind} "
                                 f"hash={canonical_hash(req)}")
            return entry.response

        with self._sem(req.backend_id):
            resp = self._call_with_retry(req)
        if self.mode == "record" and self.cassette is not None:
            echo = {"backend_id": req.backend_id, "op_kind": req.op_kind,
                    "payload": req.payload, "seed": req.seed}
            self.cassette.append(CassetteEntry(
                request_hash=canonical_hash(req), backend_id=req.backend_id,
                request_echo=echo, response=resp))
        return resp

    def _call_with_retry(self, req: BackendRequest) -> BackendResponse:
        delay = self.policy.backoff_base_s
        last: Optional[BackendResponse] = None
        for attempt in range(self.policy.max_attempts):
            resp = self.transport(req)
            if resp.status != "TransportError":
                return resp  # Ok and Refused are both terminal
            last = resp
            if attempt + 1 < self.policy.max_attempts and delay > 0:
                time.sleep(delay)
                delay *= self.policy.backoff_multiplier
        raise ExhaustedRetries(
            f"{req.backend_id}/{req.op_kind} failed {self.policy.max_attempts} "
            f"attempts: {last.body if last else ''}")
