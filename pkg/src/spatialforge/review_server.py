"""Review API: paginated queue, item detail, idempotent decision posting, stats."""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Optional, Union

from fastapi import Depends, FastAPI, HTTPException, Header, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .assembler import NotFound, ReviewDecision, ReviewLog
from .core import read_jsonl


class DecisionBody(BaseModel):
    decision: str
    reviewer: str
    revision: int
    reason: str = ""


class ReviewStore:
    """Queue items plus the append-only decision log, single-writer."""

    def __init__(self, queue_path: Union[str, Path],
                 log_path: Union[str, Path]):
        self.items: dict[str, dict] = {}
        self.order: list[str] = []
        for row in read_jsonl(queue_path):
            sid = row["sample_id"]
            self.items[sid] = row
            self.order.append(sid)
        self.log = ReviewLog(log_path)
        self._lock = threading.Lock()

    def status_of(self, sid: str) -> str:
        return self.log.status_of(sid)

    def summaries(self, status: Optional[str], corpus: Optional[str],
                  category: Optional[str]) -> list[dict]:
        out = []
        for sid in self.order:
            item = self.items[sid]
            st = self.status_of(sid)
            if status and st != status:
                continue
            if corpus and item.get("corpus") != corpus:
                continue
            if category and item.get("task_category") != category:
                continue
            out.append({
                "sample_id": sid,
                "status": st,
                "corpus": item.get("corpus"),
                "task_category": item.get("task_category"),
                "mode": (item.get("record") or {}).get("mode"),
            })
        return out

    def decide(self, sid: str, body: DecisionBody) -> dict:
        with self._lock:
            existing = [e for e in self.log.entries
                        if e.sample_id == sid and e.revision == body.revision]
            d = ReviewDecision(sample_id=sid, decision=body.decision,
                               reviewer=body.reviewer, revision=body.revision,
                               reason=body.reason)
            if existing and existing[0] != d:
                raise HTTPException(status_code=409,
                                    detail="revision already used with a "
                                           "different decision")
            status = self.log.apply(set(self.items), d)
        return {"sample_id": sid, "status": status, "revision": body.revision}

    def stats(self) -> dict:
        counts = {"Pending": 0, "Approved": 0, "Rejected": 0}
        by_corpus: dict[str, dict] = {}
        for sid in self.order:
            st = self.status_of(sid)
            counts[st] = counts.get(st, 0) + 1
            corpus = self.items[sid].get("corpus") or "OTHER"
            c = by_corpus.setdefault(corpus,
                                     {"Pending": 0, "Approved": 0, "Rejected": 0})
            c[st] = c.get(st, 0) + 1
        return {"total": len(self.order), "by_status": counts,
                "by_corpus": by_corpus, "decisions": len(self.log.entries)}


def create_app(queue_path: Union[str, Path], log_path: Union[str, Path],
               static_dir: Optional[Union[str, Path]] = None,
               token: Optional[str] = None) -> FastAPI:
    store = ReviewStore(queue_path, log_path)
    token = token if token is not None else os.environ.get("REVIEW_TOKEN")
    app = FastAPI(title="review queue")

    def check_auth(authorization: Optional[str] = Header(default=None)) -> None:
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid token")

    @app.get("/api/queue")
    def queue(status: Optional[str] = Query(default=None),
              corpus: Optional[str] = Query(default=None),
              category: Optional[str] = Query(default=None),
              limit: int = Query(default=50, ge=1, le=500),
              offset: int = Query(default=0, ge=0),
              _=Depends(check_auth)):
        rows = store.summaries(status, corpus, category)
        return {"total": len(rows), "items": rows[offset:offset + limit],
                "limit": limit, "offset": offset}

    @app.get("/api/samples/{sample_id}")
    def sample(sample_id: str, _=Depends(check_auth)):
        item = store.items.get(sample_id)
        if item is None:
            raise HTTPException(status_code=404, detail="unknown sample")
        out = dict(item)
        out["status"] = store.status_of(sample_id)
        return out

    @app.post("/api/samples/{sample_id}/decision")
    def decide(sample_id: str, body: DecisionBody, _=Depends(check_auth)):
        if body.decision not in ("Approved", "Rejected"):
            raise HTTPException(status_code=422,
                                detail="decision must be Approved or Rejected")
        try:
            return store.decide(sample_id, body)
        except NotFound:
            raise HTTPException(status_code=404, detail="unknown sample")

    @app.get("/api/stats")
    def stats(_=Depends(check_auth)):
        return store.stats()

    @app.exception_handler(NotFound)
    def not_found(_, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app


def serve(queue_path: str, log_path: str, port: int = 8000,
          static_dir: Optional[str] = None) -> None:
    import uvicorn
    app = create_app(queue_path, log_path, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
