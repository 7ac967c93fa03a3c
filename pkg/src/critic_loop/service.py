"""HTTP API for human adjudication of audit batches.

The server is the source of truth: the browser UI holds no authoritative
state. Judgment writes are serialized; reads fold the journal at request
time. Endpoints sit under ``/api`` with CORS enabled for the UI origin and
an optional static bearer token.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .audit import (
    BASIS_OF_JUDGMENT_NOTICE,
    AuditBatch,
    AuditJudgment,
    JudgmentJournal,
    error_rate_table,
    judgment_to_dict,
    record_judgment,
)
from .codebook import Codebook
from .corpus import Corpus
from .exceptions import ValidationError
from .store import system_clock


@dataclass
class AuditService:
    """Shared state behind the HTTP endpoints."""

    batches: dict[str, AuditBatch]
    journal: JudgmentJournal
    codebook: Codebook
    corpus: Corpus
    write_lock: threading.Lock = field(default_factory=threading.Lock)

    def batch(self, batch_id: str) -> AuditBatch:
        if batch_id not in self.batches:
            raise HTTPException(status_code=404, detail=f"unknown batch {batch_id!r}")
        return self.batches[batch_id]

    def judged_passages(self, batch_id: str, rater_id: str | None = None) -> set[str]:
        out = set()
        for (bid, passage_id, rater), _ in self.journal.effective().items():
            if bid == batch_id and (rater_id is None or rater == rater_id):
                out.add(passage_id)
        return out


class JudgmentIn(BaseModel):
    passage_id: str
    valid: bool
    error_classes: list[str] = []
    notes: str = ""
    rater_id: str = "default"


def create_app(
    service: AuditService,
    cors_origins: list[str] | None = None,
    token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="audit adjudication API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_token(authorization: str | None = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guarded = [Depends(require_token)]

    @app.get("/api/batches", dependencies=guarded)
    def list_batches() -> list[dict]:
        out = []
        for batch in service.batches.values():
            judged = service.judged_passages(batch.batch_id)
            out.append(
                {
                    "batch_id": batch.batch_id,
                    "code_id": batch.code_id,
                    "total": len(batch.items),
                    "judged": len(judged & set(batch.passage_ids())),
                }
            )
        return out

    @app.get("/api/batches/{batch_id}/next", dependencies=guarded)
    def next_item(batch_id: str, rater: str = "default") -> dict:
        batch = service.batch(batch_id)
        judged = service.judged_passages(batch_id, rater)
        progress = {"judged": len(judged), "total": len(batch.items)}
        for item in batch.items:
            if item.passage_id in judged:
                continue
            code = service.codebook.code(batch.code_id)
            try:
                body = service.corpus.get(item.passage_id).body
            except KeyError:
                raise HTTPException(
                    status_code=500,
                    detail=f"passage {item.passage_id!r} missing from corpus",
                ) from None
            return {
                "done": False,
                "progress": progress,
                "item": {
                    "batch_id": batch_id,
                    "passage_id": item.passage_id,
                    "code_id": batch.code_id,
                    "passage_body": body,
                    "code": {
                        "title": code.title,
                        "definition": code.definition,
                        "factors": list(code.factors),
                        "exclusions": list(code.exclusions),
                    },
                    "rationale": item.rationale,
                    "basis_notice": BASIS_OF_JUDGMENT_NOTICE,
                },
            }
        return {"done": True, "progress": progress, "item": None}

    @app.post("/api/batches/{batch_id}/judgments", dependencies=guarded)
    def submit_judgment(batch_id: str, body: JudgmentIn) -> dict:
        batch = service.batch(batch_id)
        try:
            judgment = AuditJudgment(
                batch_id=batch_id,
                passage_id=body.passage_id,
                code_id=batch.code_id,
                valid=body.valid,
                error_classes=frozenset(body.error_classes),
                notes=body.notes,
                rater_id=body.rater_id,
                created_at=system_clock(),
            )
            with service.write_lock:
                record_judgment(service.journal, batch, judgment)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"stored": True, "judgment": judgment_to_dict(judgment)}

    @app.get("/api/batches/{batch_id}/export", dependencies=guarded)
    def export_batch(batch_id: str) -> PlainTextResponse:
        import json

        batch = service.batch(batch_id)
        lines = []
        for (bid, _, _), judgment in sorted(service.journal.effective().items()):
            if bid == batch.batch_id:
                lines.append(json.dumps(judgment_to_dict(judgment), sort_keys=True, ensure_ascii=False))
        return PlainTextResponse(
            "\n".join(lines) + ("\n" if lines else ""),
            media_type="application/x-ndjson",
        )

    @app.get("/api/tables/error-rates", dependencies=guarded)
    def error_rates() -> dict:
        rows = error_rate_table(service.journal.effective().values())
        return {
            "rows": [
                {
                    "code_id": r.code_id,
                    "md_rate": r.md_rate,
                    "mi_rate": r.mi_rate,
                    "total_rate": r.total_rate,
                    "n": r.n,
                }
                for r in rows
            ]
        }

    return app
