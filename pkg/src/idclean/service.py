"""HTTP review service: browse flagged identities, record verdicts, apply.

Local-first and single-session: bind to loopback unless a shared token is
configured. The service never mutates the source manifest or embeddings;
it writes only the verdict log (append + fsync before every acknowledgment)
and the explicit output paths of the apply step. Verdict writes serialize
through one lock; apply is single-flight.
"""

from __future__ import annotations

import json
import mimetypes
import struct
import threading
import zlib
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ._util import atomic_write_text
from .cleaning import (
    MislabelType,
    UnknownIdentityError,
    UnknownSampleError,
    Verdict,
    VerdictError,
    VerdictLog,
    apply_plan,
    compile_plan,
    record_verdict,
    write_removal_list,
)
from .dataset_io import DatasetManifest, EmbeddingMatrix, save_manifest
from .outliers import OutlierReport
from .reporting import id_score_histogram, summary, verification_roc
from .scoring import IdentityScore


def _placeholder_png(size: int = 96, shade: int = 204) -> bytes:
    """Minimal flat-gray PNG, served for samples without an image file."""
    raw = b"".join(b"\x00" + bytes((shade,)) * (3 * size) for _ in range(size))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload))
        )

    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )


PLACEHOLDER_PNG = _placeholder_png()


@dataclass
class ReviewSession:
    """Immutable snapshots plus the mutable verdict log of one review run."""

    report: OutlierReport
    manifest: DatasetManifest
    verdicts: VerdictLog
    image_root: Path | None = None
    out_dir: Path = Path(".")
    scores: list[IdentityScore] | None = None
    embeddings: EmbeddingMatrix | None = None
    token: str | None = None


class VerdictIn(BaseModel):
    identity_id: str
    mislabel_type: str
    removed_samples: list[str] = []
    reviewer: str = "anonymous"


class ApplyIn(BaseModel):
    min_remaining: int = 3


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _verdict_payload(v: Verdict) -> dict:
    return {
        "identity_id": v.identity_id,
        "mislabel_type": v.mislabel_type.value,
        "removed_samples": sorted(v.removed_samples),
        "reviewer": v.reviewer,
        "timestamp": v.timestamp.astimezone(timezone.utc)
        .isoformat(timespec="microseconds")
        .replace("+00:00", "Z"),
    }


def create_app(session: ReviewSession, ui_dir: Path | None = None) -> FastAPI:
    entries = {e.identity_id: e for e in session.report.entries}
    samples_by_id = {s.sample_id: s for s in session.manifest.samples}
    verdict_lock = threading.Lock()
    apply_lock = threading.Lock()
    roc_cache: dict = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        # every append is already fsynced, nothing buffered to flush
        yield

    app = FastAPI(title="idclean review service", lifespan=lifespan)
    app.state.apply_lock = apply_lock  # exposed so callers can observe single-flight

    @app.middleware("http")
    async def require_token(request: Request, call_next):
        path = request.url.path
        if session.token and (path.startswith("/api/") or path.startswith("/img/")):
            if request.headers.get("x-review-token") != session.token:
                return _error(401, "missing or invalid review token")
        return await call_next(request)

    def _status(identity_id: str, effective: dict[str, Verdict]) -> str:
        return "done" if identity_id in effective else "pending"

    @app.get("/api/queue")
    def api_queue():
        effective = session.verdicts.effective()
        return [
            {
                "identity_id": e.identity_id,
                "id_score": e.id_score,
                "queue_length": len(e.review_queue),
                "status": _status(e.identity_id, effective),
            }
            for e in session.report.entries
        ]

    @app.get("/api/identity/{identity_id}")
    def api_identity(identity_id: str):
        entry = entries.get(identity_id)
        if entry is None:
            return _error(404, f"identity '{identity_id}' is not flagged")
        effective = session.verdicts.effective()
        queued = set(entry.review_queue)
        members = session.manifest.samples_of(identity_id)
        verdict = effective.get(identity_id)
        return {
            "identity_id": identity_id,
            "id_score": entry.id_score,
            "sample_count": entry.sample_count,
            "pair_count": entry.pair_count,
            "no_specific_pair": not entry.flagged_pairs,
            "status": _status(identity_id, effective),
            "review_queue": entry.review_queue,
            "samples": [
                {
                    "sample_id": s.sample_id,
                    "image_path": s.image_path,
                    "image_url": f"/img/{s.sample_id}",
                    "in_queue": s.sample_id in queued,
                    "frequency": entry.image_frequency.get(s.sample_id, 0),
                }
                for s in members
            ],
            "flagged_pairs": [
                {
                    "a": p.a,
                    "b": p.b,
                    "distance": p.distance,
                    "a_url": f"/img/{p.a}",
                    "b_url": f"/img/{p.b}",
                }
                for p in entry.flagged_pairs
            ],
            "effective_verdict": _verdict_payload(verdict) if verdict else None,
        }

    @app.post("/api/verdict")
    def api_verdict(body: VerdictIn):
        if body.identity_id not in entries:
            return _error(404, f"identity '{body.identity_id}' is not flagged")
        try:
            kind = MislabelType(body.mislabel_type)
        except ValueError:
            allowed = ", ".join(t.value for t in MislabelType)
            return _error(400, f"unknown mislabel_type '{body.mislabel_type}' (one of: {allowed})")
        try:
            verdict = Verdict(
                identity_id=body.identity_id,
                mislabel_type=kind,
                removed_samples=frozenset(body.removed_samples),
                reviewer=body.reviewer,
                timestamp=datetime.now(timezone.utc),
            )
            with verdict_lock:
                record_verdict(
                    session.verdicts,
                    verdict,
                    manifest=session.manifest,
                    reviewable=entries.keys(),
                )
        except UnknownIdentityError as exc:
            return _error(404, str(exc))
        except (UnknownSampleError, VerdictError) as exc:
            return _error(400, str(exc))
        return {"ok": True, "effective_verdict": _verdict_payload(verdict)}

    @app.get("/api/progress")
    def api_progress():
        effective = session.verdicts.effective()
        done = sum(1 for ident in entries if ident in effective)
        total = len(entries)
        return {"pending": total - done, "done": done, "total": total}

    @app.post("/api/apply")
    def api_apply(body: ApplyIn):
        if not apply_lock.acquire(blocking=False):
            return _error(409, "an apply is already in flight")
        try:
            effective = session.verdicts.effective()
            if not effective:
                return _error(400, "no verdicts recorded yet")
            try:
                plan = compile_plan(session.verdicts, session.manifest, body.min_remaining)
            except VerdictError as exc:
                return _error(400, str(exc))
            cleaned, removals = apply_plan(session.manifest, plan)
            census = summary(
                session.manifest,
                cleaned,
                removals,
                verdict_log=session.verdicts,
                flagged_count=len(session.report.entries),
            )
            session.out_dir.mkdir(parents=True, exist_ok=True)
            save_manifest(cleaned, session.out_dir / "cleaned_manifest.csv")
            write_removal_list(removals, session.out_dir / "removals.csv")
            atomic_write_text(
                session.out_dir / "summary.json", json.dumps(census, indent=2) + "\n"
            )
            return census
        finally:
            apply_lock.release()

    @app.get("/api/report/histogram")
    def api_histogram(bins: int = 50):
        if session.scores is None:
            return _error(404, "no scores file was supplied to the service")
        hist = id_score_histogram(session.scores, bins)
        return {
            "bins": [
                {"lo": hist.bin_edges[k], "hi": hist.bin_edges[k + 1], "count": c}
                for k, c in enumerate(hist.counts)
            ],
            "total": hist.total,
        }

    @app.get("/api/report/roc")
    def api_roc(negatives: int | None = None, seed: int = 0):
        if session.embeddings is None:
            return _error(404, "no embedding file was supplied to the service")
        key = (negatives, seed)
        if key not in roc_cache:
            roc_cache[key] = verification_roc(
                session.manifest, session.embeddings, negative_pair_count=negatives, seed=seed
            )
        roc = roc_cache[key]
        return {
            "points": [
                {"threshold": t, "tpr": p, "fpr": f} for t, p, f in roc.points
            ],
            "auc": roc.auc,
            "positives": roc.positives,
            "negatives": roc.negatives,
        }

    @app.get("/img/{sample_id:path}")
    def img(sample_id: str):
        rec = samples_by_id.get(sample_id)
        if rec is None:
            return _error(404, f"unknown sample '{sample_id}'")
        if session.image_root is None:
            return Response(PLACEHOLDER_PNG, media_type="image/png")
        root = session.image_root.resolve()
        target = (session.image_root / rec.image_path).resolve()
        if not target.is_relative_to(root):
            return _error(403, "image path escapes the image root")
        if not target.is_file():
            return Response(PLACEHOLDER_PNG, media_type="image/png")
        media_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return Response(target.read_bytes(), media_type=media_type)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def root():
            return {
                "service": "idclean review",
                "flagged": len(entries),
                "endpoints": [
                    "/api/queue",
                    "/api/identity/{id}",
                    "/api/verdict",
                    "/api/progress",
                    "/api/apply",
                    "/api/report/histogram",
                    "/api/report/roc",
                    "/img/{sample_id}",
                ],
            }

    return app
