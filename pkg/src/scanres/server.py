"""HTTP service hosting the rating API and the static rating UI.

Each rater receives every (region, dpi) stimulus exactly once, in an order
derived from the session seed and the rater id. Accepted ratings are
appended to a JSONL ledger and fsync'd before the 201 response, so a killed
server loses at most the in-flight record.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .corpus import (
    CorpusManifest,
    RatingRecord,
    SCORES,
    load_ratings,
    rating_to_json,
    _load_regions,
)
from .raster import DPI_LEVELS, GrayImage, emulate_dpi

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>scanres rating session</title></head>
<body><h1>scanres rating service</h1>
<p>The rating UI bundle is not installed. The JSON API is live under
<code>/api/&hellip;</code>; see the README for the endpoint list.</p>
</body></html>
"""


def _png_bytes(img: GrayImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels)).save(buf, format="PNG")
    return buf.getvalue()


@dataclass(frozen=True)
class Stimulus:
    region_id: str
    dpi: int
    png: bytes
    reference_png: bytes


class RatingSession:
    """All mutable session state; one ledger file, many raters."""

    def __init__(self, manifest: CorpusManifest, ratings_path, seed: int = 0):
        self.seed = seed
        self.ratings_path = Path(ratings_path)
        self.lock = threading.Lock()
        self.stimuli: dict[tuple, Stimulus] = {}
        for region_id, crop in sorted(_load_regions(manifest)):
            for dpi in sorted(DPI_LEVELS):
                pair = emulate_dpi(crop, dpi)
                self.stimuli[(region_id, dpi)] = Stimulus(
                    region_id=region_id,
                    dpi=dpi,
                    png=_png_bytes(pair.at_base),
                    reference_png=_png_bytes(crop),
                )
        self.keys = sorted(self.stimuli)
        self.orders: dict[str, list] = {}
        self.rated: dict[str, set] = {}
        self._restore()

    def _restore(self):
        if not self.ratings_path.exists():
            return
        for rec in load_ratings(self.ratings_path):
            self.rated.setdefault(rec.rater_id, set()).add((rec.region_id, rec.dpi))

    def order_for(self, rater: str) -> list:
        if rater not in self.orders:
            digest = int.from_bytes(
                hashlib.sha256(rater.encode("utf-8")).digest()[:8], "big"
            )
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(digest,))
            )
            perm = rng.permutation(len(self.keys))
            self.orders[rater] = [self.keys[i] for i in perm]
        return self.orders[rater]

    def task_id(self, rater: str, index: int) -> str:
        return f"{rater}:{index:04d}"

    def parse_task(self, task_id: str):
        """Returns (rater, index, key) or None for unknown ids."""
        rater, sep, idx = task_id.rpartition(":")
        if not sep or not idx.isdigit():
            return None
        index = int(idx)
        order = self.order_for(rater)
        if index >= len(order):
            return None
        return rater, index, order[index]

    def next_task(self, rater: str):
        order = self.order_for(rater)
        done = self.rated.get(rater, set())
        for index, key in enumerate(order):
            if key not in done:
                return index, key
        return None

    def progress(self, rater: str):
        done = len(self.rated.get(rater, set()))
        return {"done": done, "total": len(self.keys)}

    def append_rating(self, rec: RatingRecord):
        self.ratings_path.parent.mkdir(parents=True, exist_ok=True)
        with self.ratings_path.open("a", encoding="utf-8") as fh:
            fh.write(rating_to_json(rec) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.rated.setdefault(rec.rater_id, set()).add((rec.region_id, rec.dpi))


def build_app(
    manifest: CorpusManifest,
    ratings_path,
    seed: int = 0,
    reference: bool = False,
    static_dir=None,
) -> FastAPI:
    session = RatingSession(manifest, ratings_path, seed)
    app = FastAPI(title="scanres rating service")
    app.state.session = session

    def task_payload(rater: str, index: int, key) -> dict:
        region_id, dpi = key
        tid = session.task_id(rater, index)
        payload = {
            "task_id": tid,
            "region_id": region_id,
            "dpi": dpi,
            "stimulus": f"/api/stimulus/{tid}",
            "sequence_index": index,
            "total": len(session.keys),
        }
        if reference:
            payload["reference"] = f"/api/reference/{tid}"
        return payload

    @app.get("/api/session/{rater}/next")
    def next_task(rater: str):
        with session.lock:
            nxt = session.next_task(rater)
            if nxt is None:
                return Response(status_code=204)
            index, key = nxt
            return JSONResponse(task_payload(rater, index, key))

    @app.get("/api/progress/{rater}")
    def progress(rater: str):
        with session.lock:
            return JSONResponse(session.progress(rater))

    @app.get("/api/stimulus/{task_id}")
    def stimulus(task_id: str):
        parsed = session.parse_task(task_id)
        if parsed is None:
            return JSONResponse({"error": "unknown task"}, status_code=404)
        _, _, key = parsed
        return Response(session.stimuli[key].png, media_type="image/png")

    @app.get("/api/reference/{task_id}")
    def reference_image(task_id: str):
        parsed = session.parse_task(task_id)
        if parsed is None:
            return JSONResponse({"error": "unknown task"}, status_code=404)
        _, _, key = parsed
        return Response(session.stimuli[key].reference_png, media_type="image/png")

    @app.post("/api/ratings")
    async def post_rating(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse({"error": "invalid JSON body"}, status_code=400)
        task_id = body.get("task_id")
        rater_id = body.get("rater_id")
        score = body.get("score")
        if not isinstance(task_id, str) or not isinstance(rater_id, str):
            return JSONResponse({"error": "task_id and rater_id required"}, 400)
        if score not in SCORES:
            return JSONResponse(
                {"error": f"score must be one of {list(SCORES)}"}, status_code=400
            )
        parsed = session.parse_task(task_id)
        if parsed is None:
            return JSONResponse({"error": "unknown task"}, status_code=404)
        task_rater, _, key = parsed
        if task_rater != rater_id:
            return JSONResponse({"error": "task belongs to another rater"}, 404)
        with session.lock:
            if key in session.rated.get(rater_id, set()):
                return JSONResponse({"error": "task already rated"}, status_code=409)
            rec = RatingRecord(
                region_id=key[0],
                dpi=key[1],
                rater_id=rater_id,
                score=score,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            session.append_rating(rec)
            return JSONResponse({"accepted": True, "task_id": task_id}, status_code=201)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return HTMLResponse(_FALLBACK_PAGE)

    return app
