"""HTTP service for interactive segmentation sessions.

One read-only model serves many sessions.  Each session holds an uploaded
image (padded to a square and resized to the model side), the click state in
model coordinates, and a snapshot stack enabling undo without re-inference.
Clicks arrive and masks leave in the ORIGINAL image geometry; the pad/resize
transform is inverted on the way out.

Sessions expire after 30 idle minutes and the store holds at most 64 (least
recently used evicted).  Requests to one session are serialized by a
per-session lock.  All error bodies are ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

import io
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .clicks import InteractionState, encode_interaction
from .evaluation import iou
from .imageops import pad_to_square, resize_bilinear, resize_nearest

MAX_IMAGE_SIDE = 2048
SESSION_TTL_SECONDS = 30 * 60
MAX_SESSIONS = 64


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major foreground run-length encoding: {h, w, runs: [start, len, ...]}."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.ravel()
    padded = np.concatenate([[False], flat, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[::2], edges[1::2]
    runs: list[int] = []
    for s, e in zip(starts, ends):
        runs.extend((int(s), int(e - s)))
    return {"h": h, "w": w, "runs": runs}


def rle_decode(obj: dict) -> np.ndarray:
    flat = np.zeros(obj["h"] * obj["w"], dtype=bool)
    runs = obj["runs"]
    for i in range(0, len(runs), 2):
        flat[runs[i]:runs[i] + runs[i + 1]] = True
    return flat.reshape(obj["h"], obj["w"])


@dataclass
class Snapshot:
    prev_mask: Optional[np.ndarray]
    last_prob: Optional[np.ndarray]


@dataclass
class Session:
    id: str
    image: np.ndarray            # (3, side, side) model input
    orig_h: int
    orig_w: int
    square_side: int
    model_side: int
    state: InteractionState
    gt: Optional[np.ndarray]     # original-resolution boolean mask
    history: list[Snapshot] = field(default_factory=list)
    last_prob: Optional[np.ndarray] = None
    last_used: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def to_model_coords(self, row: int, col: int) -> tuple[int, int]:
        scale = self.model_side / self.square_side
        r = min(self.model_side - 1, int((row + 0.5) * scale))
        c = min(self.model_side - 1, int((col + 0.5) * scale))
        return r, c

    def mask_to_original(self, mask: np.ndarray) -> np.ndarray:
        square = resize_nearest(mask.astype(np.float64),
                                self.square_side, self.square_side) > 0.5
        return square[:self.orig_h, :self.orig_w]


def mask_summary(mask: np.ndarray) -> dict:
    area = int(mask.sum())
    if area == 0:
        return {"area": 0, "bbox": None}
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return {"area": area,
            "bbox": [int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])]}


def _decode_png(data: bytes, as_mask: bool = False) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as im:
            if as_mask:
                return np.asarray(im.convert("L")) > 128
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ApiError(400, "decode_error", f"could not decode image: {exc}")


class SessionStore:
    def __init__(self, ttl_seconds: float, max_sessions: int):
        self.ttl = ttl_seconds
        self.cap = max_sessions
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _sweep(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, s in self._sessions.items()
                if now - s.last_used > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def add(self, session: Session) -> None:
        with self._lock:
            self._sweep()
            while len(self._sessions) >= self.cap:
                oldest = min(self._sessions.values(), key=lambda s: s.last_used)
                del self._sessions[oldest.id]
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            self._sweep()
            session = self._sessions.get(sid)
            if session is None:
                raise ApiError(404, "session_not_found", f"unknown session {sid!r}")
            session.last_used = time.monotonic()
            return session

    def delete(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise ApiError(404, "session_not_found", f"unknown session {sid!r}")
            del self._sessions[sid]

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def create_app(model, *, image_side: Optional[int] = None,
               click_radius: Optional[int] = None,
               ttl_seconds: float = SESSION_TTL_SECONDS,
               max_sessions: int = MAX_SESSIONS,
               frontend_dir: Optional[str] = None) -> FastAPI:
    """Build the app around any object with ``predict_prob(image, interaction)``."""
    cfg = getattr(model, "cfg", None)
    side = image_side if image_side is not None else cfg.image_side
    radius = click_radius if click_radius is not None else cfg.click_radius

    app = FastAPI(title="interactive segmentation service")
    store = SessionStore(ttl_seconds, max_sessions)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"code": "invalid_request", "message": str(exc)})

    def prepare(image_rgb: np.ndarray) -> np.ndarray:
        chw = image_rgb.transpose(2, 0, 1)
        return resize_bilinear(pad_to_square(chw), side, side)

    @app.post("/sessions")
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        gt = None
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                raise ApiError(400, "missing_image", "multipart field 'image' required")
            image_rgb = _decode_png(await upload.read())
            gt_upload = form.get("gt")
            if gt_upload is not None:
                gt = _decode_png(await gt_upload.read(), as_mask=True)
        else:
            image_rgb = _decode_png(await request.body())
        h, w = image_rgb.shape[:2]
        if max(h, w) > MAX_IMAGE_SIDE:
            raise ApiError(413, "image_too_large",
                           f"max side is {MAX_IMAGE_SIDE}, got {h}x{w}")
        if gt is not None and gt.shape != (h, w):
            raise ApiError(400, "gt_size_mismatch",
                           f"gt {gt.shape} does not match image {(h, w)}")
        session = Session(
            id=secrets.token_hex(16), image=prepare(image_rgb),
            orig_h=h, orig_w=w, square_side=max(h, w), model_side=side,
            state=InteractionState(side, side), gt=gt)
        store.add(session)
        return {"session_id": session.id, "width": w, "height": h}

    def state_payload(session: Session) -> dict:
        payload: dict = {"clicks": len(session.state.clicks)}
        if session.last_prob is None:
            payload["mask_summary"] = {"area": 0, "bbox": None}
        else:
            orig = session.mask_to_original(session.last_prob > 0.5)
            payload["mask_summary"] = mask_summary(orig)
            if session.gt is not None:
                payload["iou"] = iou(orig, session.gt)
        return payload

    def click_count_headers(session: Session) -> dict[str, str]:
        return {"X-Click-Count": str(len(session.state.clicks))}

    @app.post("/sessions/{sid}/clicks")
    def add_click(sid: str, click: dict):
        session = store.get(sid)
        with session.lock:
            for key in ("row", "col", "positive"):
                if key not in click:
                    raise ApiError(422, "invalid_click", f"missing field {key!r}")
            row, col, positive = int(click["row"]), int(click["col"]), bool(click["positive"])
            if not (0 <= row < session.orig_h and 0 <= col < session.orig_w):
                raise ApiError(422, "out_of_bounds",
                               f"click ({row}, {col}) outside image "
                               f"{session.orig_h}x{session.orig_w}")
            if not session.state.clicks and not positive:
                raise ApiError(422, "first_click_not_positive",
                               "first click must be positive")
            r, c = session.to_model_coords(row, col)
            session.state.add(r, c, positive)
            interaction = encode_interaction(session.state, radius)
            prob = model.predict_prob(session.image, interaction)
            session.last_prob = prob
            session.state.set_prev_mask(prob > 0.5)
            session.history.append(Snapshot(
                prev_mask=session.state.prev_mask.copy(),
                last_prob=prob.copy()))
            return JSONResponse(state_payload(session),
                                headers=click_count_headers(session))

    @app.get("/sessions/{sid}/mask")
    def get_mask(sid: str, format: str = "png"):
        session = store.get(sid)
        with session.lock:
            if session.last_prob is None:
                raise ApiError(409, "no_mask_yet", "no inference has run yet")
            orig = session.mask_to_original(session.last_prob > 0.5)
            headers = click_count_headers(session)
            if format == "rle":
                return JSONResponse(rle_encode(orig), headers=headers)
            if format == "png":
                from PIL import Image

                buf = io.BytesIO()
                Image.fromarray(orig.astype(np.uint8) * 255, mode="L").save(buf, "PNG")
                return Response(buf.getvalue(), media_type="image/png",
                                headers=headers)
            raise ApiError(422, "bad_format",
                           f"format must be 'png' or 'rle', got {format!r}")

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        session = store.get(sid)
        with session.lock:
            if not session.history:
                raise ApiError(409, "nothing_to_undo", "no clicks to undo")
            session.history.pop()
            session.state.clicks = session.state.clicks[:len(session.history)]
            if session.history:
                top = session.history[-1]
                session.state.set_prev_mask(top.prev_mask.copy())
                session.last_prob = top.last_prob.copy()
            else:
                session.state.set_prev_mask(None)
                session.last_prob = None
            return JSONResponse(state_payload(session),
                                headers=click_count_headers(session))

    @app.post("/sessions/{sid}/reset")
    def reset(sid: str):
        session = store.get(sid)
        with session.lock:
            session.state = InteractionState(side, side)
            session.history.clear()
            session.last_prob = None
            return JSONResponse(state_payload(session),
                                headers=click_count_headers(session))

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        store.delete(sid)
        return {"deleted": True}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "image_side": side, "click_radius": radius,
                "sessions": len(store)}

    if frontend_dir is not None:
        from starlette.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="frontend")

    return app
