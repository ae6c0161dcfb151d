"""Tests for the HTTP session service: lifecycle, coordinate mapping between
original and model resolution, mask delivery (PNG and run-length), undo/reset
semantics, error bodies and session-store eviction."""

import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from icmf.service import (MAX_IMAGE_SIDE, Session, SessionStore, create_app,
                          mask_summary, rle_decode, rle_encode)
from icmf.clicks import InteractionState
from icmf.stubs import DiskStub

SIDE = 64
RADIUS = 5


def png_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, "PNG")
    return buf.getvalue()


def rgb(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.random((h, w, 3)) * 255).astype(np.uint8)


def nearest_resize_oracle(mask, out_h, out_w):
    """Independent nearest-neighbor scaling via source-index flooring."""
    in_h, in_w = mask.shape
    out = np.zeros((out_h, out_w), dtype=bool)
    for i in range(out_h):
        si = min(in_h - 1, int((i + 0.5) * in_h / out_h))
        for j in range(out_w):
            sj = min(in_w - 1, int((j + 0.5) * in_w / out_w))
            out[i, j] = mask[si, sj]
    return out


@pytest.fixture()
def client():
    app = create_app(DiskStub(SIDE, RADIUS), image_side=SIDE,
                     click_radius=RADIUS)
    return TestClient(app)


def make_session(client, h=64, w=64, seed=0, gt=None):
    if gt is None:
        resp = client.post("/sessions", content=png_bytes(rgb(h, w, seed)))
    else:
        files = {"image": ("img.png", png_bytes(rgb(h, w, seed)), "image/png"),
                 "gt": ("gt.png", png_bytes(gt.astype(np.uint8) * 255),
                        "image/png")}
        resp = client.post("/sessions", files=files)
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestRunLengthEncoding:
    def test_frozen_small_example(self):
        mask = np.array([[0, 1, 1], [1, 0, 0]], dtype=bool)
        assert rle_encode(mask) == {"h": 2, "w": 3, "runs": [1, 3]}

    def test_empty_and_full(self):
        assert rle_encode(np.zeros((2, 2), bool))["runs"] == []
        assert rle_encode(np.ones((2, 2), bool))["runs"] == [0, 4]

    def test_roundtrip_random(self):
        rng = np.random.default_rng(80)
        for _ in range(25):
            mask = rng.random((13, 7)) < 0.5
            np.testing.assert_array_equal(rle_decode(rle_encode(mask)), mask)


class TestMaskSummary:
    def test_empty(self):
        assert mask_summary(np.zeros((4, 4), bool)) == {"area": 0, "bbox": None}

    def test_bbox_corners(self):
        mask = np.zeros((10, 10), bool)
        mask[2, 3] = mask[7, 8] = True
        assert mask_summary(mask) == {"area": 2, "bbox": [2, 3, 7, 8]}


class TestSessionCreation:
    def test_raw_png_body(self, client):
        data = make_session(client, 48, 32)
        assert data["height"] == 48 and data["width"] == 32
        assert len(data["session_id"]) == 32

    def test_multipart_with_gt(self, client):
        gt = np.zeros((40, 40), bool)
        gt[10:30, 10:30] = True
        data = make_session(client, 40, 40, gt=gt)
        assert "session_id" in data

    def test_undecodable_body_is_400_decode_error(self, client):
        resp = client.post("/sessions", content=b"this is not a png")
        assert resp.status_code == 400
        body = resp.json()
        assert body["code"] == "decode_error"
        assert "message" in body

    def test_multipart_without_image_field_is_400(self, client):
        resp = client.post("/sessions",
                           files={"other": ("x.png", b"123", "image/png")})
        assert resp.status_code == 400
        assert resp.json()["code"] == "missing_image"

    def test_oversized_image_is_413(self, client):
        tall = np.zeros((MAX_IMAGE_SIDE + 1, 4, 3), dtype=np.uint8)
        resp = client.post("/sessions", content=png_bytes(tall))
        assert resp.status_code == 413
        assert resp.json()["code"] == "image_too_large"

    def test_gt_size_mismatch_is_400(self, client):
        gt = np.ones((20, 20), np.uint8) * 255
        files = {"image": ("i.png", png_bytes(rgb(40, 40)), "image/png"),
                 "gt": ("g.png", png_bytes(gt), "image/png")}
        resp = client.post("/sessions", files=files)
        assert resp.status_code == 400
        assert resp.json()["code"] == "gt_size_mismatch"


class TestClickFlow:
    def test_click_returns_state_and_count_header(self, client):
        sid = make_session(client)["session_id"]
        resp = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 32, "col": 32, "positive": True})
        assert resp.status_code == 200
        assert resp.headers["X-Click-Count"] == "1"
        body = resp.json()
        assert body["clicks"] == 1
        assert body["mask_summary"]["area"] > 0
        assert body["mask_summary"]["bbox"] is not None

    def test_negative_click_shrinks_stub_mask(self, client):
        sid = make_session(client)["session_id"]
        first = client.post(f"/sessions/{sid}/clicks",
                            json={"row": 32, "col": 32, "positive": True}).json()
        second = client.post(f"/sessions/{sid}/clicks",
                             json={"row": 32, "col": 32,
                                   "positive": False}).json()
        assert second["mask_summary"]["area"] < first["mask_summary"]["area"]
        assert second["clicks"] == 2

    def test_first_click_negative_rejected(self, client):
        sid = make_session(client)["session_id"]
        resp = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 1, "col": 1, "positive": False})
        assert resp.status_code == 422
        assert resp.json()["code"] == "first_click_not_positive"

    def test_bounds_checked_in_original_coordinates(self, client):
        sid = make_session(client, h=30, w=20)["session_id"]
        ok = client.post(f"/sessions/{sid}/clicks",
                         json={"row": 29, "col": 19, "positive": True})
        assert ok.status_code == 200
        bad = client.post(f"/sessions/{sid}/clicks",
                          json={"row": 30, "col": 0, "positive": True})
        assert bad.status_code == 422
        assert bad.json()["code"] == "out_of_bounds"

    def test_missing_field_rejected(self, client):
        sid = make_session(client)["session_id"]
        resp = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 3, "positive": True})
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid_click"

    def test_unknown_session_is_404(self, client):
        resp = client.post("/sessions/deadbeef/clicks",
                           json={"row": 1, "col": 1, "positive": True})
        assert resp.status_code == 404
        assert resp.json()["code"] == "session_not_found"

    def test_iou_reported_when_gt_uploaded(self, client):
        gt = np.zeros((64, 64), bool)
        gt[20:44, 20:44] = True
        sid = make_session(client, gt=gt)["session_id"]
        body = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 32, "col": 32,
                                 "positive": True}).json()
        assert 0.0 < body["iou"] < 1.0

    def test_no_iou_without_gt(self, client):
        sid = make_session(client)["session_id"]
        body = client.post(f"/sessions/{sid}/clicks",
                           json={"row": 32, "col": 32,
                                 "positive": True}).json()
        assert "iou" not in body


class TestMaskDelivery:
    def _click(self, client, sid, row=32, col=32, positive=True):
        return client.post(f"/sessions/{sid}/clicks",
                           json={"row": row, "col": col, "positive": positive})

    def test_mask_before_any_click_is_409(self, client):
        sid = make_session(client)["session_id"]
        resp = client.get(f"/sessions/{sid}/mask")
        assert resp.status_code == 409
        assert resp.json()["code"] == "no_mask_yet"

    def test_png_and_rle_agree(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid)
        png_resp = client.get(f"/sessions/{sid}/mask?format=png")
        assert png_resp.status_code == 200
        assert png_resp.headers["content-type"] == "image/png"
        with Image.open(io.BytesIO(png_resp.content)) as im:
            png_mask = np.asarray(im) > 128
        rle_resp = client.get(f"/sessions/{sid}/mask?format=rle")
        np.testing.assert_array_equal(rle_decode(rle_resp.json()), png_mask)

    def test_png_values_are_binary_0_255(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid)
        resp = client.get(f"/sessions/{sid}/mask")
        with Image.open(io.BytesIO(resp.content)) as im:
            values = set(np.unique(np.asarray(im)))
        assert values <= {0, 255}

    def test_bad_format_is_422(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid)
        resp = client.get(f"/sessions/{sid}/mask?format=bmp")
        assert resp.status_code == 422
        assert resp.json()["code"] == "bad_format"

    def test_mask_geometry_on_non_square_image(self, client):
        # 100x50 image pads to a 100-square, scales to the 64-side model;
        # recompute the whole pipeline with independent oracles
        h, w = 100, 50
        sid = make_session(client, h=h, w=w)["session_id"]
        row, col = 50, 25
        self._click(client, sid, row=row, col=col)
        rle = client.get(f"/sessions/{sid}/mask?format=rle").json()
        assert (rle["h"], rle["w"]) == (h, w)
        got = rle_decode(rle)
        # oracle: click in model coords, stub disk, nearest upscale, crop
        square = max(h, w)
        scale = SIDE / square
        mr = min(SIDE - 1, int((row + 0.5) * scale))
        mc = min(SIDE - 1, int((col + 0.5) * scale))
        rr, cc = np.mgrid[0:SIDE, 0:SIDE]
        disk = (rr - mr) ** 2 + (cc - mc) ** 2 <= RADIUS * RADIUS
        expected = nearest_resize_oracle(disk, square, square)[:h, :w]
        np.testing.assert_array_equal(got, expected)


class TestUndoResetDelete:
    def _click(self, client, sid, row, col, positive=True):
        return client.post(f"/sessions/{sid}/clicks",
                           json={"row": row, "col": col, "positive": positive})

    def test_undo_restores_previous_state(self, client):
        sid = make_session(client)["session_id"]
        first = self._click(client, sid, 32, 32).json()
        self._click(client, sid, 10, 10)
        resp = client.post(f"/sessions/{sid}/undo")
        assert resp.status_code == 200
        assert resp.headers["X-Click-Count"] == "1"
        body = resp.json()
        assert body["clicks"] == 1
        assert body["mask_summary"] == first["mask_summary"]

    def test_undo_to_zero_clears_mask(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid, 32, 32)
        body = client.post(f"/sessions/{sid}/undo").json()
        assert body["clicks"] == 0
        assert body["mask_summary"] == {"area": 0, "bbox": None}
        assert client.get(f"/sessions/{sid}/mask").status_code == 409

    def test_undo_with_no_history_is_409(self, client):
        sid = make_session(client)["session_id"]
        resp = client.post(f"/sessions/{sid}/undo")
        assert resp.status_code == 409
        assert resp.json()["code"] == "nothing_to_undo"

    def test_undo_then_new_click_works(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid, 32, 32)
        self._click(client, sid, 10, 10)
        client.post(f"/sessions/{sid}/undo")
        resp = self._click(client, sid, 50, 50)
        assert resp.status_code == 200
        assert resp.headers["X-Click-Count"] == "2"

    def test_reset_clears_everything_but_keeps_session(self, client):
        sid = make_session(client)["session_id"]
        self._click(client, sid, 32, 32)
        resp = client.post(f"/sessions/{sid}/reset")
        assert resp.json()["clicks"] == 0
        assert client.get(f"/sessions/{sid}/mask").status_code == 409
        again = self._click(client, sid, 20, 20)
        assert again.status_code == 200

    def test_delete_then_404(self, client):
        sid = make_session(client)["session_id"]
        resp = client.delete(f"/sessions/{sid}")
        assert resp.status_code == 200
        assert resp.json() == {"deleted": True}
        assert client.delete(f"/sessions/{sid}").status_code == 404
        assert self._click(client, sid, 1, 1).status_code == 404


class TestHealth:
    def test_healthz_reports_configuration(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["image_side"] == SIDE
        assert body["click_radius"] == RADIUS
        assert body["sessions"] == 0

    def test_session_count_tracks_creation(self, client):
        make_session(client)
        make_session(client, seed=1)
        assert client.get("/healthz").json()["sessions"] == 2


def _dummy_session(sid):
    return Session(id=sid, image=np.zeros((3, 8, 8)), orig_h=8, orig_w=8,
                   square_side=8, model_side=8,
                   state=InteractionState(8, 8), gt=None)


class TestSessionStore:
    def test_lru_eviction_at_capacity(self):
        store = SessionStore(ttl_seconds=3600, max_sessions=2)
        store.add(_dummy_session("a"))
        store.add(_dummy_session("b"))
        store.get("a")  # refresh a: b becomes least recently used
        store.add(_dummy_session("c"))
        assert len(store) == 2
        store.get("a")
        store.get("c")
        from icmf.service import ApiError
        with pytest.raises(ApiError) as err:
            store.get("b")
        assert err.value.status == 404

    def test_ttl_expiry(self):
        store = SessionStore(ttl_seconds=0.05, max_sessions=8)
        store.add(_dummy_session("old"))
        time.sleep(0.1)
        store.add(_dummy_session("new"))
        assert len(store) == 1
        store.get("new")
        from icmf.service import ApiError
        with pytest.raises(ApiError):
            store.get("old")


class TestCoordinateMapping:
    def test_half_pixel_center_scaling(self):
        session = _dummy_session("s")
        session.square_side, session.model_side = 100, 64
        assert session.to_model_coords(0, 0) == (0, 0)
        assert session.to_model_coords(50, 25) == (32, 16)
        assert session.to_model_coords(99, 99) == (63, 63)

    def test_identity_when_sides_match(self):
        session = _dummy_session("s")
        session.square_side = session.model_side = 64
        for v in (0, 17, 63):
            assert session.to_model_coords(v, v) == (v, v)

    def test_clamped_to_model_grid(self):
        session = _dummy_session("s")
        session.square_side, session.model_side = 10, 64
        r, c = session.to_model_coords(9, 9)
        assert r <= 63 and c <= 63
