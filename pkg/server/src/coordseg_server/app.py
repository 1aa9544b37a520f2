"""FastAPI application implementing the detector/segmenter wire protocol.

Routes (field names are normative and checked bit-exact by the client side):

- ``POST /v1/detect``   {"image_b64", "image_format", "prompt"} -> {"text"}
- ``POST /v1/segment``  {"image_b64", "image_format", "box"}    -> {"mask_format", "mask_b64"}
- ``GET  /v1/health``   -> {"status": "ok"}

Error semantics: 400 for malformed request bodies (missing/mistyped fields,
empty prompt, degenerate or out-of-image boxes), 422 for payloads whose
image bytes cannot be decoded, 500 for inference failures. Every non-200
body is ``{"error": "<message>"}``.

Boundary rules: the generated text is returned untouched (no server-side
parsing), and the box prompt is used exactly as received — never
normalized, clamped, or reordered. Images wider/taller than
``max_side`` are downscaled for the detector only; the segmenter always
sees full resolution so masks stay pixel-exact. Soft segmenter scores are
binarized at the fixed threshold 0.5 (scores above 0.5 are foreground).
"""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .adapters import (
    DetectorAdapter,
    SegmenterAdapter,
    SerializedAdapter,
    build_detector,
    build_segmenter,
)
from .config import ServerConfig
from .rle import encode_rle

BINARIZE_THRESHOLD = 0.5


class _RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _fail(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise _RequestError(400, "request body is not valid JSON") from None
    if not isinstance(body, dict):
        raise _RequestError(400, "request body must be a JSON object")
    return body


def _string_field(body: dict, name: str) -> str:
    if name not in body:
        raise _RequestError(400, f"missing field {name!r}")
    value = body[name]
    if not isinstance(value, str) or not value:
        raise _RequestError(400, f"field {name!r} must be a non-empty string")
    return value


def _decode_image(body: dict) -> Image.Image:
    encoded = _string_field(body, "image_b64")
    _string_field(body, "image_format")  # advisory; decoding sniffs the bytes
    try:
        raw = base64.b64decode(encoded, validate=True)
    except (binascii.Error, ValueError):
        raise _RequestError(422, "image_b64 is not valid base64") from None
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (UnidentifiedImageError, OSError):
        raise _RequestError(422, "image bytes cannot be decoded") from None
    return image


def _box_field(body: dict) -> tuple[int, int, int, int]:
    if "box" not in body:
        raise _RequestError(400, "missing field 'box'")
    box = body["box"]
    if (
        not isinstance(box, list)
        or len(box) != 4
        or any(not isinstance(v, int) or isinstance(v, bool) for v in box)
    ):
        raise _RequestError(400, "field 'box' must be [x1, y1, x2, y2] integers")
    x1, y1, x2, y2 = box
    if x1 >= x2 or y1 >= y2:
        raise _RequestError(400, f"box {box} is degenerate (needs x1 < x2, y1 < y2)")
    return x1, y1, x2, y2


def _check_box_bounds(box: tuple[int, int, int, int], image: Image.Image):
    x1, y1, x2, y2 = box
    width, height = image.size
    if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
        raise _RequestError(
            400, f"box {list(box)} lies outside the {width}x{height} image"
        )


def _shrink_for_detector(image: Image.Image, max_side: int) -> Image.Image:
    longest = max(image.size)
    if longest <= max_side:
        return image
    scale = max_side / longest
    new_size = (
        max(1, round(image.size[0] * scale)),
        max(1, round(image.size[1] * scale)),
    )
    return image.resize(new_size, Image.Resampling.LANCZOS)


def create_app(
    config: ServerConfig | None = None,
    detector: DetectorAdapter | None = None,
    segmenter: SegmenterAdapter | None = None,
) -> FastAPI:
    """Build the app; adapters can be injected, e.g. recording stubs in tests."""
    cfg = config or ServerConfig()
    detector = SerializedAdapter(detector or build_detector(cfg))
    segmenter = SerializedAdapter(segmenter or build_segmenter(cfg))

    app = FastAPI(title="coordseg-server", docs_url=None, redoc_url=None)

    @app.exception_handler(_RequestError)
    async def _on_request_error(request: Request, exc: _RequestError):
        return _fail(exc.status, exc.message)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/v1/detect")
    async def detect(request: Request):
        body = await _json_body(request)
        prompt = _string_field(body, "prompt")
        if not prompt.strip():
            raise _RequestError(400, "field 'prompt' must be a non-empty string")
        image = _decode_image(body)
        image = _shrink_for_detector(image, cfg.max_side)
        try:
            text = await run_in_threadpool(detector.generate, image, prompt)
        except Exception as exc:
            return _fail(500, f"detector inference failed: {exc}")
        if not isinstance(text, str):
            return _fail(500, "detector inference failed: adapter returned non-text")
        return {"text": text}

    @app.post("/v1/segment")
    async def segment(request: Request):
        body = await _json_body(request)
        box = _box_field(body)
        image = _decode_image(body)
        _check_box_bounds(box, image)
        try:
            scores = await run_in_threadpool(segmenter.segment, image, box)
        except Exception as exc:
            return _fail(500, f"segmenter inference failed: {exc}")
        if not isinstance(scores, np.ndarray) or scores.ndim != 2:
            return _fail(500, "segmenter inference failed: adapter returned non-mask")
        width, height = image.size
        if scores.shape != (height, width):
            return _fail(
                500,
                f"segmenter inference failed: mask shape {scores.shape} "
                f"does not match {height}x{width} image",
            )
        mask = scores if scores.dtype == np.bool_ else scores > BINARIZE_THRESHOLD
        encoded = base64.b64encode(encode_rle(mask)).decode("ascii")
        return {"mask_format": "rle", "mask_b64": encoded}

    return app
