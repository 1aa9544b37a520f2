"""Detector and segmenter backends: contracts, mocks, and HTTP clients.

A detector maps (image, prompt) to raw text; a segmenter maps (image,
pixel box) to a binary mask. Both are modeled as small request/response
types plus anything exposing ``detect``/``segment``. HTTP clients speak a
fixed JSON protocol:

* ``POST {endpoint}/v1/detect``  body ``{"image_b64", "image_format",
  "prompt"}`` -> ``200 {"text"}``
* ``POST {endpoint}/v1/segment`` body ``{"image_b64", "image_format",
  "box": [x1, y1, x2, y2] integers}`` -> ``200 {"mask_format": "rle"|"png",
  "mask_b64"}``
* errors: non-200 with ``{"error"}``

Retries re-send byte-identical payloads and fire only on timeouts and
transport failures — a well-formed model response is never re-requested,
because stochastic models would silently resample.
"""

from __future__ import annotations

import base64
import binascii
import random
import struct
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import requests
import requests.adapters

from .errors import (
    BackendTimeout,
    ConfigError,
    MaskDimensionMismatch,
    NonSuccessStatus,
    TransportFailure,
)
from .geometry import ImageDims, NormBox, PixelBox
from .imaging import BinaryMask, box_to_mask, decode_mask, encode_mask

__all__ = [
    "DetectorRequest",
    "DetectorResponse",
    "SegmenterRequest",
    "SegmenterResponse",
    "BackendConfig",
    "Detector",
    "Segmenter",
    "detect",
    "segment",
    "make_mock_detector",
    "MockDetector",
    "ReferenceSegmenter",
    "REFUSAL_TEXT",
    "detector_request_to_wire",
    "detector_request_from_wire",
    "detector_response_to_wire",
    "detector_response_from_wire",
    "segmenter_request_to_wire",
    "segmenter_request_from_wire",
    "segmenter_response_to_wire",
    "segmenter_response_from_wire",
    "HttpDetector",
    "HttpSegmenter",
]

REFUSAL_TEXT = "I cannot find the object."

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _png_dims(data: bytes) -> ImageDims:
    if len(data) < 24 or data[:8] != _PNG_MAGIC or data[12:16] != b"IHDR":
        raise ConfigError("image bytes are not a PNG")
    w, h = struct.unpack(">II", data[16:24])
    return ImageDims(w, h)


@dataclass(frozen=True)
class DetectorRequest:
    image: bytes
    prompt: str
    image_format: str = "png"

    def __post_init__(self):
        if not self.image:
            raise ConfigError("detector request needs image bytes")
        if not self.prompt:
            raise ConfigError("detector request needs a nonempty prompt")
        if self.image_format != "png":
            raise ConfigError(f"unsupported image format {self.image_format!r}")


@dataclass(frozen=True)
class DetectorResponse:
    text: str


@dataclass(frozen=True)
class SegmenterRequest:
    image: bytes
    box: PixelBox
    image_format: str = "png"

    def __post_init__(self):
        if not self.image:
            raise ConfigError("segmenter request needs image bytes")
        if self.image_format != "png":
            raise ConfigError(f"unsupported image format {self.image_format!r}")
        self.box.check_bounds(_png_dims(self.image))

    def image_dims(self) -> ImageDims:
        return _png_dims(self.image)


@dataclass(frozen=True)
class SegmenterResponse:
    mask: BinaryMask


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    timeout_ms: int = 120000
    retries: int = 1  # additional attempts after the first
    auth_token: str | None = None
    pool_size: int = 8

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout_ms}")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")
        if self.pool_size < 1:
            raise ConfigError(f"pool_size must be >= 1, got {self.pool_size}")


@runtime_checkable
class Detector(Protocol):
    def detect(self, req: DetectorRequest) -> DetectorResponse: ...


@runtime_checkable
class Segmenter(Protocol):
    def segment(self, req: SegmenterRequest) -> SegmenterResponse: ...


def detect(backend: Detector, req: DetectorRequest) -> DetectorResponse:
    return backend.detect(req)


def segment(backend: Segmenter, req: SegmenterRequest) -> SegmenterResponse:
    return backend.segment(req)


# --- mocks -----------------------------------------------------------------


def _format_box(b: tuple[float, float, float, float]) -> str:
    return f"[{b[0]:.6f},{b[1]:.6f},{b[2]:.6f},{b[3]:.6f}]"


@dataclass(frozen=True)
class _BoundMockDetector:
    """A mock pinned to one sample id; produced by MockDetector.for_sample."""

    parent: "MockDetector"
    sample_id: str

    def detect(self, req: DetectorRequest) -> DetectorResponse:
        return self.parent._detect_for(self.sample_id, req)


@dataclass(frozen=True)
class MockDetector:
    """Scripted detector for tests and offline runs.

    Behaviors: ``perfect`` emits the sample's ground-truth box to six
    decimals; ``jitter`` adds seeded Gaussian noise per component, clamped
    to [0, 1]; ``refuse`` emits non-numeric text. The ground truth comes
    from ``gt_source`` (sample id -> NormBox); ids absent from it refuse.

    The evaluation runner binds a sample via :meth:`for_sample` before
    calling ``detect`` — the mock keys on the sample id, never on image
    bytes, so overlays and re-encodings cannot break the pairing. Noise is
    derived from (seed, sample id), making results independent of call
    order and safe under concurrency.
    """

    behavior: str
    gt_source: dict[str, NormBox] | None = None
    sigma: float = 0.0
    seed: int = 0
    delay_s: float = 0.0

    def __post_init__(self):
        if self.behavior not in ("perfect", "jitter", "refuse"):
            raise ConfigError(f"unknown mock behavior {self.behavior!r}")
        if self.sigma < 0:
            raise ConfigError(f"jitter sigma must be >= 0, got {self.sigma}")
        if self.delay_s < 0:
            raise ConfigError(f"delay must be >= 0, got {self.delay_s}")

    def for_sample(self, sample) -> _BoundMockDetector:
        return _BoundMockDetector(self, sample.sample_id)

    def detect(self, req: DetectorRequest) -> DetectorResponse:
        # unbound use (no sample context): behaves like an unknown sample
        return self._detect_for("", req)

    def _detect_for(self, sample_id: str, req: DetectorRequest) -> DetectorResponse:
        if self.delay_s:
            time.sleep(self.delay_s)
        if self.behavior == "refuse":
            return DetectorResponse(REFUSAL_TEXT)
        gt = (self.gt_source or {}).get(sample_id)
        if gt is None:
            return DetectorResponse(REFUSAL_TEXT)
        values = gt.as_tuple()
        if self.behavior == "jitter":
            rng = random.Random(f"{self.seed}:{sample_id}")
            values = tuple(
                min(1.0, max(0.0, v + rng.gauss(0.0, self.sigma))) for v in values
            )
        return DetectorResponse(_format_box(values))


def make_mock_detector(
    behavior: str,
    gt_source: dict[str, NormBox] | None = None,
    sigma: float = 0.0,
    seed: int = 0,
    delay_s: float = 0.0,
) -> MockDetector:
    return MockDetector(
        behavior=behavior,
        gt_source=gt_source,
        sigma=sigma,
        seed=seed,
        delay_s=delay_s,
    )


@dataclass(frozen=True)
class ReferenceSegmenter:
    """Fills the prompted box — the identity baseline for pipeline tests."""

    delay_s: float = 0.0

    def segment(self, req: SegmenterRequest) -> SegmenterResponse:
        if self.delay_s:
            time.sleep(self.delay_s)
        return SegmenterResponse(box_to_mask(req.box, req.image_dims()))


# --- wire codecs -----------------------------------------------------------


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(field: str, payload: dict) -> bytes:
    value = payload.get(field)
    if not isinstance(value, str):
        raise ConfigError(f"wire payload missing string field {field!r}")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ConfigError(f"field {field!r} is not valid base64: {exc}") from exc


def detector_request_to_wire(req: DetectorRequest) -> dict:
    return {
        "image_b64": _b64(req.image),
        "image_format": req.image_format,
        "prompt": req.prompt,
    }


def detector_request_from_wire(payload: dict) -> DetectorRequest:
    if not isinstance(payload.get("prompt"), str):
        raise ConfigError("wire payload missing string field 'prompt'")
    return DetectorRequest(
        image=_unb64("image_b64", payload),
        prompt=payload["prompt"],
        image_format=payload.get("image_format", "png"),
    )


def detector_response_to_wire(resp: DetectorResponse) -> dict:
    return {"text": resp.text}


def detector_response_from_wire(payload: dict) -> DetectorResponse:
    if not isinstance(payload.get("text"), str):
        raise ConfigError("wire payload missing string field 'text'")
    return DetectorResponse(text=payload["text"])


def segmenter_request_to_wire(req: SegmenterRequest) -> dict:
    corners = req.box.as_tuple()
    ints = [int(v) for v in corners]
    if any(i != v for i, v in zip(ints, corners)):
        raise ConfigError(
            f"segmenter box must have integer corners on the wire, got {corners}"
        )
    return {
        "image_b64": _b64(req.image),
        "image_format": req.image_format,
        "box": ints,
    }


def segmenter_request_from_wire(payload: dict) -> SegmenterRequest:
    box = payload.get("box")
    if (
        not isinstance(box, (list, tuple))
        or len(box) != 4
        or any(isinstance(v, bool) or not isinstance(v, int) for v in box)
    ):
        raise ConfigError("wire field 'box' must be four integers")
    return SegmenterRequest(
        image=_unb64("image_b64", payload),
        box=PixelBox(*(float(v) for v in box)),
        image_format=payload.get("image_format", "png"),
    )


def segmenter_response_to_wire(resp: SegmenterResponse, mask_format: str = "rle") -> dict:
    return {
        "mask_format": mask_format,
        "mask_b64": _b64(encode_mask(resp.mask, mask_format)),
    }


def segmenter_response_from_wire(payload: dict) -> SegmenterResponse:
    fmt = payload.get("mask_format")
    if fmt not in ("rle", "png"):
        raise ConfigError(f"wire field 'mask_format' must be rle|png, got {fmt!r}")
    return SegmenterResponse(mask=decode_mask(_unb64("mask_b64", payload), fmt))


# --- HTTP clients ----------------------------------------------------------


def _make_session(cfg: BackendConfig) -> requests.Session:
    session = requests.Session()
    adapter = requests.adapters.HTTPAdapter(
        pool_connections=cfg.pool_size, pool_maxsize=cfg.pool_size
    )
    session.mount("http://", adapter)
    session.mount("https://", adapter)
    return session


def _post_json(session: requests.Session, cfg: BackendConfig, path: str, body: dict) -> dict:
    url = cfg.endpoint.rstrip("/") + path
    headers = {}
    if cfg.auth_token:
        headers["Authorization"] = f"Bearer {cfg.auth_token}"
    attempts = 1 + cfg.retries
    last_exc: Exception | None = None
    for _ in range(attempts):
        try:
            resp = session.post(
                url, json=body, headers=headers, timeout=cfg.timeout_ms / 1000.0
            )
        except requests.Timeout as exc:
            last_exc = BackendTimeout(f"{url}: timed out after {cfg.timeout_ms} ms")
            last_exc.__cause__ = exc
            continue
        except requests.RequestException as exc:
            last_exc = TransportFailure(f"{url}: {exc}")
            last_exc.__cause__ = exc
            continue
        if resp.status_code != 200:
            excerpt = resp.text[:200]
            try:
                excerpt = resp.json().get("error", excerpt)
            except ValueError:
                pass
            raise NonSuccessStatus(resp.status_code, excerpt)
        try:
            data = resp.json()
        except ValueError as exc:
            # the response arrived; do not retry lest the model resample
            raise TransportFailure(f"{url}: response is not JSON") from exc
        if not isinstance(data, dict):
            raise TransportFailure(f"{url}: response JSON is not an object")
        return data
    raise last_exc


class HttpDetector:
    """Detector client for the /v1/detect wire endpoint."""

    def __init__(self, cfg: BackendConfig, session: requests.Session | None = None):
        self._cfg = cfg
        self._session = session or _make_session(cfg)

    def detect(self, req: DetectorRequest) -> DetectorResponse:
        body = detector_request_to_wire(req)
        data = _post_json(self._session, self._cfg, "/v1/detect", body)
        try:
            return detector_response_from_wire(data)
        except ConfigError as exc:
            raise TransportFailure(f"malformed detect response: {exc}") from exc


class HttpSegmenter:
    """Segmenter client for the /v1/segment wire endpoint."""

    def __init__(self, cfg: BackendConfig, session: requests.Session | None = None):
        self._cfg = cfg
        self._session = session or _make_session(cfg)

    def segment(self, req: SegmenterRequest) -> SegmenterResponse:
        body = segmenter_request_to_wire(req)
        data = _post_json(self._session, self._cfg, "/v1/segment", body)
        try:
            resp = segmenter_response_from_wire(data)
        except ConfigError as exc:
            raise TransportFailure(f"malformed segment response: {exc}") from exc
        got = (resp.mask.width, resp.mask.height)
        want = req.image_dims()
        if got != (want.width, want.height):
            raise MaskDimensionMismatch(
                f"mask is {got[0]}x{got[1]}, image is {want.width}x{want.height}"
            )
        return resp
