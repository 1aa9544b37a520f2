"""Raster images, binary masks, grid overlays, and mask wire codecs.

Images are 8-bit RGB; masks are one bit per pixel. Both wrap read-only
numpy arrays, so instances can be shared freely across threads.

Mask wire formats:

* ``png`` -- standard 8-bit grayscale, set pixels as 255, clear as 0.
* ``rle`` -- ``CSRLE1`` magic, then width and height as unsigned 32-bit
  little-endian, then alternating run lengths (unsigned 32-bit LE)
  starting with the run of zeros, row-major.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import (
    ConfigError,
    MaskDecodeError,
    MaskDimensionMismatch,
)
from .geometry import ImageDims, PixelBox, rasterize_box

__all__ = [
    "Image",
    "BinaryMask",
    "GridConfig",
    "apply_grid_overlay",
    "box_to_mask",
    "mask_iou",
    "encode_mask",
    "decode_mask",
]

_RLE_MAGIC = b"CSRLE1"


def _read_only(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr or out.base is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


class Image:
    """Immutable 8-bit RGB raster, pixels row-major with shape (H, W, 3)."""

    def __init__(self, pixels: np.ndarray):
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ConfigError(f"expected (H, W, 3) pixel array, got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ConfigError(f"image must be at least 1x1, got {pixels.shape}")
        if pixels.dtype != np.uint8:
            raise ConfigError(f"expected uint8 samples, got {pixels.dtype}")
        self._pixels = _read_only(pixels)

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.width, self.height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels)
        )

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height})"

    @classmethod
    def filled(cls, width: int, height: int, color: tuple[int, int, int]) -> "Image":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(arr)

    @classmethod
    def from_png(cls, data: bytes) -> "Image":
        try:
            with PILImage.open(io.BytesIO(data)) as im:
                return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))
        except (UnidentifiedImageError, OSError) as exc:
            raise MaskDecodeError(f"cannot decode image: {exc}", 0) from exc

    @classmethod
    def from_file(cls, path) -> "Image":
        with PILImage.open(path) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        PILImage.fromarray(self._pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        PILImage.fromarray(self._pixels, mode="RGB").save(path, format="PNG")


class BinaryMask:
    """Immutable one-bit-per-pixel mask, row-major with shape (H, W)."""

    def __init__(self, bits: np.ndarray):
        if bits.ndim != 2:
            raise ConfigError(f"expected (H, W) bit array, got {bits.shape}")
        if bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ConfigError(f"mask must be at least 1x1, got {bits.shape}")
        self._bits = _read_only(bits.astype(bool, copy=False))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.width, self.height)

    def popcount(self) -> int:
        return int(np.count_nonzero(self._bits))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(
            np.array_equal(self._bits, other._bits)
        )

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, set={self.popcount()})"

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class GridConfig:
    """Overlay settings for the spatial-reference grid.

    ``cells_per_axis`` counts grid cells, so a 9-cell grid draws 8 interior
    lines per axis at anchors round(i * extent / cells), i = 1..cells-1.
    A line of width w occupies columns (or rows) [anchor, anchor + w),
    clipped to the image. Image borders are only drawn when ``draw_border``
    is set, at [0, w) and [extent - w, extent).
    """

    cells_per_axis: int = 9
    opacity: float = 0.3
    line_width: int = 1
    line_color: tuple[int, int, int] = (0, 0, 0)
    draw_border: bool = False

    def __post_init__(self):
        if self.cells_per_axis < 2:
            raise ConfigError(
                f"cells_per_axis must be >= 2, got {self.cells_per_axis}"
            )
        if not 0.0 <= self.opacity <= 1.0:
            raise ConfigError(f"opacity must be in [0, 1], got {self.opacity}")
        if self.line_width < 1:
            raise ConfigError(f"line_width must be >= 1, got {self.line_width}")
        if len(self.line_color) != 3 or any(
            not 0 <= c <= 255 for c in self.line_color
        ):
            raise ConfigError(f"line_color must be an RGB triple, got {self.line_color}")


def _line_anchors(extent: int, cfg: GridConfig) -> list[int]:
    anchors = [
        int(np.floor(i * extent / cfg.cells_per_axis + 0.5))
        for i in range(1, cfg.cells_per_axis)
    ]
    if cfg.draw_border:
        anchors = [0, *anchors, max(0, extent - cfg.line_width)]
    return anchors


def apply_grid_overlay(img: Image, cfg: GridConfig) -> Image:
    """Alpha-blend grid lines onto a copy of ``img``.

    Line pixels become round((1 - opacity) * src + opacity * line_color)
    per channel, rounding half away from zero; every other pixel is
    byte-identical to the input. The input image is never mutated.
    """
    on_line = np.zeros((img.height, img.width), dtype=bool)
    for x in _line_anchors(img.width, cfg):
        on_line[:, x : x + cfg.line_width] = True
    for y in _line_anchors(img.height, cfg):
        on_line[y : y + cfg.line_width, :] = True

    src = img.pixels.astype(np.float64)
    color = np.array(cfg.line_color, dtype=np.float64)
    blended = np.floor((1.0 - cfg.opacity) * src + cfg.opacity * color + 0.5)
    out = img.pixels.copy()
    out[on_line] = blended[on_line].astype(np.uint8)
    return Image(out)


def box_to_mask(b: PixelBox, d: ImageDims) -> BinaryMask:
    """Fill the half-open box with set bits (the reference segmentation).

    Non-integer corners are rounded half away from zero first, so integer
    boxes hit exactly (x2 - x1) * (y2 - y1) pixels.
    """
    b.check_bounds(d)
    r = rasterize_box(b, d)
    bits = np.zeros((d.height, d.width), dtype=bool)
    bits[int(r.y1) : int(r.y2), int(r.x1) : int(r.x2)] = True
    return BinaryMask(bits)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Set-bit intersection over union; 1.0 when both masks are empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise MaskDimensionMismatch(
            f"mask dims differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return inter / union


def encode_mask(m: BinaryMask, format: str) -> bytes:
    if format == "png":
        buf = io.BytesIO()
        arr = m.bits.astype(np.uint8) * 255
        PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
        return buf.getvalue()
    if format == "rle":
        flat = m.bits.ravel().astype(np.uint8)
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds)
        if flat[0] == 1:  # stream starts with a zeros run by definition
            runs = np.concatenate(([0], runs))
        header = _RLE_MAGIC + struct.pack("<II", m.width, m.height)
        return header + runs.astype("<u4").tobytes()
    raise ConfigError(f"unknown mask format {format!r}")


def decode_mask(data: bytes, format: str) -> BinaryMask:
    if format == "png":
        try:
            with PILImage.open(io.BytesIO(data)) as im:
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            raise MaskDecodeError(f"cannot decode PNG mask: {exc}", 0) from exc
        return BinaryMask(arr > 127)
    if format == "rle":
        return _decode_rle(data)
    raise ConfigError(f"unknown mask format {format!r}")


def _decode_rle(data: bytes) -> BinaryMask:
    if data[: len(_RLE_MAGIC)] != _RLE_MAGIC:
        raise MaskDecodeError("bad magic, expected CSRLE1", 0)
    if len(data) < len(_RLE_MAGIC) + 8:
        raise MaskDecodeError("truncated header", len(data))
    w, h = struct.unpack_from("<II", data, len(_RLE_MAGIC))
    if w == 0 or h == 0:
        raise MaskDecodeError(f"zero dimension {w}x{h}", len(_RLE_MAGIC))
    payload_start = len(_RLE_MAGIC) + 8
    payload = data[payload_start:]
    if len(payload) % 4 != 0:
        raise MaskDecodeError(
            "run list truncated mid-value", payload_start + 4 * (len(payload) // 4)
        )
    runs = np.frombuffer(payload, dtype="<u4")
    total = int(runs.sum(dtype=np.uint64))
    expected = w * h
    if total > expected:
        # locate the first run that overflows the pixel budget
        overflow = int(np.searchsorted(np.cumsum(runs, dtype=np.uint64), expected, "right"))
        raise MaskDecodeError(
            f"runs cover {total} pixels, mask has {expected}",
            payload_start + 4 * overflow,
        )
    if total < expected:
        raise MaskDecodeError(
            f"runs cover only {total} of {expected} pixels", len(data)
        )
    values = np.arange(len(runs), dtype=np.uint8) % 2
    flat = np.repeat(values, runs).astype(bool)
    return BinaryMask(flat.reshape(h, w))
