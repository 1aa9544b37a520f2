"""Axis-aligned box arithmetic: normalization, validation, and the IoU family.

Boxes use the half-open convention: a box covers [x1, x2) x [y1, y2), so its
area is (x2 - x1) * (y2 - y1) and, for integer corners, equals the number of
raster pixels it contains. Two coordinate spaces exist and never mix:

* :class:`NormBox` -- corners as fractions of image extent in [0, 1].
* :class:`PixelBox` -- corners in (real-valued) pixels.

All functions here are pure and all types immutable; concurrent use needs no
coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import (
    BoxOutOfBounds,
    ConfigError,
    CoordinatesOutOfRange,
    DegenerateBox,
    MixedCoordinateSpaces,
    NonFiniteCoordinates,
)

__all__ = [
    "ImageDims",
    "NormBox",
    "PixelBox",
    "Box",
    "MetricTriple",
    "validate_coordinates",
    "normalize_box",
    "denormalize_box",
    "rasterize_box",
    "iou",
    "giou",
    "ciou",
    "metric_triple",
    "enclosing_box",
]


@dataclass(frozen=True)
class ImageDims:
    """Width and height of an image, in pixels."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(
                f"image dims must be positive, got {self.width}x{self.height}"
            )


def _check_corners(x1: float, y1: float, x2: float, y2: float, cls: str):
    for name, v in (("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)):
        if not math.isfinite(v):
            raise NonFiniteCoordinates(f"{cls}.{name} is not finite: {v!r}")
    if x1 >= x2:
        raise DegenerateBox(f"{cls}: x1 ({x1}) must be < x2 ({x2})")
    if y1 >= y2:
        raise DegenerateBox(f"{cls}: y1 ({y1}) must be < y2 ({y2})")


@dataclass(frozen=True)
class NormBox:
    """Box with corners expressed as fractions of image extent, in [0, 1]."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        _check_corners(self.x1, self.y1, self.x2, self.y2, "NormBox")
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if v < 0.0 or v > 1.0:
                raise CoordinatesOutOfRange(
                    f"NormBox.{name} = {v} outside [0, 1]"
                )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class PixelBox:
    """Box with corners in pixels; integer corners are not required.

    Covers the half-open region [x1, x2) x [y1, y2): the top-left corner is
    inclusive, the bottom-right exclusive.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        _check_corners(self.x1, self.y1, self.x2, self.y2, "PixelBox")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def check_bounds(self, dims: ImageDims) -> "PixelBox":
        """Verify the box lies within ``dims``; returns self for chaining."""
        if self.x1 < 0:
            raise BoxOutOfBounds(f"PixelBox.x1 = {self.x1} < 0")
        if self.y1 < 0:
            raise BoxOutOfBounds(f"PixelBox.y1 = {self.y1} < 0")
        if self.x2 > dims.width:
            raise BoxOutOfBounds(
                f"PixelBox.x2 = {self.x2} > image width {dims.width}"
            )
        if self.y2 > dims.height:
            raise BoxOutOfBounds(
                f"PixelBox.y2 = {self.y2} > image height {dims.height}"
            )
        return self


Box = Union[NormBox, PixelBox]


@dataclass(frozen=True)
class MetricTriple:
    """IoU plus its generalized and complete variants for one box pair."""

    iou: float
    giou: float
    ciou: float


def validate_coordinates(
    raw: tuple[float, float, float, float], mode: str = "strict"
) -> NormBox:
    """Turn a raw quadruple into a :class:`NormBox`.

    ``strict`` rejects any component outside [0, 1]; ``clamp`` pulls each
    component into [0, 1] first. Either way the result must be properly
    ordered (x1 < x2, y1 < y2) or :class:`DegenerateBox` is raised.
    """
    if mode not in ("strict", "clamp"):
        raise ConfigError(f"unknown validation mode {mode!r}")
    if len(raw) != 4:
        raise ConfigError(f"expected 4 coordinates, got {len(raw)}")
    x1, y1, x2, y2 = (float(v) for v in raw)
    for name, v in (("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)):
        if not math.isfinite(v):
            raise NonFiniteCoordinates(f"coordinate {name} is not finite: {v!r}")
    if mode == "clamp":
        x1, y1, x2, y2 = (min(1.0, max(0.0, v)) for v in (x1, y1, x2, y2))
    else:
        for name, v in (("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)):
            if v < 0.0 or v > 1.0:
                raise CoordinatesOutOfRange(
                    f"coordinate {name} = {v} outside [0, 1]"
                )
    if x1 >= x2:
        raise DegenerateBox(f"x1 ({x1}) must be < x2 ({x2}) after validation")
    if y1 >= y2:
        raise DegenerateBox(f"y1 ({y1}) must be < y2 ({y2}) after validation")
    return NormBox(x1, y1, x2, y2)


def normalize_box(b: PixelBox, d: ImageDims) -> NormBox:
    """Map pixel corners to fractions of the image extent."""
    b.check_bounds(d)
    return NormBox(
        b.x1 / d.width, b.y1 / d.height, b.x2 / d.width, b.y2 / d.height
    )


def denormalize_box(nb: NormBox, d: ImageDims) -> PixelBox:
    """Map normalized corners back to (real-valued) pixels."""
    return PixelBox(
        nb.x1 * d.width, nb.y1 * d.height, nb.x2 * d.width, nb.y2 * d.height
    )


def _round_half_away(v: float) -> float:
    return math.floor(v + 0.5) if v >= 0 else math.ceil(v - 0.5)


def rasterize_box(b: PixelBox, d: ImageDims) -> PixelBox:
    """Round corners to integers (half away from zero) and clamp to ``d``.

    Raises :class:`DegenerateBox` if rounding collapses a sub-pixel box.
    """
    x1 = min(float(d.width), max(0.0, _round_half_away(b.x1)))
    y1 = min(float(d.height), max(0.0, _round_half_away(b.y1)))
    x2 = min(float(d.width), max(0.0, _round_half_away(b.x2)))
    y2 = min(float(d.height), max(0.0, _round_half_away(b.y2)))
    return PixelBox(x1, y1, x2, y2)


def _require_same_space(a: Box, b: Box):
    if type(a) is not type(b):
        raise MixedCoordinateSpaces(
            f"cannot compare {type(a).__name__} with {type(b).__name__}"
        )


def _area(b: Box) -> float:
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def _intersection_area(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def enclosing_box(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both inputs."""
    _require_same_space(a, b)
    return type(a)(
        min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2)
    )


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 when disjoint, 1 iff equal."""
    _require_same_space(a, b)
    inter = _intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = _area(a) + _area(b) - inter
    return inter / union


def giou(a: Box, b: Box) -> float:
    """IoU minus the enclosing-box area not covered by the union.

    Range (-1, 1]; equals IoU when the enclosing box is exactly the union's
    bounding box (in particular for identical boxes).
    """
    _require_same_space(a, b)
    inter = _intersection_area(a, b)
    union = _area(a) + _area(b) - inter
    c = enclosing_box(a, b)
    c_area = _area(c)
    base = inter / union if inter > 0.0 else 0.0
    # c_area >= union holds exactly in real arithmetic; the max() guards the
    # float path so giou <= iou is preserved bit-for-bit.
    return base - max(0.0, c_area - union) / c_area


def ciou(a: Box, b: Box) -> float:
    """IoU minus a center-distance penalty and an aspect-ratio penalty.

    The penalty terms follow the canonical complete-IoU form:
    rho^2 / c^2 with rho the center distance and c the enclosing-box
    diagonal, plus alpha * v where v = (4/pi^2) * (atan(w_a/h_a) -
    atan(w_b/h_b))^2 and alpha = v / ((1 - IoU) + v), with alpha = 0
    when v = 0.
    """
    _require_same_space(a, b)
    base = iou(a, b)
    c = enclosing_box(a, b)
    cw = c.x2 - c.x1
    ch = c.y2 - c.y1
    c_diag_sq = cw * cw + ch * ch
    if c_diag_sq == 0.0:
        return base  # both boxes are the same degenerate point
    ax = (a.x1 + a.x2) / 2.0 - (b.x1 + b.x2) / 2.0
    ay = (a.y1 + a.y2) / 2.0 - (b.y1 + b.y2) / 2.0
    rho_sq = ax * ax + ay * ay
    v = (4.0 / math.pi**2) * (
        math.atan((a.x2 - a.x1) / (a.y2 - a.y1))
        - math.atan((b.x2 - b.x1) / (b.y2 - b.y1))
    ) ** 2
    alpha = 0.0 if v == 0.0 else v / ((1.0 - base) + v)
    return base - rho_sq / c_diag_sq - alpha * v


def metric_triple(a: Box, b: Box) -> MetricTriple:
    """All three metrics for one pair, in the same coordinate space."""
    return MetricTriple(iou=iou(a, b), giou=giou(a, b), ciou=ciou(a, b))
