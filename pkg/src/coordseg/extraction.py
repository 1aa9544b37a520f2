"""Pull a coordinate quadruple out of free-form detector text.

Detector backends return whatever the underlying model printed; this module
finds the first group of exactly four numbers and turns it into a validated
:class:`~coordseg.geometry.NormBox`. Numbers may be wrapped in brackets or
parentheses or stand bare, separated by commas and/or whitespace. Plain
decimals, scientific notation, and a leading ``+`` are accepted; locale
decimal commas are not (a comma always separates).

Values are treated as normalized when all four are <= 1 (1.0 itself counts
as normalized) and as pixel coordinates otherwise, which requires image
dims. Everything here is pure and thread-safe.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import (
    CoordSegError,
    NonFiniteCoordinates,
    NoQuadrupleFound,
    PixelValuesWithoutDims,
)
from .geometry import ImageDims, NormBox, validate_coordinates

__all__ = ["ExtractionOutcome", "parse_coordinate_text"]

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
# the gap between two numbers of one group: optional comma amid whitespace
_SEPARATOR = re.compile(r"\s*,?\s*")


@dataclass(frozen=True)
class ExtractionOutcome:
    """A parsed box plus where in the raw text it came from."""

    box: NormBox
    source_span: tuple[int, int]


def _number_groups(text: str) -> list[list[re.Match]]:
    groups: list[list[re.Match]] = []
    current: list[re.Match] = []
    for m in _NUMBER.finditer(text):
        if current and not _SEPARATOR.fullmatch(text, current[-1].end(), m.start()):
            groups.append(current)
            current = []
        current.append(m)
    if current:
        groups.append(current)
    return groups


def parse_coordinate_text(
    text: str, dims: ImageDims | None = None, mode: str = "strict"
) -> ExtractionOutcome:
    """Extract the leftmost four-number group as a normalized box.

    Groups are maximal runs of numbers separated only by commas and/or
    whitespace; only a run of exactly four qualifies. If any value exceeds
    1 the group is read as pixel coordinates and divided by ``dims``
    (required in that case); the result then passes through
    ``validate_coordinates(mode)``. Validation errors carry the character
    span of the offending group in ``.span``.
    """
    for group in _number_groups(text):
        if len(group) != 4:
            continue
        span = (group[0].start(), group[-1].end())
        values = tuple(float(m.group()) for m in group)
        try:
            if any(not math.isfinite(v) for v in values):
                raise NonFiniteCoordinates(
                    f"quadruple contains a non-finite value: {values}"
                )
            if any(v > 1.0 for v in values):
                if dims is None:
                    raise PixelValuesWithoutDims(
                        f"values {values} exceed 1 but no image dims were given"
                    )
                values = (
                    values[0] / dims.width,
                    values[1] / dims.height,
                    values[2] / dims.width,
                    values[3] / dims.height,
                )
            box = validate_coordinates(values, mode=mode)
        except CoordSegError as exc:
            exc.span = span
            raise
        return ExtractionOutcome(box=box, source_span=span)
    excerpt = text[:60] + ("..." if len(text) > 60 else "")
    raise NoQuadrupleFound(f"no four-number group in text: {excerpt!r}")
