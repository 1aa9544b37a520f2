"""Exception hierarchy shared across the package.

Every error carries a stable ``kind`` string so per-sample failures can be
serialized into results files and matched by scripts without parsing messages.
"""

from __future__ import annotations


class CoordSegError(Exception):
    """Base class for all typed errors raised by this package."""

    kind = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
        # Character span in the source text, attached by the extraction layer
        # when a parsed quadruple fails downstream validation.
        self.span: tuple[int, int] | None = None


class ConfigError(CoordSegError):
    """Invalid configuration value (CLI flag, config file, or constructor)."""

    kind = "config"


class BoxValidationError(CoordSegError):
    """A box or coordinate quadruple violates its invariants."""

    kind = "box_validation"


class NonFiniteCoordinates(BoxValidationError):
    kind = "non_finite"


class CoordinatesOutOfRange(BoxValidationError):
    """A component lies outside [0, 1] in strict validation mode."""

    kind = "out_of_range"


class DegenerateBox(BoxValidationError):
    """x1 >= x2 or y1 >= y2, i.e. the box has no area."""

    kind = "degenerate"


class BoxOutOfBounds(BoxValidationError):
    """A pixel box extends outside the image it is bound to."""

    kind = "out_of_bounds"


class MixedCoordinateSpaces(CoordSegError):
    """Metric called with one normalized and one pixel-space box."""

    kind = "mixed_spaces"


class NoQuadrupleFound(CoordSegError):
    """Detector text contains no sequence of exactly four numbers."""

    kind = "no_quadruple"


class PixelValuesWithoutDims(CoordSegError):
    """Parsed values look like pixels (> 1) but no image dims were supplied."""

    kind = "pixels_without_dims"


class MaskDecodeError(CoordSegError):
    """Malformed mask payload; ``offset`` is the byte position of the fault."""

    kind = "mask_decode"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MaskDimensionMismatch(CoordSegError):
    """Segmenter returned a mask whose dims differ from the input image."""

    kind = "mask_dims"


class DatasetError(CoordSegError):
    """Annotation files missing, malformed, or internally inconsistent."""

    kind = "dataset"


class BackendTimeout(CoordSegError):
    """Backend call exceeded its configured timeout."""

    kind = "timeout"


class TransportFailure(CoordSegError):
    """Connection-level failure or a response violating the wire protocol."""

    kind = "transport"


class NonSuccessStatus(CoordSegError):
    """Backend answered with a non-200 HTTP status."""

    kind = "http_status"

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"backend returned HTTP {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt
