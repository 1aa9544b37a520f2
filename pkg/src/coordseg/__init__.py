"""Coordinate-grounded detection and segmentation evaluation toolkit.

The package is organized around a small set of value types (boxes, image
dims, masks) and pure functions over them; I/O and network access live in
:mod:`coordseg.backends` and :mod:`coordseg.datasets` only.
"""

from .backends import (
    REFUSAL_TEXT,
    BackendConfig,
    DetectorRequest,
    HttpDetector,
    HttpSegmenter,
    MockDetector,
    ReferenceSegmenter,
    SegmenterRequest,
    detect,
    make_mock_detector,
    segment,
)
from .datasets import (
    AnnotatedSample,
    DatasetSlice,
    load_coco,
    load_voc,
    prompt_from_category,
    sample_subset,
)
from .errors import (
    BackendTimeout,
    BoxOutOfBounds,
    ConfigError,
    CoordSegError,
    CoordinatesOutOfRange,
    DatasetError,
    DegenerateBox,
    MaskDecodeError,
    MaskDimensionMismatch,
    MixedCoordinateSpaces,
    NonFiniteCoordinates,
    NonSuccessStatus,
    NoQuadrupleFound,
    PixelValuesWithoutDims,
    TransportFailure,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    PerSampleResult,
    emit_report,
    evaluate_sample,
    report_from_json,
    run_eval,
)
from .extraction import ExtractionOutcome, parse_coordinate_text
from .geometry import (
    ImageDims,
    MetricTriple,
    NormBox,
    PixelBox,
    ciou,
    denormalize_box,
    enclosing_box,
    giou,
    iou,
    metric_triple,
    normalize_box,
    rasterize_box,
    validate_coordinates,
)
from .imaging import (
    BinaryMask,
    GridConfig,
    Image,
    apply_grid_overlay,
    box_to_mask,
    decode_mask,
    encode_mask,
    mask_iou,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSample",
    "BackendConfig",
    "BackendTimeout",
    "BinaryMask",
    "BoxOutOfBounds",
    "ConfigError",
    "CoordSegError",
    "CoordinatesOutOfRange",
    "DatasetError",
    "DatasetSlice",
    "DegenerateBox",
    "DetectorRequest",
    "EvalConfig",
    "EvalReport",
    "ExtractionOutcome",
    "GridConfig",
    "HttpDetector",
    "HttpSegmenter",
    "Image",
    "ImageDims",
    "MaskDecodeError",
    "MaskDimensionMismatch",
    "MetricTriple",
    "MixedCoordinateSpaces",
    "MockDetector",
    "NoQuadrupleFound",
    "NonFiniteCoordinates",
    "NonSuccessStatus",
    "NormBox",
    "PerSampleResult",
    "PixelBox",
    "PixelValuesWithoutDims",
    "REFUSAL_TEXT",
    "ReferenceSegmenter",
    "SegmenterRequest",
    "TransportFailure",
    "apply_grid_overlay",
    "box_to_mask",
    "ciou",
    "decode_mask",
    "denormalize_box",
    "detect",
    "emit_report",
    "enclosing_box",
    "encode_mask",
    "evaluate_sample",
    "giou",
    "iou",
    "load_coco",
    "load_voc",
    "make_mock_detector",
    "mask_iou",
    "metric_triple",
    "normalize_box",
    "parse_coordinate_text",
    "prompt_from_category",
    "rasterize_box",
    "report_from_json",
    "run_eval",
    "sample_subset",
    "segment",
    "validate_coordinates",
]
