"""HTTP shim exposing a vision-language detector and a promptable segmenter."""

from .adapters import (
    DetectorAdapter,
    SamSegmenter,
    SegmenterAdapter,
    StubDetector,
    StubSegmenter,
    VlmDetector,
)
from .app import create_app
from .config import ServerConfig, load_config
from .rle import encode_rle

__version__ = "0.1.0"

__all__ = [
    "DetectorAdapter",
    "SamSegmenter",
    "SegmenterAdapter",
    "ServerConfig",
    "StubDetector",
    "StubSegmenter",
    "VlmDetector",
    "create_app",
    "encode_rle",
    "load_config",
]
