from __future__ import annotations

import numpy as np
import pytest
from PIL import Image as PILImage

from coordseg.datasets import AnnotatedSample, DatasetSlice
from coordseg.geometry import ImageDims, NormBox, PixelBox, normalize_box


def build_synthetic_slice(root, n: int = 20) -> tuple[DatasetSlice, dict[str, NormBox]]:
    """A slice of n samples over one 100x100 image, plus its gt in normalized form.

    Integer boxes on a 100-pixel extent normalize to exact two-decimal
    fractions, so a detector echoing them to six decimals round-trips
    bit-exactly through format -> parse -> metric computation.
    """
    rng = np.random.default_rng(99)
    img_path = root / "synth.png"
    arr = rng.integers(0, 256, size=(100, 100, 3), dtype=np.uint8)
    PILImage.fromarray(arr, "RGB").save(img_path)
    dims = ImageDims(100, 100)
    samples = []
    gt_norm: dict[str, NormBox] = {}
    for i in range(n):
        x1 = i
        y1 = (3 * i) % 50
        box = PixelBox(x1, y1, x1 + 20 + i, y1 + 30 + i)
        sid = f"synth:{i:03d}"
        samples.append(
            AnnotatedSample(
                sample_id=sid,
                image_path=img_path,
                dims=dims,
                category="object",
                gt_box=box,
            )
        )
        gt_norm[sid] = normalize_box(box, dims)
    return DatasetSlice(tuple(samples), "synthetic"), gt_norm


@pytest.fixture
def synthetic_slice(tmp_path):
    return build_synthetic_slice(tmp_path)
